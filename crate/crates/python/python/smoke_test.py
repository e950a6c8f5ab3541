"""Quick end-to-end check of the compiled extension module."""

import json
import math
import sys

import legendre_bvp as lb


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    assert close(lb.eval_legendre(2, 0.5), -0.125, 1e-15)
    nodes, weights = lb.gauss_rule(8)
    assert close(sum(weights), 2.0, 1e-14)
    assert close(sum(w * t * t for t, w in zip(nodes, weights)), 2.0 / 3.0, 1e-14)
    assert lb.is_resonant(6.0) == 2
    assert lb.is_resonant(3.5) is None

    f = lb.Function("tanh(s) - 0.3")
    neg, pos = f.limits()
    assert close(neg, -1.3, 1e-6) and close(pos, 0.7, 1e-6)
    case, j1, j2 = lb.solvability(0, f)
    assert case == "k0_opposite_signs" and j1 * j2 < 0

    rep = lb.solve(f, k=0)
    assert rep.converged
    assert close(rep.eval(0.3), math.atanh(0.3), 1e-9)
    assert lb.oracle_residual(rep.coeffs, 0.0, f) < 1e-8
    assert json.loads(rep.to_json())["converged"] is True

    rep = lb.solve("cos(s)", mu=1.0)
    assert rep.converged and rep.residual_grid < 1e-8

    try:
        lb.solve("s^2", k=1)
    except lb.RefusedError:
        pass
    else:
        raise AssertionError("resonant solve without a solvability verdict ran")

    try:
        lb.Function("sin(")
    except ValueError:
        pass
    else:
        raise AssertionError("bad expression parsed")

    roots = lb.find_simple_roots("s^3 - s", 1, (0.5, 5.0))
    assert len(roots) == 1
    alpha0 = roots[0][0]
    assert close(lb.bifurcation_h("s^3 - s", 1, alpha0), 0.0, 1e-10)
    branch = lb.continue_branch("s^3 - s", 1, alpha0, lb.log_grid(0.1, 1e-3, 5), N=32)
    assert branch.truncated_at is None and branch.monotone
    assert close(branch.convergence_rate_estimate, 1.0, 0.1)

    assert lb.run_cli(["check", "--mu", "3.5"]) == 0
    print("smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
