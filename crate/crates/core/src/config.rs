//! Run configuration files.
//!
//! The format is one `key = value` per line, `#` starting a comment.
//! Values are numbers, `true`/`false`, double-quoted strings, or
//! bracketed comma-separated number lists:
//!
//! ```text
//! # cos nonlinearity away from resonance
//! mu = 1
//! f = "cos(s)"
//! N = 64
//! x0 = [0, 0.5]
//! ```
//!
//! The `run.json` written next to every output is accepted as well: a
//! flat JSON object with the same keys, where `null` means absent.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value as Json};

use crate::bifurcation::{DEFAULT_ROOT_GRID, DEFAULT_ROOT_INTERVAL};
use crate::expr::{Limits, ScalarFunction};
use crate::solver::{Mode, Problem, SolverOptions};
use crate::verify::OracleConfig;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Bool(bool),
    Str(String),
    List(Vec<f64>),
}

impl Value {
    fn type_name(&self) -> &'static str {
        match self {
            Value::Num(_) => "number",
            Value::Bool(_) => "boolean",
            Value::Str(_) => "string",
            Value::List(_) => "list",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: Option<String>,
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at_line(line: usize, message: impl Into<String>) -> Self {
        Self {
            key: None,
            line: Some(line),
            message: message.into(),
        }
    }

    fn for_key(key: &str, message: impl Into<String>) -> Self {
        Self {
            key: Some(key.to_string()),
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(key) = &self.key {
            write!(f, "key `{key}`: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Parsed but untyped entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, Value>,
}

impl RawConfig {
    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.get(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

pub fn parse_config(text: &str) -> Result<RawConfig, ConfigError> {
    let mut entries = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::at_line(line_no, "expected `key = value`"));
        };
        let key = key.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(ConfigError::at_line(line_no, format!("malformed key `{key}`")));
        }
        let value = parse_value(value.trim()).map_err(|m| ConfigError {
            key: Some(key.to_string()),
            line: Some(line_no),
            message: m,
        })?;
        if entries.insert(key.to_string(), value).is_some() {
            return Err(ConfigError {
                key: Some(key.to_string()),
                line: Some(line_no),
                message: "duplicate key".into(),
            });
        }
    }
    Ok(RawConfig { entries })
}

/// Drops a `#` comment that is not inside a string.
fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        match c {
            _ if escaped => escaped = false,
            '\\' if in_str => escaped = true,
            '"' => in_str = !in_str,
            '#' if !in_str => return &line[..i],
            _ => {}
        }
    }
    line
}

fn parse_value(text: &str) -> Result<Value, String> {
    if text.is_empty() {
        return Err("missing value".into());
    }
    if let Some(rest) = text.strip_prefix('"') {
        let mut out = String::new();
        let mut chars = rest.chars();
        while let Some(c) = chars.next() {
            match c {
                '"' => {
                    return if chars.as_str().trim().is_empty() {
                        Ok(Value::Str(out))
                    } else {
                        Err("trailing characters after string".into())
                    };
                }
                '\\' => match chars.next() {
                    Some(e @ ('"' | '\\')) => out.push(e),
                    Some(e) => return Err(format!("unknown escape `\\{e}`")),
                    None => return Err("unterminated string".into()),
                },
                c => out.push(c),
            }
        }
        return Err("unterminated string".into());
    }
    if let Some(inner) = text.strip_prefix('[') {
        let inner = inner
            .strip_suffix(']')
            .ok_or_else(|| "unterminated list".to_string())?
            .trim();
        if inner.is_empty() {
            return Ok(Value::List(Vec::new()));
        }
        return inner
            .split(',')
            .map(|item| parse_number(item.trim()))
            .collect::<Result<_, _>>()
            .map(Value::List);
    }
    match text {
        "true" => Ok(Value::Bool(true)),
        "false" => Ok(Value::Bool(false)),
        _ => parse_number(text).map(Value::Num),
    }
}

fn parse_number(text: &str) -> Result<f64, String> {
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("expected a finite number, got `{text}` (strings must be quoted)")),
    }
}

/// Reads a key = value file, or a `run.json` when the content is a JSON
/// object.
pub fn load_config(path: &Path) -> Result<RawConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        key: None,
        line: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    if text.trim_start().starts_with('{') {
        parse_json_config(&text)
    } else {
        parse_config(&text)
    }
}

pub fn parse_json_config(text: &str) -> Result<RawConfig, ConfigError> {
    let json: Json = serde_json::from_str(text).map_err(|e| ConfigError {
        key: None,
        line: Some(e.line()),
        message: format!("invalid JSON: {e}"),
    })?;
    let Json::Object(map) = json else {
        return Err(ConfigError::at_line(1, "expected a JSON object"));
    };
    let mut entries = BTreeMap::new();
    for (key, v) in map {
        let value = match v {
            Json::Null => continue,
            Json::Bool(b) => Value::Bool(b),
            Json::Number(n) => Value::Num(n.as_f64().unwrap_or(f64::NAN)),
            Json::String(s) => Value::Str(s),
            Json::Array(items) => Value::List(
                items
                    .iter()
                    .map(|x| x.as_f64())
                    .collect::<Option<_>>()
                    .ok_or_else(|| ConfigError::for_key(&key, "list entries must be numbers"))?,
            ),
            Json::Object(_) => return Err(ConfigError::for_key(&key, "nested objects not allowed")),
        };
        entries.insert(key, value);
    }
    Ok(RawConfig { entries })
}

/// Typed, consuming access to a [`RawConfig`]; leftover keys are errors.
struct Reader {
    entries: BTreeMap<String, Value>,
}

impl Reader {
    fn new(raw: RawConfig) -> Self {
        Self {
            entries: raw.entries,
        }
    }

    fn take(&mut self, key: &str) -> Option<Value> {
        self.entries.remove(key)
    }

    fn wrong(key: &str, want: &str, got: &Value) -> ConfigError {
        ConfigError::for_key(key, format!("expected {want}, got {}", got.type_name()))
    }

    fn real(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Num(v)) if v.is_finite() => Ok(Some(v)),
            Some(v) => Err(Self::wrong(key, "a finite number", &v)),
        }
    }

    fn count(&mut self, key: &str) -> Result<Option<usize>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Num(v)) if v >= 0.0 && v.fract() == 0.0 && v < 1e15 => Ok(Some(v as usize)),
            Some(v) => Err(Self::wrong(key, "a nonnegative integer", &v)),
        }
    }

    fn boolean(&mut self, key: &str) -> Result<Option<bool>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Bool(b)) => Ok(Some(b)),
            Some(v) => Err(Self::wrong(key, "true or false", &v)),
        }
    }

    fn string(&mut self, key: &str) -> Result<Option<String>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Str(s)) => Ok(Some(s)),
            Some(v) => Err(Self::wrong(key, "a quoted string", &v)),
        }
    }

    fn list(&mut self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::List(l)) => Ok(Some(l)),
            Some(v) => Err(Self::wrong(key, "a bracketed number list", &v)),
        }
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.entries.into_keys().next() {
            Some(key) => Err(ConfigError::for_key(&key, "unknown key")),
            None => Ok(()),
        }
    }
}

/// `f` with its optional declared limits.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionKeys {
    pub f: String,
    pub f_limit_neg: Option<f64>,
    pub f_limit_pos: Option<f64>,
}

impl FunctionKeys {
    fn read(r: &mut Reader) -> Result<Self, ConfigError> {
        let f = r
            .string("f")?
            .ok_or_else(|| ConfigError::for_key("f", "required"))?;
        let out = Self {
            f,
            f_limit_neg: r.real("f_limit_neg")?,
            f_limit_pos: r.real("f_limit_pos")?,
        };
        if out.f_limit_neg.is_some() != out.f_limit_pos.is_some() {
            return Err(ConfigError::for_key(
                "f_limit_neg",
                "f_limit_neg and f_limit_pos must be given together",
            ));
        }
        out.function()?;
        Ok(out)
    }

    pub fn function(&self) -> Result<ScalarFunction, ConfigError> {
        let f = ScalarFunction::parse(&self.f)
            .map_err(|e| ConfigError::for_key("f", e.to_string()))?;
        Ok(match (self.f_limit_neg, self.f_limit_pos) {
            (Some(neg), Some(pos)) => f.with_limits(Limits::new(neg, pos)),
            _ => f,
        })
    }

    fn write(&self, m: &mut Map<String, Json>) {
        m.insert("f".into(), self.f.clone().into());
        m.insert("f_limit_neg".into(), opt(self.f_limit_neg));
        m.insert("f_limit_pos".into(), opt(self.f_limit_pos));
    }
}

fn opt(v: Option<f64>) -> Json {
    v.map_or(Json::Null, Json::from)
}

fn read_solver(r: &mut Reader) -> Result<SolverOptions, ConfigError> {
    let d = SolverOptions::default();
    let opts = SolverOptions {
        degree: r.count("N")?.unwrap_or(d.degree),
        quad_order: r.count("quad_order")?,
        damping: r.real("damping")?.unwrap_or(d.damping),
        tol: r.real("tol")?.unwrap_or(d.tol),
        max_iters: r.count("max_iters")?.unwrap_or(d.max_iters),
        mode: match r.string("mode")? {
            Some(s) => s.parse::<Mode>().map_err(|m| ConfigError::for_key("mode", m))?,
            None => d.mode,
        },
        x0: r.list("x0")?,
        override_solvability: r.boolean("override_solvability")?.unwrap_or(false),
    };
    opts.validate()
        .map_err(|e| ConfigError::for_key("solver options", e.to_string()))?;
    if let Some(x0) = &opts.x0 {
        if x0.len() > opts.degree + 1 {
            return Err(ConfigError::for_key("x0", format!(
                "{} coefficients exceed N + 1 = {}",
                x0.len(),
                opts.degree + 1
            )));
        }
    }
    Ok(opts)
}

fn write_solver(o: &SolverOptions, m: &mut Map<String, Json>) {
    m.insert("N".into(), o.degree.into());
    m.insert("quad_order".into(), o.effective_quad_order().into());
    m.insert("damping".into(), o.damping.into());
    m.insert("tol".into(), o.tol.into());
    m.insert("max_iters".into(), o.max_iters.into());
    m.insert("mode".into(), o.mode.as_str().into());
    m.insert(
        "x0".into(),
        o.x0.as_ref().map_or(Json::Null, |v| Json::from(v.clone())),
    );
    m.insert("override_solvability".into(), o.override_solvability.into());
}

fn read_common(r: &mut Reader, subcommand: &str) -> Result<(PathBuf, u64), ConfigError> {
    if let Some(s) = r.string("subcommand")? {
        if s != subcommand {
            return Err(ConfigError::for_key(
                "subcommand",
                format!("config is for `{s}`, not `{subcommand}`"),
            ));
        }
    }
    let dir = r.string("output_dir")?.unwrap_or_else(|| "out".into());
    let seed = r.count("seed")?.unwrap_or(0) as u64;
    Ok((PathBuf::from(dir), seed))
}

fn write_common(sub: &str, dir: &Path, seed: u64, m: &mut Map<String, Json>) {
    m.insert("subcommand".into(), sub.into());
    m.insert("output_dir".into(), dir.display().to_string().into());
    m.insert("seed".into(), seed.into());
}

/// Resonant index or `μ`, exactly one of which is given.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Spectrum {
    Mu(f64),
    K(usize),
}

/// Keys of `solve` and `verify`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    pub spectrum: Spectrum,
    pub function: FunctionKeys,
    pub solver: SolverOptions,
    pub oracle: OracleConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl SolveConfig {
    pub fn from_raw(raw: RawConfig, subcommand: &str) -> Result<Self, ConfigError> {
        let mut r = Reader::new(raw);
        let (output_dir, seed) = read_common(&mut r, subcommand)?;
        let spectrum = match (r.real("mu")?, r.count("k")?) {
            (Some(mu), None) => Spectrum::Mu(mu),
            (None, Some(k)) => Spectrum::K(k),
            (Some(_), Some(_)) => return Err(ConfigError::for_key("mu", "give mu or k, not both")),
            (None, None) => return Err(ConfigError::for_key("mu", "one of mu or k is required")),
        };
        let function = FunctionKeys::read(&mut r)?;
        let solver = read_solver(&mut r)?;
        let d = OracleConfig::default();
        let oracle = OracleConfig {
            fine_quad_order: r.count("fine_quad_order")?,
            fd_step: r.real("fd_step")?.unwrap_or(d.fd_step),
            refinement_factor: r.count("refinement_factor")?.unwrap_or(d.refinement_factor),
        };
        if oracle.refinement_factor < 1 {
            return Err(ConfigError::for_key("refinement_factor", "must be at least 1"));
        }
        if let Spectrum::K(k) = spectrum {
            if k > solver.degree {
                return Err(ConfigError::for_key("k", format!("exceeds N = {}", solver.degree)));
            }
        }
        r.finish()?;
        Ok(Self {
            spectrum,
            function,
            solver,
            oracle,
            output_dir,
            seed,
        })
    }

    pub fn problem(&self) -> Result<Problem, ConfigError> {
        let f = self.function.function()?;
        Ok(match self.spectrum {
            Spectrum::Mu(mu) => Problem::with_mu(mu, f),
            Spectrum::K(k) => Problem::resonant(k, f),
        })
    }

    /// Every key with defaults filled in.
    pub fn to_json(&self, subcommand: &str) -> Json {
        let mut m = Map::new();
        write_common(subcommand, &self.output_dir, self.seed, &mut m);
        match self.spectrum {
            Spectrum::Mu(mu) => m.insert("mu".into(), mu.into()),
            Spectrum::K(k) => m.insert("k".into(), k.into()),
        };
        self.function.write(&mut m);
        write_solver(&self.solver, &mut m);
        m.insert(
            "fine_quad_order".into(),
            self.oracle.fine_order(self.solver.degree).into(),
        );
        m.insert("fd_step".into(), self.oracle.fd_step.into());
        m.insert("refinement_factor".into(), self.oracle.refinement_factor.into());
        Json::Object(m)
    }
}

/// Keys of `branch`.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchConfig {
    pub k: usize,
    pub function: FunctionKeys,
    pub alpha_interval: (f64, f64),
    pub root_grid: usize,
    /// Branch origin; when absent the `root_index`-th simple root on
    /// `alpha_interval` is used.
    pub alpha0: Option<f64>,
    pub root_index: usize,
    pub eps_max: f64,
    pub eps_min: f64,
    pub eps_points: usize,
    pub solver: SolverOptions,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl BranchConfig {
    pub fn from_raw(raw: RawConfig) -> Result<Self, ConfigError> {
        let mut r = Reader::new(raw);
        let (output_dir, seed) = read_common(&mut r, "branch")?;
        let k = r.count("k")?.ok_or_else(|| ConfigError::for_key("k", "required"))?;
        let function = FunctionKeys::read(&mut r)?;
        let alpha_interval = match r.list("alpha_interval")? {
            None => DEFAULT_ROOT_INTERVAL,
            Some(v) if v.len() == 2 && v[0] < v[1] => (v[0], v[1]),
            Some(_) => {
                return Err(ConfigError::for_key("alpha_interval", "expected [a, b] with a < b"))
            }
        };
        let root_grid = r.count("root_grid")?.unwrap_or(DEFAULT_ROOT_GRID);
        if root_grid < 2 {
            return Err(ConfigError::for_key("root_grid", "must be at least 2"));
        }
        let alpha0 = r.real("alpha0")?;
        let root_index = r.count("root_index")?.unwrap_or(0);
        let eps_max = r.real("eps_max")?.unwrap_or(0.1);
        let eps_min = r.real("eps_min")?.unwrap_or(1e-4);
        let eps_points = r.count("eps_points")?.unwrap_or(13);
        if !(eps_max > 0.0 && eps_min > 0.0 && eps_min <= eps_max) {
            return Err(ConfigError::for_key("eps_max", "need 0 < eps_min <= eps_max"));
        }
        let solver = read_solver(&mut r)?;
        if k > solver.degree {
            return Err(ConfigError::for_key("k", format!("exceeds N = {}", solver.degree)));
        }
        r.finish()?;
        Ok(Self {
            k,
            function,
            alpha_interval,
            root_grid,
            alpha0,
            root_index,
            eps_max,
            eps_min,
            eps_points,
            solver,
            output_dir,
            seed,
        })
    }

    pub fn to_json(&self) -> Json {
        let mut m = Map::new();
        write_common("branch", &self.output_dir, self.seed, &mut m);
        m.insert("k".into(), self.k.into());
        self.function.write(&mut m);
        m.insert(
            "alpha_interval".into(),
            vec![self.alpha_interval.0, self.alpha_interval.1].into(),
        );
        m.insert("root_grid".into(), self.root_grid.into());
        m.insert("alpha0".into(), opt(self.alpha0));
        m.insert("root_index".into(), self.root_index.into());
        m.insert("eps_max".into(), self.eps_max.into());
        m.insert("eps_min".into(), self.eps_min.into());
        m.insert("eps_points".into(), self.eps_points.into());
        write_solver(&self.solver, &mut m);
        Json::Object(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_value_kinds() {
        let raw = parse_config(
            "# header\nmu = 1.5  # trailing\nf = \"cos(s) # not a comment\"\n\
             override_solvability = true\nx0 = [0, -2.5e-1, 3]\nempty = []\n",
        )
        .unwrap();
        assert_eq!(raw.get("mu"), Some(&Value::Num(1.5)));
        assert_eq!(raw.get("f"), Some(&Value::Str("cos(s) # not a comment".into())));
        assert_eq!(raw.get("override_solvability"), Some(&Value::Bool(true)));
        assert_eq!(raw.get("x0"), Some(&Value::List(vec![0.0, -0.25, 3.0])));
        assert_eq!(raw.get("empty"), Some(&Value::List(vec![])));
    }

    #[test]
    fn syntax_errors_carry_line_and_key() {
        let e = parse_config("mu = 1\nf = cos(s)\n").unwrap_err();
        assert_eq!((e.line, e.key.as_deref()), (Some(2), Some("f")));
        let e = parse_config("mu = 1\nmu = 2\n").unwrap_err();
        assert_eq!(e.message, "duplicate key");
        assert!(parse_config("just words").is_err());
        assert!(parse_config("f = \"open").is_err());
        assert!(parse_config("x0 = [1, 2").is_err());
        assert!(parse_config("bad key = 1").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let raw = parse_config("mu = 1\nf = \"cos(s)\"\ntolerance = 1e-9\n").unwrap();
        let e = SolveConfig::from_raw(raw, "solve").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("tolerance"));
        assert!(e.to_string().contains("tolerance"));
    }

    #[test]
    fn typed_solve_config() {
        let raw = parse_config("k = 1\nf = \"atan(s)\"\nN = 32\nmode = \"picard\"\nx0 = [0, 0.8]\n")
            .unwrap();
        let c = SolveConfig::from_raw(raw, "solve").unwrap();
        assert_eq!(c.spectrum, Spectrum::K(1));
        assert_eq!(c.solver.degree, 32);
        assert_eq!(c.solver.mode, Mode::Picard);
        assert_eq!(c.solver.x0, Some(vec![0.0, 0.8]));
        assert_eq!(c.output_dir, PathBuf::from("out"));

        let both = parse_config("k = 1\nmu = 2\nf = \"s\"\n").unwrap();
        assert!(SolveConfig::from_raw(both, "solve").is_err());
        let neither = parse_config("f = \"s\"\n").unwrap();
        assert!(SolveConfig::from_raw(neither, "solve").is_err());
        let bad_f = parse_config("mu = 1\nf = \"foo(s)\"\n").unwrap();
        assert_eq!(SolveConfig::from_raw(bad_f, "solve").unwrap_err().key.as_deref(), Some("f"));
        let bad_n = parse_config("mu = 1\nf = \"s\"\nN = 2.5\n").unwrap();
        assert_eq!(SolveConfig::from_raw(bad_n, "solve").unwrap_err().key.as_deref(), Some("N"));
        let lone = parse_config("mu = 1\nf = \"s\"\nf_limit_pos = 1\n").unwrap();
        assert!(SolveConfig::from_raw(lone, "solve").is_err());
    }

    #[test]
    fn run_json_round_trip() {
        let raw = parse_config("mu = 1\nf = \"cos(s)\"\ntol = 1e-11\nx0 = [0.1]\n").unwrap();
        let c = SolveConfig::from_raw(raw, "solve").unwrap();
        let json = serde_json::to_string_pretty(&c.to_json("solve")).unwrap();
        let back = SolveConfig::from_raw(parse_json_config(&json).unwrap(), "solve").unwrap();
        assert_eq!(back.solver.quad_order, Some(c.solver.effective_quad_order()));
        assert_eq!(back.to_json("solve"), c.to_json("solve"));
        assert!(SolveConfig::from_raw(parse_json_config(&json).unwrap(), "verify").is_err());
    }

    #[test]
    fn branch_config_defaults() {
        let raw = parse_config("k = 1\nf = \"s^3 - s\"\nalpha_interval = [0.5, 5]\n").unwrap();
        let c = BranchConfig::from_raw(raw).unwrap();
        assert_eq!(c.alpha_interval, (0.5, 5.0));
        assert_eq!((c.eps_max, c.eps_min, c.eps_points), (0.1, 1e-4, 13));
        let json = serde_json::to_string(&c.to_json()).unwrap();
        let back = BranchConfig::from_raw(parse_json_config(&json).unwrap()).unwrap();
        assert_eq!(back.to_json(), c.to_json());
        let bad = parse_config("k = 1\nf = \"s\"\nalpha_interval = [2, 1]\n").unwrap();
        assert!(BranchConfig::from_raw(bad).is_err());
    }
}
