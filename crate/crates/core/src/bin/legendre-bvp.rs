fn main() {
    std::process::exit(legendre_bvp::cli::run(std::env::args_os()));
}
