fn main() {
    std::process::exit(betaforge::cli::run(std::env::args_os()));
}
