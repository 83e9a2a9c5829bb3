fn main() {
    std::process::exit(expsum_cli::run(std::env::args_os()));
}
