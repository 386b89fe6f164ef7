fn main() {
    std::process::exit(reshape_cli::run(std::env::args_os()));
}
