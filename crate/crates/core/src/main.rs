fn main() {
    std::process::exit(hybridssr::cli::run_cli(std::env::args_os()));
}
