fn main() {
    std::process::exit(docket_cli::run(std::env::args_os()));
}
