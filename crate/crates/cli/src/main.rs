fn main() {
    std::process::exit(ceds_cli::run(std::env::args_os()));
}
