fn main() {
    std::process::exit(polqkd_cli::main_with_args(std::env::args_os()));
}
