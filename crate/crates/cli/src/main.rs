fn main() {
    std::process::exit(nesprindt_cli::main_with_args(std::env::args_os()));
}
