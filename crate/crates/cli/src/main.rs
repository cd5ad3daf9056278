fn main() {
    std::process::exit(qmotion_cli::main_with_args(std::env::args_os()));
}
