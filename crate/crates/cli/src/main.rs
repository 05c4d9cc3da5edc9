fn main() {
    std::process::exit(advneg_cli::main_with_args(std::env::args_os()));
}
