fn main() {
    std::process::exit(aggruin::cli::main_with_args(std::env::args_os()));
}
