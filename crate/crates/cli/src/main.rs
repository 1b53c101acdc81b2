fn main() {
    std::process::exit(stochflow_cli::main_with_args(std::env::args_os()));
}
