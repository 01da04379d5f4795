fn main() {
    std::process::exit(selfsim::cli::main_with_args(std::env::args_os()));
}
