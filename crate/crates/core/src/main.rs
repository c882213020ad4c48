fn main() {
    std::process::exit(msmoments::cli::main_with_args(std::env::args_os()));
}
