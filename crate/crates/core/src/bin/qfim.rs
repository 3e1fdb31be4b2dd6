fn main() {
    std::process::exit(qfim_core::cli::main_with_args(std::env::args_os()));
}
