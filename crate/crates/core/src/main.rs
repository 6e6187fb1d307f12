fn main() {
    std::process::exit(dpem::cli::main_with_args(std::env::args_os()));
}
