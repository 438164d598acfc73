fn main() {
    std::process::exit(triplesurv::cli::main_with_args(std::env::args_os()));
}
