fn main() {
    std::process::exit(nerbias::cli::main_with_args(std::env::args_os()));
}
