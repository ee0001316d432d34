fn main() {
    std::process::exit(normsol::cli::main_with_args(std::env::args_os()));
}
