fn main() {
    std::process::exit(nlhodge::cli::main_from_args(std::env::args_os()));
}
