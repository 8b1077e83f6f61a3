fn main() {
    std::process::exit(gustlab::cli::main_with_args(std::env::args_os()));
}
