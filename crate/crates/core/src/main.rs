fn main() {
    std::process::exit(d2dsim::cli::main_with_args(std::env::args_os()));
}
