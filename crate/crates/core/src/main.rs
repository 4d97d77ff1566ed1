fn main() {
    std::process::exit(gradsign::cli::main_with_args(std::env::args_os()));
}
