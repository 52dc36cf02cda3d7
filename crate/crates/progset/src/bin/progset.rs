fn main() {
    std::process::exit(progset::cli::main_with_args(std::env::args_os()));
}
