fn main() {
    std::process::exit(bugblitz::cli::run_from(std::env::args_os()));
}
