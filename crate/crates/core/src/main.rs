fn main() {
    std::process::exit(trajsafe_core::cli::run_from(std::env::args_os()));
}
