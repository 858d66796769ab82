fn main() {
    std::process::exit(volsample::cli::run_from(std::env::args_os()));
}
