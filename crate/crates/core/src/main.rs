fn main() {
    std::process::exit(wmkit::cli::run(std::env::args_os()));
}
