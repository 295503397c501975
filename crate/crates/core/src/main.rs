fn main() {
    std::process::exit(volsr::cli::run(std::env::args_os()));
}
