fn main() {
    std::process::exit(vrrt::cli::run(std::env::args_os()));
}
