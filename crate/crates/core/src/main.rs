fn main() {
    std::process::exit(physec::cli::run(std::env::args_os()));
}
