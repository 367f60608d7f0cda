fn main() {
    std::process::exit(hhar::harness::cli::run(std::env::args_os()));
}
