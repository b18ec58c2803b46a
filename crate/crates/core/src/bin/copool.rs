fn main() {
    std::process::exit(copool::cli::run(std::env::args_os()));
}
