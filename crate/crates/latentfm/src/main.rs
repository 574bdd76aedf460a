fn main() {
    std::process::exit(latentfm::cli::run(std::env::args_os()));
}
