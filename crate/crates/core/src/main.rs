fn main() {
    std::process::exit(matree::cli::run(std::env::args_os()));
}
