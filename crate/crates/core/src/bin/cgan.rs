fn main() {
    std::process::exit(conformal_gan::cli::run(std::env::args_os()));
}
