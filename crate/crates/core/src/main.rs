fn main() {
    std::process::exit(latent_quartet::cli::run(std::env::args_os()));
}
