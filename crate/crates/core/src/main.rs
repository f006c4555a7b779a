fn main() {
    std::process::exit(latent_spectra::cli::run(std::env::args_os()));
}
