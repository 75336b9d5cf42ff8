fn main() {
    std::process::exit(sappkg_cli::run(std::env::args_os()));
}
