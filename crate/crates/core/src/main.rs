fn main() {
    std::process::exit(tvme::cli::run(std::env::args_os()));
}
