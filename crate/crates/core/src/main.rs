fn main() {
    std::process::exit(g2lstm::cli::run(std::env::args_os()));
}
