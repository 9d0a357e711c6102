fn main() {
    std::process::exit(aionfit::cli::run(std::env::args_os()));
}
