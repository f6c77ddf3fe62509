fn main() {
    std::process::exit(morphan::cli::run(std::env::args_os()));
}
