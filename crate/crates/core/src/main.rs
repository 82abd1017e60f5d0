fn main() {
    std::process::exit(hazelab::cli::run(std::env::args_os()));
}
