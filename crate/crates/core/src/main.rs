fn main() {
    std::process::exit(lso::cli::run(std::env::args_os()));
}
