fn main() {
    std::process::exit(valuate::cli::run(std::env::args_os()));
}
