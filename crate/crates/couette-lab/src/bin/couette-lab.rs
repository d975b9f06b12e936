fn main() {
    std::process::exit(couette_lab::cli::run(std::env::args_os()));
}
