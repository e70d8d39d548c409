fn main() {
    std::process::exit(selkern::cli::run(std::env::args_os()));
}
