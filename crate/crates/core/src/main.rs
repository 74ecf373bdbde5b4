fn main() {
    std::process::exit(ctxlasso::cli::run(std::env::args_os()));
}
