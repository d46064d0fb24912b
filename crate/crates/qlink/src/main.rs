fn main() {
    std::process::exit(qlink::cli::run(std::env::args_os()));
}
