fn main() {
    std::process::exit(conal::cli::run(std::env::args_os()));
}
