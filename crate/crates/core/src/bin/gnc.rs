fn main() {
    std::process::exit(softmax_codes::cli::run(std::env::args_os()));
}
