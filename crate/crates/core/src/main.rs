fn main() {
    std::process::exit(s3selmer::cli::main_with_args(std::env::args_os()));
}
