fn main() {
    std::process::exit(ttslab::cli::run(std::env::args_os()));
}
