fn main() {
    std::process::exit(relevance_lens::cli::run(std::env::args_os()));
}
