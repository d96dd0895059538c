fn main() {
    std::process::exit(slicewatch::cli::run(std::env::args_os()));
}
