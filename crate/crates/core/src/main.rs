fn main() {
    std::process::exit(augformer::cli::run(std::env::args_os()));
}
