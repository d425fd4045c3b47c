fn main() {
    std::process::exit(bnls_core::cli::run(std::env::args_os()));
}
