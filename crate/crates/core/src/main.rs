fn main() {
    std::process::exit(nat_core::cli::run(std::env::args_os()));
}
