fn main() {
    std::process::exit(entalloc::cli::run());
}
