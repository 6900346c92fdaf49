fn main() {
    std::process::exit(vpkit::cli::main());
}
