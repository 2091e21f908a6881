fn main() {
    std::process::exit(edkit::cli::main());
}
