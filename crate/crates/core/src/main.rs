fn main() {
    std::process::exit(regulab::cli::main());
}
