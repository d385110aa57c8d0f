fn main() {
    std::process::exit(chantrack::cli::main());
}
