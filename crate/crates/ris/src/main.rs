fn main() {
    std::process::exit(ris::cli::main());
}
