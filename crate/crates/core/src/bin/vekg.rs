fn main() {
    std::process::exit(vekg::cli::main());
}
