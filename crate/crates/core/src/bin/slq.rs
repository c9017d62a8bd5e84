fn main() {
    std::process::exit(slq::cli::main());
}
