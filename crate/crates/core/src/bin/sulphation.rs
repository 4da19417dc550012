fn main() {
    std::process::exit(sulphation::cli::main());
}
