fn main() {
    std::process::exit(apollonian::cli::main());
}
