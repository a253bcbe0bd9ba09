fn main() {
    std::process::exit(splatlite::cli::main());
}
