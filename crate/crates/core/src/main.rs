fn main() {
    std::process::exit(udup::cli::main());
}
