fn main() {
    std::process::exit(homoflow::cli::main());
}
