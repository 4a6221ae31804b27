fn main() {
    std::process::exit(rdbalance::cli::main());
}
