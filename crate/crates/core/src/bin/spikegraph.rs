fn main() {
    std::process::exit(spikegraph::cli::main());
}
