fn main() {
    std::process::exit(obss_sim::cli::main());
}
