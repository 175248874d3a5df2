fn main() {
    std::process::exit(pgft_core::cli::main());
}
