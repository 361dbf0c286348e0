fn main() {
    std::process::exit(piranha::cli::main())
}
