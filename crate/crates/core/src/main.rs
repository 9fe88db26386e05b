fn main() {
    std::process::exit(nlhardy::cli::main_entry());
}
