fn main() {
    std::process::exit(capwave::cli::main_entry());
}
