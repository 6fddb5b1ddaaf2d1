fn main() {
    std::process::exit(layercollapse::cli::main_with(std::env::args_os()));
}
