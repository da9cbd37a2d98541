fn main() {
    std::process::exit(folia::cli::main_with(std::env::args_os()));
}
