fn main() {
    std::process::exit(onelap::cli::main_with(std::env::args_os()));
}
