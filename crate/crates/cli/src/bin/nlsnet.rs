fn main() {
    std::process::exit(nlsnet_cli::main_with(std::env::args_os()));
}
