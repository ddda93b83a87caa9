fn main() {
    std::process::exit(mollow_cli::main_with(std::env::args_os()));
}
