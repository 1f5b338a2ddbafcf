fn main() {
    std::process::exit(dualgap_cli::run(std::env::args_os()));
}
