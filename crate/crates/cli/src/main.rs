fn main() {
    std::process::exit(pap_cli::run(std::env::args_os()));
}
