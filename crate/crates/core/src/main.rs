fn main() {
    std::process::exit(qdslab::cli_io::run_cli(std::env::args_os()));
}
