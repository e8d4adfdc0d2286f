fn main() {
    std::process::exit(fatesim_cli::run_cli(std::env::args_os()));
}
