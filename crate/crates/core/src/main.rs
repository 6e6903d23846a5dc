fn main() {
    std::process::exit(gaugefix::cli::run_cli(std::env::args_os()));
}
