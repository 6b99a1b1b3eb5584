fn main() {
    std::process::exit(rice_sim::cli::run_cli(std::env::args_os()));
}
