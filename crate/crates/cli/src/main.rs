fn main() {
    std::process::exit(panel_bias_cli::run(std::env::args_os()));
}
