fn main() {
    std::process::exit(planeseg_cli::run(std::env::args_os()));
}
