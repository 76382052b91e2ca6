fn main() {
    std::process::exit(reservoir_control::cli::run(std::env::args_os()));
}
