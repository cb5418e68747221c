fn main() {
    std::process::exit(dynbias::cli::run(std::env::args_os()));
}
