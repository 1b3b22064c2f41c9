fn main() {
    std::process::exit(phasekit::runner::cli::run(std::env::args_os()));
}
