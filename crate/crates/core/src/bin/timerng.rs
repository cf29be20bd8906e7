fn main() {
    std::process::exit(timerng::cli::run(std::env::args()));
}
