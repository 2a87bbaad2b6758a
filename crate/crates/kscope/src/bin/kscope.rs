fn main() {
    std::process::exit(kscope::cli::run(std::env::args()));
}
