fn main() {
    std::process::exit(genmeas::cli::run());
}
