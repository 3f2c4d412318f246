fn main() {
    std::process::exit(corrverify::cli::run());
}
