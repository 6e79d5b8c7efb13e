fn main() {
    std::process::exit(hagn::cli::run());
}
