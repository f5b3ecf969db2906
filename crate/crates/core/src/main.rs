fn main() {
    std::process::exit(scmdp::cli::run(std::env::args_os()));
}
