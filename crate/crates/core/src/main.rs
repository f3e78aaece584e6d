fn main() {
    std::process::exit(stochnet::cli::run(std::env::args_os()));
}
