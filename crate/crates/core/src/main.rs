fn main() {
    std::process::exit(twostage::cli::run(std::env::args_os()));
}
