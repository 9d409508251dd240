fn main() {
    std::process::exit(kgsm::cli::main(std::env::args_os()));
}
