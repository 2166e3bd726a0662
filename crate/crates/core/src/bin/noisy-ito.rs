fn main() {
    std::process::exit(noisy_ito::cli::main_with_args(std::env::args_os()));
}
