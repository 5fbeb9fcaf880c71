fn main() {
    std::process::exit(dpdensity::cli::main_with_args(std::env::args_os()));
}
