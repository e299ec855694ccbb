fn main() {
    std::process::exit(svdkf::cli::main_with_args(std::env::args_os()));
}
