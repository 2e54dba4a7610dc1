fn main() {
    std::process::exit(fibrejam::cli::main_with_args(std::env::args_os().skip(1)));
}
