fn main() {
    std::process::exit(cnnslicer_cli::main_with(std::env::args_os().collect()));
}
