fn main() {
    std::process::exit(footstep_core::cli::run(std::env::args_os()));
}
