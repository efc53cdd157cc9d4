fn main() {
    let code = grb::cli::run_command(std::env::args_os());
    std::process::exit(code);
}
