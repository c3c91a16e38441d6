fn main() -> std::process::ExitCode {
    resonant_auth::cli::main_with_args(std::env::args_os())
}
