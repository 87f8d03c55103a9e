fn main() -> std::process::ExitCode {
    randsum_cli::main_with_args(std::env::args_os())
}
