fn main() -> std::process::ExitCode {
    teamform::cli::main_with_args(std::env::args_os())
}
