use std::process::ExitCode;

fn main() -> ExitCode {
    longlens::cli::main_with_args(std::env::args_os())
}
