use std::process::ExitCode;

fn main() -> ExitCode {
    vpaes::cli::run(std::env::args_os())
}
