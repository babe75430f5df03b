use std::process::ExitCode;

fn main() -> ExitCode {
    gaitscope::cli::run_from(std::env::args_os())
}
