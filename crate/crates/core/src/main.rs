use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(heatctl::cli::run_from(std::env::args_os()) as u8)
}
