use std::process::ExitCode;

fn main() -> ExitCode {
    exposim_core::cli::main()
}
