use std::process::ExitCode;

fn main() -> ExitCode {
    eigenstrat::cli::run(std::env::args_os())
}
