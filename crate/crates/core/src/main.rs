use std::process::ExitCode;

fn main() -> ExitCode {
    mwclass::cli::main()
}
