use std::process::ExitCode;

fn main() -> ExitCode {
    vsrl::cli::main()
}
