use std::process::ExitCode;

fn main() -> ExitCode {
    grassgossip::cli::main()
}
