use std::io;
use std::process::ExitCode;

use clap::Parser;
use robustwf_cli::{run, Cli, Status};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors share the input-error code; help and version succeed.
            let status = if e.use_stderr() {
                Status::InputError
            } else {
                Status::Success
            };
            return ExitCode::from(status.code());
        }
    };
    let status = run(cli, &mut io::stdout().lock(), &mut io::stderr().lock());
    ExitCode::from(status.code())
}
