use std::process::ExitCode;

use sigdyn_cli::{execute, parse_config, CliError};

fn main() -> ExitCode {
    let result = parse_config(std::env::args_os().skip(1), None).and_then(|cfg| execute(&cfg));
    match result {
        Ok(run) => {
            println!("{}", run.summary);
            for f in &run.files {
                println!("wrote {}", f.display());
            }
            ExitCode::from(run.status)
        }
        Err(CliError::Usage(e)) => {
            let _ = e.print();
            ExitCode::from(if e.use_stderr() { 2 } else { 0 })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
