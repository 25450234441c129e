use std::process::ExitCode;

use igcl::cli::{dispatch, DispatchError};

fn main() -> ExitCode {
    igcl::par::init_threads_from_env();
    match dispatch(std::env::args_os()) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(DispatchError::Usage(e)) => {
            let code = e.exit_code();
            let _ = e.print();
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
