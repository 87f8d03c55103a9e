//! Command-line front end for `randsum-core`.
//!
//! Exit codes: 0 success, 1 numeric or I/O failure, 2 an audited inequality
//! or identity failed, 64 invalid usage.

pub mod config;
pub mod run;

use std::process::ExitCode;

use config::Invocation;

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_AUDIT: u8 = 2;
pub const EXIT_USAGE: u8 = 64;

/// Environment variable overriding the worker thread count.
pub const THREADS_ENV: &str = "RANDSUM_THREADS";

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads = match raw.trim().parse::<usize>() {
        Ok(t) if t >= 1 => t,
        _ => return Err(format!("{THREADS_ENV} must be an integer >= 1, got '{raw}'")),
    };
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(|e| e.to_string())
}

pub fn main_with_args<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let invocation = match config::parse_args(argv) {
        Ok(inv) => inv,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_USAGE);
    }
    let config = match invocation {
        Invocation::PrintConfig(c) => {
            println!("{}", c.to_args().join(" "));
            return ExitCode::from(EXIT_OK);
        }
        Invocation::Run(c) => c,
    };
    match run::run(&config) {
        Ok(run::Status::Ok) => ExitCode::from(EXIT_OK),
        Ok(run::Status::AuditFailed) => {
            eprintln!("audit failed: see the report for the violated rows");
            ExitCode::from(EXIT_AUDIT)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
