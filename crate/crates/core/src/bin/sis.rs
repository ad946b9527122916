use std::io;
use std::process::ExitCode;

use sis_core::cli::{main_with_args, SEED_ENV};

fn main() -> ExitCode {
    let env_seed = std::env::var(SEED_ENV).ok();
    let code = main_with_args(std::env::args_os(), env_seed.as_deref(), &mut io::stdout().lock(), &mut io::stderr());
    ExitCode::from(code as u8)
}
