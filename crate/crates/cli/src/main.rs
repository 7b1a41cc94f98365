use std::io::{self, Write};
use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let rt = diffmig_cli::Runtime::system();
    let mut stdout = io::stdout().lock();
    let mut stderr = io::stderr();
    let code = diffmig_cli::run(std::env::args_os(), &rt, &mut stdout, &mut stderr);
    let _ = stdout.flush();
    ExitCode::from(code as u8)
}
