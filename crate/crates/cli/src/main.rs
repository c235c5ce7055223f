use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    let r = niq_cli::app::invoke(std::env::args_os());
    print!("{}", r.stdout);
    eprint!("{}", r.stderr);
    let _ = std::io::stdout().flush();
    ExitCode::from(r.code as u8)
}
