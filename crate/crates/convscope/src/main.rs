use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    let stdout = std::io::stdout();
    let exit = convscope::cli::run(std::env::args_os(), &mut stdout.lock());
    if !exit.stderr.is_empty() {
        let _ = std::io::stderr().write_all(exit.stderr.as_bytes());
    }
    ExitCode::from(exit.code as u8)
}
