use std::process::ExitCode;

fn main() -> ExitCode {
    match stirring_cli::main_with_args(std::env::args_os().collect()) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            for line in f.lines() {
                eprintln!("{line}");
            }
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
