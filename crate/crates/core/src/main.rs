use clap::Parser;
use resonator_q::cli::{run, Cli, CliError, Outcome};
use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    let result = std::panic::catch_unwind(|| run(&cli)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| p.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "panic".into());
        Err(CliError::internal(format!("internal error: {msg}")))
    });
    match result {
        Ok(Outcome::Validated { command }) => {
            println!("{}", serde_json::json!({ "command": command, "valid": true }));
            ExitCode::SUCCESS
        }
        Ok(Outcome::Completed { report_path, summary }) => {
            if let Some(s) = summary {
                println!("{s}");
            }
            println!("report: {}", report_path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json(Some(name)));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
