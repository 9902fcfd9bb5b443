use std::process::ExitCode;

use clap::Parser;
use ringtower_cli::cli::{Cli, Command};
use ringtower_cli::{commands, error_json, exit_code, service};
use ringtower_core::Exec;

fn run(cli: Cli) -> ringtower_core::Result<String> {
    let exec = if cli.sequential {
        Exec::Sequential
    } else {
        Exec::default()
    };
    Ok(match cli.command {
        Command::Detect(args) => {
            let labels = commands::cmd_detect(exec, &args)?;
            format!(
                "wrote {} ({} intervals)",
                args.out.display(),
                labels.total_intervals()
            )
        }
        Command::Overlay(args) => {
            let tinted = commands::cmd_overlay(&args)?;
            format!(
                "wrote {} ({} tinted frames)",
                args.out.display(),
                tinted.len()
            )
        }
        Command::Metrics(args) => {
            let r = commands::cmd_metrics(&args)?;
            format!(
                "{}: completion {:.3} s, {} errors, {:.4} error fraction",
                r.source_id, r.completion_time_s, r.number_of_errors, r.error_percentage
            )
        }
        Command::Evaluate(args) => {
            let report = commands::cmd_evaluate(&args)?;
            let p = report.pooled;
            format!(
                "tp {} tn {} fp {} fn {} accuracy {}",
                p.tp,
                p.tn,
                p.fp,
                p.fn_,
                p.accuracy()
                    .map_or("n/a".to_string(), |a| format!("{a:.4}"))
            )
        }
        Command::Synth(args) => {
            let m = commands::cmd_synth(exec, &args)?;
            format!("wrote {} cases to {}", m.cases.len(), args.out.display())
        }
        Command::Aggregate(args) => {
            let t = commands::cmd_aggregate(&args)?;
            format!("wrote {} ({} cells)", args.out.display(), t.cells.len())
        }
        Command::Serve(args) => {
            service::serve(&args)?;
            String::new()
        }
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(summary) => {
            if !summary.is_empty() {
                println!("{summary}");
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", error_json(&err));
            ExitCode::from(exit_code(&err))
        }
    }
}
