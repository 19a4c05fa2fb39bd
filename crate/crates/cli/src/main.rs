//! `ddm-audit`: per-instance privacy audits for discrete diffusion models.
//!
//! Exit codes: 0 success, 1 usage, 2 input error, 3 non-finite result under `--strict`.

mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Audit(a) => commands::cmd_audit(a),
        Command::Curate(a) => commands::cmd_curate(a),
        Command::Generate(a) => commands::cmd_generate(a),
        Command::LowerBound(a) => commands::cmd_lower_bound(a),
        Command::Dp(a) => commands::cmd_dp(a),
        Command::Synth(a) => commands::cmd_synth(a),
        Command::Schedule(a) => commands::cmd_schedule(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
