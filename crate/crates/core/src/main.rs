use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use visauth::harness::{
    numeric_checks, run_config, run_matrix, Config, GuardSetting, HarnessError, MatrixSpec, Report, RunOptions,
};

#[derive(Parser)]
#[command(
    name = "visauth",
    version,
    about = "Simulate visual-channel login protocols against attackers"
)]
struct Cli {
    /// Write the QR frames of each scenario's first trial here.
    #[arg(long, global = true, value_name = "DIR")]
    dump_frames: Option<PathBuf>,
    /// Write the transcript of each scenario's first trial here.
    #[arg(long, global = true, value_name = "DIR")]
    transcripts: Option<PathBuf>,
    /// Append scan-time estimates for every frame size used.
    #[arg(long, global = true)]
    scan_times: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenarios in a config file.
    Run { config: PathBuf },
    /// Run the protocol x attack resistance matrix.
    Matrix {
        #[arg(long, default_value_t = 100)]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Hijack guard setting: on, off or both.
        #[arg(long, default_value = "both")]
        guard: String,
    },
    /// Print the entropy and capacity checks.
    Checks,
}

fn finish(report: &Report) -> ExitCode {
    print!("{}", report.render());
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn config_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let options = RunOptions {
        dump_frames: cli.dump_frames,
        transcripts: cli.transcripts,
        scan_times: cli.scan_times,
    };
    match cli.command {
        Command::Run { config } => {
            let parsed = match Config::load(&config) {
                Ok(c) => c,
                Err(e) => return config_error(e),
            };
            match run_config(&parsed, &options) {
                Ok(report) => finish(&report),
                Err(HarnessError::Config(e)) => config_error(e),
                Err(e @ HarnessError::Io(_)) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Command::Matrix { trials, seed, guard } => {
            let guard = match guard.as_str() {
                "on" => GuardSetting::On,
                "off" => GuardSetting::Off,
                "both" => GuardSetting::Both,
                other => return config_error(format!("guard must be on, off or both, got '{other}'")),
            };
            if trials == 0 {
                return config_error("trials must be at least 1");
            }
            let report = Report {
                scenarios: Vec::new(),
                matrix: Some(run_matrix(&MatrixSpec { trials, seed, guard })),
                checks: Vec::new(),
                scan_times: false,
            };
            finish(&report)
        }
        Command::Checks => finish(&Report {
            scenarios: Vec::new(),
            matrix: None,
            checks: numeric_checks(),
            scan_times: false,
        }),
    }
}
