use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use qscissors::analytic::{truncation_fidelity, truncation_norm, NoiseParams, OracleReport};
use qscissors::apparatus::{run_scissors, run_teleport, RunResultJson, TeleportConfig};
use qscissors::report::{
    bell_table, exit_code, load_config_text, parse_config, run_pipeline_row, run_sweep, write_csv,
    write_json, Overrides, ReportRow, RunConfig, EXIT_CONFIG, EXIT_INVARIANT, EXIT_OK,
};
use qscissors::{Error, Result};

#[derive(Parser)]
#[command(
    name = "qscissors",
    version,
    about = "Lossy zero/one-photon teleportation simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Heralded state engineering from a single photon and a coherent drive.
    Scissors(RunArgs),
    /// Teleportation of a qubit through the photon-built channel.
    Teleport(RunArgs),
    /// Both stages, reported against the closed-form fidelities.
    Pipeline(RunArgs),
    /// Pipeline over a grid of efficiencies, dampings and drives.
    Sweep(RunArgs),
    /// Action of the ideal splitter on the Bell states.
    BellCheck,
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file, or inline JSON starting with `{`.
    #[arg(long)]
    config: Option<String>,
    /// Detector efficiency.
    #[arg(long)]
    eta: Option<f64>,
    /// Splitter damping.
    #[arg(long)]
    gamma: Option<f64>,
    /// Real coherent drive amplitude.
    #[arg(long)]
    drive: Option<f64>,
    /// Vacuum-to-one-photon weight ratio; sets the drive to 1/sqrt(ratio).
    #[arg(long)]
    ratio: Option<f64>,
    /// Photon-number cutoff of the coherent drive.
    #[arg(long)]
    cutoff: Option<usize>,
    /// Report destination (CSV for pipeline and sweep, JSON otherwise).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Additional JSON report for pipeline and sweep.
    #[arg(long)]
    json: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        let text = load_config_text(self.config.as_deref())?;
        let overrides = Overrides {
            eta: self.eta,
            gamma_bs: self.gamma,
            drive: self.drive,
            ratio: self.ratio,
            cutoff: self.cutoff,
            out: self.out.clone(),
        };
        parse_config(&text, &overrides)
    }
}

#[derive(Serialize)]
struct StageReport {
    command: &'static str,
    eta: f64,
    gamma_bs: f64,
    drive_gamma: [f64; 2],
    drive_cutoff: usize,
    result: RunResultJson,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_fidelity: Option<OracleReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_norm: Option<OracleReport>,
}

fn sink(out: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn stage_report(cfg: &RunConfig, command: &'static str) -> Result<StageReport> {
    let (result, oracle_fidelity, oracle_norm) = if command == "scissors" {
        let scissors = cfg.scissors_config(true)?;
        let result = run_scissors(&scissors)?;
        let amp = cfg.drive.gamma().norm();
        let (fid, norm) = match NoiseParams::from_drive(cfg.eta, cfg.gamma_bs, amp) {
            Ok(p) => (
                truncation_fidelity(&p).ok(),
                truncation_norm(&p, &scissors.bs1).ok(),
            ),
            Err(_) => (None, None),
        };
        (result, fid, norm)
    } else {
        let config = TeleportConfig::from_qubit(cfg.teleport_stage()?, cfg.teleport_input())?;
        (run_teleport(&config)?, None, None)
    };
    let g = cfg.drive.gamma();
    Ok(StageReport {
        command,
        eta: cfg.eta,
        gamma_bs: cfg.gamma_bs,
        drive_gamma: [g.re, g.im],
        drive_cutoff: cfg.drive.cutoff(),
        result: result.to_json(),
        oracle_fidelity,
        oracle_norm,
    })
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::BellCheck => {
            let (table, ok) = bell_table()?;
            print!("{table}");
            Ok(if ok { EXIT_OK } else { EXIT_INVARIANT })
        }
        Command::Scissors(args) | Command::Teleport(args) if args.json.is_some() => {
            Err(Error::Config {
                path: "--json".into(),
                message: "only pipeline and sweep write a separate JSON report".into(),
            })
        }
        Command::Scissors(args) => {
            let cfg = args.load()?;
            let report = stage_report(&cfg, "scissors")?;
            let mut w = sink(cfg.out.as_ref())?;
            serde_json::to_writer_pretty(&mut w, &report)?;
            writeln!(w)?;
            Ok(EXIT_OK)
        }
        Command::Teleport(args) => {
            let cfg = args.load()?;
            let report = stage_report(&cfg, "teleport")?;
            let mut w = sink(cfg.out.as_ref())?;
            serde_json::to_writer_pretty(&mut w, &report)?;
            writeln!(w)?;
            Ok(EXIT_OK)
        }
        Command::Pipeline(args) => {
            let cfg = args.load()?;
            let rows = vec![run_pipeline_row(&cfg)?];
            emit_rows(&rows, &cfg, &args)
        }
        Command::Sweep(args) => {
            let cfg = args.load()?;
            let rows = run_sweep(&cfg.sweep);
            emit_rows(&rows, &cfg, &args)
        }
    }
}

fn emit_rows(rows: &[ReportRow], cfg: &RunConfig, args: &RunArgs) -> Result<u8> {
    write_csv(rows, sink(cfg.out.as_ref())?)?;
    if let Some(path) = &args.json {
        write_json(rows, BufWriter::new(File::create(path)?))?;
    }
    Ok(exit_code(rows))
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config { .. } | Error::Json(_) => EXIT_CONFIG,
                _ => EXIT_INVARIANT,
            })
        }
    }
}
