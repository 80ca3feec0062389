mod commands;
mod config;
mod output;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{Mode, RunConfig, Scenario};

/// Localized controller synthesis, simulation and mesocircuit analysis.
#[derive(Parser)]
#[command(name = "mesoloc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the LQR, M-Design or SLS problem and write the spectral elements.
    Synthesize(Common),
    /// Run the configured disturbance scenario against a synthesized controller.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Route the SLS controller through per-node circuits and log messages.
        #[arg(long)]
        distributed: bool,
        /// Unit impulse at a 1-based node, optionally at time T.
        #[arg(long, value_name = "NODE[,T]", value_parser = parse_impulse)]
        impulse: Option<(usize, usize)>,
    },
    /// Pathway census, memory accounting, sparsity renderings and cost table.
    Analyze(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "T")]
    horizon: Option<usize>,
}

fn parse_impulse(s: &str) -> Result<(usize, usize), String> {
    let (node, time) = match s.split_once(',') {
        Some((n, t)) => (n, Some(t)),
        None => (s, None),
    };
    let node: usize = node.trim().parse().map_err(|_| format!("bad node {node:?}"))?;
    if node == 0 {
        return Err("nodes are numbered from 1".into());
    }
    let time = match time {
        Some(t) => t.trim().parse().map_err(|_| format!("bad time {t:?}"))?,
        None => 0,
    };
    Ok((node, time))
}

impl Common {
    fn load(&self) -> anyhow::Result<(RunConfig, Mode)> {
        let mut config = RunConfig::load(&self.config)?;
        if let Some(mode) = self.mode {
            config.mode = mode;
        }
        if let Some(out) = &self.out {
            config.out = out.clone();
        }
        if let Some(t) = self.horizon {
            config.horizon = t;
        }
        config.validate()?;
        let mode = config.mode;
        Ok((config, mode))
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Synthesize(common) => {
            let (config, mode) = common.load()?;
            commands::cmd_synthesize(&config, mode)
        }
        Command::Simulate {
            common,
            distributed,
            impulse,
        } => {
            let (mut config, mode) = common.load()?;
            if let Some((node, time)) = impulse {
                config.scenario = Some(Scenario::Impulse { node, time, steps: None });
            }
            commands::cmd_simulate(&config, mode, distributed)
        }
        Command::Analyze(common) => {
            let (config, mode) = common.load()?;
            commands::cmd_analyze(&config, mode)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
