//! Argument handling for the `mlpcm` binary. Kept in a library so the
//! dispatch can be tested without spawning processes.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mlpcm_core::harness::{self, ExperimentConfig, ExperimentKind, ResultTable};
use mlpcm_core::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "mlpcm", version, about = "Space-time coded multilevel polar modulation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment configuration, JSON or TOML.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed of the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = OutFormat::Csv, global = true)]
    pub out: OutFormat,
    /// Worker threads (all cores when omitted).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Write the table here instead of stdout.
    #[arg(long, short = 'o', global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutFormat {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Outage probability over the SNR grid.
    Outage,
    /// Frame error rate over the SNR grid.
    Fer,
    /// Swarm search of STBC coefficients for minimum outage.
    OptimizeStbc,
    /// Labelling plus component codes; optionally saved as a bundle.
    DesignCode {
        /// Write the design bundle (spec, labelling, code) as JSON.
        #[arg(long)]
        save: Option<PathBuf>,
    },
    /// Set-partition labelling and its per-level protection.
    Label {
        /// Comma-separated merge thresholds to sweep.
        #[arg(long, value_delimiter = ',')]
        thresholds: Vec<f64>,
        /// Write the labelling as JSON.
        #[arg(long)]
        save: Option<PathBuf>,
    },
    /// Genie-aided bit-channel ranking.
    Rank,
    /// Joint STBC and code search at a target FER.
    Joint,
    /// Closed-form pairwise outage bounds against Monte Carlo.
    BoundCheck,
}

impl Command {
    pub fn kind(&self) -> ExperimentKind {
        match self {
            Command::Outage => ExperimentKind::OutageSweep,
            Command::Fer => ExperimentKind::FerSweep,
            Command::OptimizeStbc => ExperimentKind::OptimizeStbc,
            Command::DesignCode { .. } => ExperimentKind::DesignCode,
            Command::Label { .. } => ExperimentKind::Label,
            Command::Rank => ExperimentKind::RankBitchannels,
            Command::Joint => ExperimentKind::JointDesign,
            Command::BoundCheck => ExperimentKind::BoundCheck,
        }
    }
}

pub fn load(common: &Common, kind: ExperimentKind) -> Result<ExperimentConfig> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(k) = cfg.kind {
        if k != kind {
            return Err(Error::Config(format!("config is for {k:?}, not {kind:?}")));
        }
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn label_sweep(cfg: &ExperimentConfig, thresholds: &[f64], save: Option<&PathBuf>) -> Result<ResultTable> {
    if thresholds.is_empty() {
        let (table, spm) = harness::run_label(cfg)?;
        if let Some(p) = save {
            harness::save_json(p, &spm)?;
        }
        return Ok(table);
    }
    if save.is_some() && thresholds.len() > 1 {
        return Err(Error::Config("--save needs a single threshold".into()));
    }
    let mut out = ResultTable::new(cfg);
    for &t in thresholds {
        let mut c = cfg.clone();
        c.labelling.threshold = t;
        let (mut table, spm) = harness::run_label(&c)?;
        if let Some(p) = save {
            harness::save_json(p, &spm)?;
        }
        for row in &mut table.rows {
            row.metric = format!("t{t}_{}", row.metric);
        }
        out.rows.extend(table.rows);
    }
    Ok(out)
}

/// Runs the command and renders the table.
pub fn execute(cli: &Cli) -> Result<String> {
    let cfg = load(&cli.common, cli.command.kind())?;
    let table = match &cli.command {
        Command::DesignCode { save } => {
            let (table, bundle) = harness::run_design_code(&cfg)?;
            if let Some(p) = save {
                harness::save_json(p, &bundle)?;
            }
            table
        }
        Command::Label { thresholds, save } => label_sweep(&cfg, thresholds, save.as_ref())?,
        other => harness::run(&cfg, other.kind())?,
    };
    Ok(match cli.common.out {
        OutFormat::Csv => table.to_csv(),
        OutFormat::Json => table.to_json(),
    })
}

/// Full process behaviour minus `exit`; returns the exit status.
pub fn main_with(cli: Cli) -> i32 {
    if let Some(n) = cli.common.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return 2;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return 2;
        }
    }
    let text = match execute(&cli) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let written = match &cli.common.output {
        Some(p) => std::fs::write(p, text),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(text.as_bytes())
        }
    };
    match written {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_subcommand_parses() {
        for name in ["outage", "fer", "optimize-stbc", "design-code", "label", "rank", "joint", "bound-check"] {
            let cli = Cli::try_parse_from(["mlpcm", name, "--config", "x.toml", "--out", "json", "--seed", "3"]).unwrap();
            assert_eq!(cli.common.seed, Some(3));
            assert_eq!(cli.common.out, OutFormat::Json);
        }
    }

    #[test]
    fn threshold_list() {
        let cli = Cli::try_parse_from(["mlpcm", "label", "--thresholds", "0,0.1,0.15"]).unwrap();
        match cli.command {
            Command::Label { thresholds, .. } => assert_eq!(thresholds, vec![0.0, 0.1, 0.15]),
            _ => unreachable!(),
        }
    }

    #[test]
    fn missing_config_is_a_config_error() {
        let cli = Cli::try_parse_from(["mlpcm", "outage"]).unwrap();
        assert!(matches!(execute(&cli), Err(Error::Config(_))));
    }
}
