//! `fraclt`: batch front end of the lab. Every run writes its data files and
//! a `manifest.json` (resolved settings, seed, version, output digests) into
//! the output directory; `replay` re-runs a manifest.
//!
//! Exit codes: 0 success, 1 a check or fit failed, 2 usage/config error.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fraclt::frac_calc::Sign;

use config::{Ladder, Settings};

/// Bad flags, bad config or an unmet precondition: exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

/// Outcome of a command that ran to completion.
pub enum Outcome {
    Pass,
    /// a check or fit failed; the message names it
    Fail(String),
}

#[derive(Parser)]
#[command(name = "fraclt", version, about = "Fractional derivatives of local times: simulation, moments, rate fits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate paths and write them as CSV plus a binary copy
    Simulate(Common),
    /// Monte Carlo regularized local-time derivatives along an ε ladder
    Localtime(Common),
    /// Deterministic second moments along an ε ladder
    Moment(Common),
    /// Divergence-rate fit (part1 | part2 | part3)
    Rate(Common),
    /// Hölder regressions in time and space, and the α-continuity check
    Holder(Common),
    /// Empirical local-nondeterminism constants
    SlndScan(Common),
    /// Verification suites: lemmas (identities) | propositions (covariance bounds) | slnd | all
    Verify(Common),
    /// Re-run the command recorded in a manifest
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone, Default)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    kind: Option<String>,
    #[arg(long = "H")]
    hurst: Option<f64>,
    #[arg(long = "H0")]
    h0: Option<f64>,
    #[arg(long = "K0")]
    k0: Option<f64>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    alpha: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x: Option<Vec<f64>>,
    #[arg(long)]
    sign: Option<Sign>,
    #[arg(long = "T")]
    horizon: Option<f64>,
    /// start:factor:count
    #[arg(long)]
    eps_ladder: Option<Ladder>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    regime: Option<String>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    route: Option<String>,
    #[arg(long)]
    check_accuracy: bool,
    #[arg(long, value_delimiter = ',')]
    h_list: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    offsets: Option<Vec<f64>>,
    #[arg(long)]
    m_max: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    suite: Option<String>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long = "bigK")]
    big_k: Option<f64>,
    #[arg(long)]
    allow_unresolved: bool,
    #[arg(long)]
    with_correction: bool,
    #[arg(long)]
    mc_samples: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<Settings, UsageError> {
        let mut s = match &self.config {
            Some(p) => Settings::from_file(p)?,
            None => Settings::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = &self.$f { s.$f = v.clone(); } )* };
        }
        set!(kind, d, alpha, x, sign, horizon, eps_ladder, paths, steps, seed, method, regime, variant, route);
        set!(h_list, offsets, m_max, trials, suite, mc_samples);
        macro_rules! set_opt {
            ($($f:ident),*) => { $( if self.$f.is_some() { s.$f = self.$f; } )* };
        }
        set_opt!(hurst, h0, k0, workers, kappa, big_k);
        s.check_accuracy |= self.check_accuracy;
        s.allow_unresolved |= self.allow_unresolved;
        s.with_correction |= self.with_correction;
        s.normalize();
        Ok(s)
    }
}

fn name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Simulate(_) => "simulate",
        Command::Localtime(_) => "localtime",
        Command::Moment(_) => "moment",
        Command::Rate(_) => "rate",
        Command::Holder(_) => "holder",
        Command::SlndScan(_) => "slnd-scan",
        Command::Verify(_) => "verify",
        Command::Replay { .. } => "replay",
    }
}

fn dispatch(cli: Cli) -> Result<Outcome, UsageError> {
    let (command, settings, out) = match &cli.command {
        Command::Replay { manifest, out } => {
            let m = manifest::Manifest::load(manifest)?;
            (m.command.clone(), m.config.clone(), out.clone())
        }
        other => {
            let common = match other {
                Command::Simulate(c)
                | Command::Localtime(c)
                | Command::Moment(c)
                | Command::Rate(c)
                | Command::Holder(c)
                | Command::SlndScan(c)
                | Command::Verify(c) => c,
                Command::Replay { .. } => unreachable!("handled above"),
            };
            (name(other).to_string(), common.resolve()?, common.out.clone())
        }
    };
    commands::run(&command, &settings, &out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(UsageError(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
