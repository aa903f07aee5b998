//! `apm`: allocation mechanisms, stable matchings, oracles and estimation
//! from the command line. Every run writes CSV tables with schema sidecars
//! and a `manifest.json` into its output directory.

mod allocate;
mod estimate;
mod load;
mod market;
mod oracle;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::output::Run;

/// Environment variable naming the default output root.
pub const OUT_ROOT_ENV: &str = "APM_OUT_ROOT";

#[derive(Parser, Debug)]
#[command(name = "apm", version, about = "Adaptive priority mechanisms and their competitors")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Output directory; defaults to `$APM_OUT_ROOT/<command>`, or
    /// `apm-out/<command>` when the variable is unset.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for anything random (tie-breaking jitter, synthetic data).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for parallel sweeps; defaults to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Convergence tolerance where a command iterates.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Grid resolution: cells, quadrature nodes or search points, by command.
    #[arg(long, global = true)]
    pub grid_bins: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one policy on one economy.
    Allocate {
        #[arg(long)]
        economy: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        /// Needed for `optimal-apm` policies; adds utilities to the summary.
        #[arg(long)]
        prefs: Option<PathBuf>,
    },
    /// Tabulate the optimal adaptive priority of some preferences.
    OptimalApm {
        #[arg(long)]
        prefs: PathBuf,
        /// Also run the policy on this economy.
        #[arg(long)]
        economy: Option<PathBuf>,
        /// Upper end of the admissions grid; defaults to the economy's
        /// capacity, or 1.
        #[arg(long)]
        y_max: Option<f64>,
    },
    /// Expected utilities of a policy set under a belief, or the priority
    /// versus quota comparison of the minority/majority setting.
    Compare {
        #[arg(long, required_unless_present = "weitzman", requires_all = ["policy", "prefs"])]
        belief: Option<PathBuf>,
        /// JSON array of named policies.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        prefs: Option<PathBuf>,
        /// Parameter grid of the minority/majority setting.
        #[arg(long, conflicts_with_all = ["belief", "policy"])]
        weitzman: Option<PathBuf>,
    },
    /// Stable cutoff matching of a market, with its stability certificate.
    Stable {
        #[arg(long)]
        market: PathBuf,
        /// Blocking mass as a share of all agents.
        #[arg(long, default_value_t = 1e-3)]
        epsilon: f64,
    },
    /// Efficient allocation across the authorities of a market.
    Apmq {
        #[arg(long)]
        market: PathBuf,
    },
    /// Closed forms against direct numerical checks.
    Oracle {
        #[arg(value_enum)]
        which: OracleKind,
    },
    /// Estimate diversity preferences from admissions records.
    Estimate {
        /// CSV with columns `year,score,group`.
        #[arg(long, required_unless_present = "synthetic", requires = "config")]
        records: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use a synthetic belief whose truth is known; `--seed` picks it.
        #[arg(long, conflicts_with = "records")]
        synthetic: bool,
    },
    /// Run the acceptance checks.
    Selftest {
        /// Run only these checks (1-based).
        #[arg(long, value_delimiter = ',')]
        only: Vec<usize>,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum OracleKind {
    Weitzman,
    TwoSeat,
    TwoAuthority,
    H1b,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Allocate { .. } => "allocate",
            Command::OptimalApm { .. } => "optimal-apm",
            Command::Compare { .. } => "compare",
            Command::Stable { .. } => "stable",
            Command::Apmq { .. } => "apmq",
            Command::Oracle { which, .. } => match which {
                OracleKind::Weitzman => "oracle-weitzman",
                OracleKind::TwoSeat => "oracle-two-seat",
                OracleKind::TwoAuthority => "oracle-two-authority",
                OracleKind::H1b => "oracle-h1b",
            },
            Command::Estimate { .. } => "estimate",
            Command::Selftest { .. } => "selftest",
        }
    }
}

/// Why a run stopped, mapped to the process exit code.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Failure {
    Internal,
    Validation,
    Convergence,
    ChecksFailed,
}

impl Failure {
    fn code(self) -> u8 {
        match self {
            Failure::Internal | Failure::ChecksFailed => 1,
            Failure::Validation => 2,
            Failure::Convergence => 3,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Failure::Internal => "internal",
            Failure::Validation => "validation",
            Failure::Convergence => "convergence",
            Failure::ChecksFailed => "checks-failed",
        }
    }
}

/// Marker error for a selftest with failing checks.
#[derive(Debug)]
struct ChecksFailed(usize);

impl std::fmt::Display for ChecksFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} check(s) failed", self.0)
    }
}

impl std::error::Error for ChecksFailed {}

fn classify(err: &anyhow::Error) -> Failure {
    if err.downcast_ref::<ChecksFailed>().is_some() {
        return Failure::ChecksFailed;
    }
    let core: Vec<&apm_core::Error> = err.chain().filter_map(|c| c.downcast_ref::<apm_core::Error>()).collect();
    if core.iter().any(|e| matches!(e, apm_core::Error::Integrity(_))) {
        Failure::Internal
    } else if core.iter().any(|e| e.is_convergence_failure()) {
        Failure::Convergence
    } else {
        Failure::Validation
    }
}

fn diagnostic(kind: &str, err: &anyhow::Error) -> String {
    let causes: Vec<String> = err.chain().skip(1).map(|c| c.to_string()).collect();
    json!({"status": "error", "kind": kind, "message": err.to_string(), "causes": causes}).to_string()
}

fn out_dir(common: &Common, command: &str) -> PathBuf {
    match &common.out {
        Some(p) => p.clone(),
        None => {
            let root = std::env::var_os(OUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| "apm-out".into());
            root.join(command)
        }
    }
}

fn run(cli: Cli) -> Result<PathBuf> {
    if let Some(n) = cli.common.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let name = cli.command.name();
    let mut run = Run::new(name, out_dir(&cli.common, name), cli.common.seed)?;
    let c = &cli.common;
    match cli.command {
        Command::Allocate { economy, policy, prefs } => allocate::allocate(&mut run, &economy, &policy, prefs.as_deref())?,
        Command::OptimalApm { prefs, economy, y_max } => {
            allocate::optimal_apm(&mut run, c, &prefs, economy.as_deref(), y_max)?
        }
        Command::Compare { belief, policy, prefs, weitzman } => match (weitzman, belief, policy, prefs) {
            (Some(w), ..) => oracle::compare_weitzman(&mut run, c, &w)?,
            (None, Some(b), Some(p), Some(f)) => allocate::compare(&mut run, &b, &p, &f)?,
            _ => anyhow::bail!(apm_core::Error::Invalid("compare needs --weitzman, or --belief with --policy and --prefs".into())),
        },
        Command::Stable { market, epsilon } => market::stable(&mut run, c, &market, epsilon)?,
        Command::Apmq { market } => market::apmq(&mut run, &market)?,
        Command::Oracle { which } => oracle::oracle(&mut run, c, which)?,
        Command::Estimate { records, config, synthetic } => {
            estimate::estimate(&mut run, c, records.as_deref(), config.as_deref(), synthetic)?
        }
        Command::Selftest { only } => {
            let failed = oracle::selftest(&mut run, &only)?;
            let dir = run.finish()?;
            if failed > 0 {
                return Err(ChecksFailed(failed).into());
            }
            return Ok(dir);
        }
    }
    run.finish()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.render().to_string();
            eprintln!("{}", json!({"status": "error", "kind": "usage", "message": msg.trim()}));
            return ExitCode::from(Failure::Validation.code());
        }
    };
    match run(cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let failure = classify(&e);
            eprintln!("{}", diagnostic(failure.label(), &e));
            ExitCode::from(failure.code())
        }
    }
}
