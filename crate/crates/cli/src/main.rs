//! `mup`: command-line front end for the Markov-up simulation lab.
//!
//! Exit codes: 0 on success, 1 when the spec or a checked assumption is
//! violated, 2 on usage errors (bad flags, unreadable files).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use mup_core::analysis::{
    exact_projection_estimate, occupation_estimate, regen_stationary_estimate, verify_bounds,
    MeanEstimate, DEFAULT_CYCLE_CAP,
};
use mup_core::exact::{
    expected_hitting_times, extended_chain, reliability_curve, stationary_distribution,
    ExactOptions,
};
use mup_core::io;
use mup_core::model::validate_spec;
use mup_core::simulate::{initial_memory, sample_hitting_times_from, simulate_trajectory};
use mup_core::{MemoryState, ProcessSpec};

#[derive(Debug, Parser)]
#[command(
    name = "mup",
    version,
    about = "Simulate and verify Markov-up processes"
)]
struct Cli {
    /// Worker threads for replication-parallel subcommands (output does not depend on it).
    #[arg(long, global = true, env = "MUP_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Regen,
    Occupation,
    Exact,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Process spec JSON (see docs/formats.md).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Base seed; recorded in every output.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (directory for `exact`); stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the spec's assumptions and print the validation report (JSON).
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Generate one trajectory (CSV: t,x,fall_length,zeta,regime).
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Initial state.
        #[arg(long)]
        x0: u32,
        /// Declared fall path, current state first, dash-joined (e.g. 5-6-8).
        #[arg(long, value_name = "PATH")]
        past: Option<String>,
        /// Number of steps T.
        #[arg(long, default_value_t = 1000)]
        horizon: usize,
    },
    /// Sample hitting times tau and gamma (CSV: rep,tau,gamma,censored; summary on stderr).
    Hitting {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        x0: u32,
        #[arg(long, value_name = "PATH")]
        past: Option<String>,
        /// Replications R; replication i uses seed + i.
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        /// Horizon cap per replication.
        #[arg(long, default_value_t = 100_000)]
        cap: u64,
    },
    /// Exact stationary law, expected hitting times and reliability curve
    /// (writes stationary.csv, hitting.csv, reliability.csv into --out).
    Exact {
        #[command(flatten)]
        common: Common,
        /// Start state for the reliability curve.
        #[arg(long)]
        x0: u32,
        /// Last time of the reliability curve.
        #[arg(long, default_value_t = 200)]
        t_max: usize,
    },
    /// Monte Carlo check of the run-up, fall and hitting-time bounds (JSON report).
    Verify {
        #[command(flatten)]
        common: Common,
        /// Start states above the floor, comma-separated; default N+1..=Nbar.
        #[arg(long, value_delimiter = ',')]
        starts: Option<Vec<u32>>,
        #[arg(long, default_value_t = 100_000)]
        reps: usize,
        #[arg(long, default_value_t = 100_000)]
        cap: u64,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Stationary X-marginal estimate.
    Stationary {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        method: Method,
        /// Regeneration cycles (regen).
        #[arg(long, default_value_t = 10_000)]
        cycles: u64,
        /// Total steps (occupation).
        #[arg(long, default_value_t = 10_000_000)]
        steps: u64,
        /// Discarded initial steps (occupation).
        #[arg(long, default_value_t = 10_000)]
        burn_in: u64,
        /// Start state (occupation); defaults to N.
        #[arg(long)]
        x0: Option<u32>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
}

/// Failure classes mapped onto exit codes.
enum Failure {
    Violation(anyhow::Error),
    Usage(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Violation(e)
    }
}

type Outcome = Result<(), Failure>;

fn load_spec(path: &Path) -> Result<ProcessSpec, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read spec file {}", path.display()))
        .map_err(Failure::Usage)?;
    ProcessSpec::from_json(&text)
        .with_context(|| format!("invalid spec {}", path.display()))
        .map_err(Failure::Violation)
}

fn parse_past(past: &Option<String>) -> Result<Option<MemoryState>, Failure> {
    past.as_deref()
        .map(|p| {
            p.parse::<MemoryState>()
                .map_err(|e| Failure::Usage(anyhow!(e)))
        })
        .transpose()
}

fn emit(out: &Option<PathBuf>, content: &str) -> Outcome {
    match out {
        Some(path) => fs::write(path, content)
            .with_context(|| format!("cannot write {}", path.display()))
            .map_err(Failure::Usage),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(content.as_bytes())
                .context("cannot write to stdout")
                .map_err(Failure::Usage)
        }
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

fn meta(
    spec: &ProcessSpec,
    seed: u64,
    extra: &[(&'static str, String)],
) -> Vec<(&'static str, String)> {
    let mut m = vec![("spec", spec.id().to_string()), ("seed", seed.to_string())];
    m.extend_from_slice(extra);
    m
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Validate { common } => {
            let spec = load_spec(&common.config)?;
            let report = validate_spec(&spec).map_err(|e| Failure::Violation(e.into()))?;
            let mut doc = serde_json::to_value(&report).expect("report serializes");
            doc["seed"] = common.seed.into();
            emit(&common.out, &to_json(&doc))?;
            eprintln!("rho = {}", report.rho);
            if report.is_valid() {
                Ok(())
            } else {
                for v in &report.violations {
                    eprintln!(
                        "violation: {}",
                        serde_json::to_string(v).expect("violation serializes")
                    );
                }
                Err(Failure::Violation(anyhow!(
                    "{} assumption violation(s)",
                    report.violations.len()
                )))
            }
        }
        Command::Simulate {
            common,
            x0,
            past,
            horizon,
        } => {
            let spec = load_spec(&common.config)?;
            let past = parse_past(&past)?;
            let traj = simulate_trajectory(&spec, x0, past.as_ref(), horizon, common.seed)
                .map_err(|e| Failure::Usage(e.into()))?;
            let m = meta(
                &spec,
                common.seed,
                &[("x0", x0.to_string()), ("horizon", horizon.to_string())],
            );
            emit(&common.out, &io::trajectory_csv(&traj, &m))
        }
        Command::Hitting {
            common,
            x0,
            past,
            reps,
            cap,
        } => {
            let spec = load_spec(&common.config)?;
            let past = parse_past(&past)?;
            let start =
                initial_memory(&spec, x0, past.as_ref()).map_err(|e| Failure::Usage(e.into()))?;
            let samples = sample_hitting_times_from(&spec, &start, reps, cap, common.seed)
                .map_err(|e| Failure::Usage(e.into()))?;
            let m = meta(
                &spec,
                common.seed,
                &[
                    ("x0", x0.to_string()),
                    ("reps", reps.to_string()),
                    ("cap", cap.to_string()),
                ],
            );
            emit(&common.out, &io::hitting_samples_csv(&samples, &m))?;
            let tau: Vec<f64> = samples
                .iter()
                .filter_map(|s| s.tau)
                .map(|t| t as f64)
                .collect();
            let gamma: Vec<f64> = samples
                .iter()
                .filter_map(|s| s.gamma)
                .map(|t| t as f64)
                .collect();
            let summary = serde_json::json!({
                "seed": common.seed,
                "replications": reps,
                "censored": samples.iter().filter(|s| s.censored).count(),
                "tau": MeanEstimate::from_samples(&tau),
                "gamma": MeanEstimate::from_samples(&gamma),
            });
            eprint!("{}", to_json(&summary));
            Ok(())
        }
        Command::Exact { common, x0, t_max } => {
            let spec = load_spec(&common.config)?;
            let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
            fs::create_dir_all(&dir)
                .with_context(|| format!("cannot create {}", dir.display()))
                .map_err(Failure::Usage)?;
            let chain = extended_chain(&spec, &ExactOptions::default())
                .map_err(|e| Failure::Violation(e.into()))?;
            let pi = stationary_distribution(&chain).map_err(|e| Failure::Violation(e.into()))?;
            let h = expected_hitting_times(&chain).map_err(|e| Failure::Violation(e.into()))?;
            let r = reliability_curve(&chain, x0, t_max).map_err(|e| Failure::Usage(e.into()))?;
            let m = meta(&spec, common.seed, &[("states", chain.len().to_string())]);
            let files = [
                ("stationary.csv", io::stationary_csv(&chain, &pi, &m)),
                ("hitting.csv", io::exact_hitting_csv(&chain, &h, &m)),
                (
                    "reliability.csv",
                    io::reliability_csv(
                        &r,
                        &meta(
                            &spec,
                            common.seed,
                            &[
                                ("x0", x0.to_string()),
                                ("r_inf", chain.mass_above_floor(&pi).to_string()),
                            ],
                        ),
                    ),
                ),
            ];
            for (name, content) in files {
                emit(&Some(dir.join(name)), &content)?;
            }
            Ok(())
        }
        Command::Verify {
            common,
            starts,
            reps,
            cap,
            format,
        } => {
            let spec = load_spec(&common.config)?;
            let starts = match starts {
                Some(s) => s,
                None => {
                    let top = spec.ceiling().ok_or_else(|| {
                        Failure::Usage(anyhow!("--starts is required for an unbounded spec"))
                    })?;
                    (spec.floor() + 1..=top).collect()
                }
            };
            let report = verify_bounds(&spec, &starts, reps, cap, common.seed)
                .map_err(|e| Failure::Usage(e.into()))?;
            let text = match format {
                Format::Json => to_json(&report),
                Format::Csv => io::bound_report_csv(
                    &report,
                    &meta(
                        &spec,
                        common.seed,
                        &[("reps", reps.to_string()), ("cap", cap.to_string())],
                    ),
                ),
            };
            emit(&common.out, &text)?;
            for r in report.records.iter().filter(|r| !r.pass) {
                eprintln!(
                    "claim {:?} at x = {} failed (margin {:?})",
                    r.claim, r.start, r.margin
                );
            }
            if report.all_pass() {
                Ok(())
            } else {
                Err(Failure::Violation(anyhow!("bound verification failed")))
            }
        }
        Command::Stationary {
            common,
            method,
            cycles,
            steps,
            burn_in,
            x0,
            format,
        } => {
            let spec = load_spec(&common.config)?;
            let est = match method {
                Method::Regen => {
                    regen_stationary_estimate(&spec, cycles, common.seed, DEFAULT_CYCLE_CAP)
                }
                Method::Occupation => occupation_estimate(
                    &spec,
                    x0.unwrap_or(spec.floor()),
                    steps,
                    burn_in,
                    common.seed,
                ),
                Method::Exact => extended_chain(&spec, &ExactOptions::default())
                    .map_err(Into::into)
                    .and_then(|chain| exact_projection_estimate(&spec, &chain)),
            }
            .map_err(|e| Failure::Usage(e.into()))?;
            let text = match format {
                Format::Json => {
                    let mut doc = serde_json::to_value(&est).expect("estimate serializes");
                    doc["seed"] = common.seed.into();
                    to_json(&doc)
                }
                Format::Csv => io::estimate_csv(&est, &meta(&spec, common.seed, &[])),
            };
            emit(&common.out, &text)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = cli.threads {
        if k == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        builder = builder.num_threads(k);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Violation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
