//! Command line front end for the placement optimizer: base-case derivation,
//! budget and price queries, rate curves, delivery simulation, LP
//! certification, and a cross-validation battery.
//!
//! Every command reads the model from `--k` plus a popularity description
//! (`--n`/`--zipf` or `--probs`), or from a JSON config file given with
//! `--config`; explicit flags override config fields. JSON is the canonical
//! output; `sweep` emits CSV for plotting, and `base` can.

mod verify;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use scc_cache::{
    build_base_set, enumerate_candidates, expected_rate_exact, monte_carlo_rate, numeric_rmsc,
    price_staircase, solve_rmsc, BaseSet, Distribution, DistributionSpec, Placement, Staircase,
};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "scc-cache",
    version,
    about = "Optimal uncoded cache placement under clique cover delivery"
)]
struct Cli {
    #[command(flatten)]
    common: CommonOpts,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct CommonOpts {
    /// Number of caches K.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Library size N for the Zipf popularity model.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Zipf exponent; 0 is uniform.
    #[arg(long, global = true, value_name = "ALPHA")]
    zipf: Option<f64>,
    /// Explicit file popularities, comma separated (any order).
    #[arg(long, global = true, value_delimiter = ',', conflicts_with_all = ["n", "zipf"])]
    probs: Option<Vec<f64>>,
    /// JSON run configuration; explicit flags override its fields.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Derive the base cases and the storage price staircase.
    Base {
        /// json emits cases plus staircase; csv emits the cases only.
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Optimal placement for a storage budget.
    Place {
        /// Storage budget per cache, in files.
        #[arg(long)]
        m: Option<f64>,
        /// Reuse a base-case set written by `base` instead of recomputing
        /// (the file then defines K and the distribution).
        #[arg(long, value_name = "PATH")]
        base: Option<PathBuf>,
    },
    /// Expected delivery rate of a placement.
    Rate {
        /// Evaluate the optimal placement at this budget.
        #[arg(long)]
        m: Option<f64>,
        /// Evaluate a placement matrix from a JSON file instead.
        #[arg(long, value_name = "PATH", conflicts_with = "m")]
        placement: Option<PathBuf>,
    },
    /// CSV rate curve with per-level storage bands over a budget grid.
    Sweep {
        /// Number of evenly spaced budgets in [0, N]; at least 2.
        #[arg(long, alias = "points")]
        grid: Option<usize>,
    },
    /// Monte Carlo delivery simulation against the analytic rate.
    Simulate {
        /// Storage budget per cache, in files.
        #[arg(long)]
        m: Option<f64>,
        /// Number of sampled demand vectors.
        #[arg(long)]
        trials: Option<u64>,
        /// RNG seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Certify a budget's optimal rate with the LP oracle.
    Oracle {
        /// Storage budget per cache, in files.
        #[arg(long)]
        m: Option<f64>,
        /// Accepted duality gap, relative to max(1, rate).
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Cross-validate the analytic solver against brute force, the delivery
    /// simulator, and the LP oracle; nonzero exit on any failed check.
    Verify {
        /// Trials for the simulation check.
        #[arg(long)]
        trials: Option<u64>,
        /// RNG seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Oracle tolerance.
        #[arg(long)]
        tol: Option<f64>,
        /// Sabotage the hull filter with the broken interpolation rule, to
        /// demonstrate that the battery catches a wrong hull.
        #[arg(long)]
        inject_hull_bug: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

/// On-disk run configuration; the schema mirrors the command line flags.
/// Every field is optional and individually overridable.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    k: Option<usize>,
    distribution: Option<DistributionSpec>,
    m: Option<f64>,
    trials: Option<u64>,
    seed: Option<u64>,
    grid: Option<usize>,
    tol: Option<f64>,
    format: Option<Format>,
}

fn main() {
    // Die quietly when a downstream pipe closes, like any other filter;
    // Rust installs SIG_IGN and println panics on EPIPE otherwise.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    let cfg = load_config(cli.common.config.as_deref())?;
    let k = cli.common.k.or(cfg.k).unwrap_or(4);
    let spec = resolve_distribution(&cli.common, &cfg)?;
    let dist: Distribution = spec.build()?;

    match cli.cmd {
        Cmd::Base { format } => {
            let set = derive_base_set(k, &dist)?;
            let stair = price_staircase(&set);
            match format.or(cfg.format).unwrap_or(Format::Json) {
                Format::Json => print_json(&BaseOutput { set: &set, staircase: &stair })?,
                Format::Csv => {
                    println!("m,r,s_star,n_star");
                    for c in set.cases() {
                        println!("{},{},{},{}", c.m, c.r, c.placement.s_star, c.placement.n_star);
                    }
                }
            }
        }
        Cmd::Place { m, base } => {
            let set = match base {
                Some(path) => load_base_set(&path)?,
                None => derive_base_set(k, &dist)?,
            };
            let m = require_m(m.or(cfg.m))?;
            print_json(&solve_rmsc(m, &set)?)?;
        }
        Cmd::Rate { m, placement } => {
            let y: Placement = match placement {
                Some(path) => {
                    let text = fs::read_to_string(&path)
                        .with_context(|| format!("reading placement {}", path.display()))?;
                    serde_json::from_str(&text)
                        .with_context(|| format!("parsing placement {}", path.display()))?
                }
                None => {
                    let m = require_m(m.or(cfg.m))?;
                    solve_rmsc(m, &derive_base_set(k, &dist)?)?.y
                }
            };
            if y.n_files() != dist.n_files() {
                bail!(
                    "placement covers {} files, distribution has {}",
                    y.n_files(),
                    dist.n_files()
                );
            }
            let report = RateReport {
                rate: expected_rate_exact(&y, &dist)?,
                storage: y.storage(),
            };
            print_json(&report)?;
        }
        Cmd::Sweep { grid } => {
            let points = grid.or(cfg.grid).unwrap_or(41);
            if points < 2 {
                bail!("sweep needs a grid of at least 2 points, got {points}");
            }
            let set = derive_base_set(k, &dist)?;
            let n = dist.n_files();
            let header: Vec<String> = (1..=k).map(|s| format!("Q_{s}")).collect();
            println!("M,rate,{}", header.join(","));
            for i in 0..points {
                let m = n as f64 * i as f64 / (points - 1) as f64;
                let sol = solve_rmsc(m, &set)?;
                let q = sol.y.level_masses();
                let bands: Vec<String> = (1..=k).map(|s| q[s].to_string()).collect();
                println!("{m},{},{}", sol.rate, bands.join(","));
            }
        }
        Cmd::Simulate { m, trials, seed } => {
            let m = require_m(m.or(cfg.m))?;
            let trials = trials.or(cfg.trials).unwrap_or(100_000);
            let seed = seed.or(cfg.seed).unwrap_or(0);
            let sol = solve_rmsc(m, &derive_base_set(k, &dist)?)?;
            let exact = expected_rate_exact(&sol.y, &dist)?;
            let (estimate, stderr) = monte_carlo_rate(&sol.y, &dist, trials, seed)?;
            let report = SimulateReport {
                estimate,
                stderr,
                exact,
                z_score: (stderr > 0.0).then(|| (estimate - exact) / stderr),
            };
            print_json(&report)?;
        }
        Cmd::Oracle { m, tol } => {
            let m = require_m(m.or(cfg.m))?;
            let tol = tol.or(cfg.tol).unwrap_or(1e-6);
            let res = numeric_rmsc(m, &dist, k, tol)?;
            let report = OracleReport {
                rate: res.rate,
                gap_certificate: res.gap_certificate,
                iterations: res.iterations,
            };
            print_json(&report)?;
        }
        Cmd::Verify { trials, seed, tol, inject_hull_bug } => {
            let params = verify::Params {
                trials: trials.or(cfg.trials).unwrap_or(100_000),
                seed: seed.or(cfg.seed).unwrap_or(0),
                tol: tol.or(cfg.tol).unwrap_or(1e-6),
                inject_hull_bug,
            };
            let report = verify::run(k, &dist, &params)?;
            print_json(&report)?;
            if report.failed > 0 {
                return Ok(1);
            }
        }
    }
    Ok(0)
}

#[derive(Serialize)]
struct BaseOutput<'a> {
    #[serde(flatten)]
    set: &'a BaseSet,
    staircase: &'a Staircase,
}

#[derive(Serialize)]
struct RateReport {
    rate: f64,
    storage: f64,
}

#[derive(Serialize)]
struct SimulateReport {
    estimate: f64,
    stderr: f64,
    exact: f64,
    z_score: Option<f64>,
}

#[derive(Serialize)]
struct OracleReport {
    rate: f64,
    gap_certificate: f64,
    iterations: u32,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

/// Distribution precedence: `--probs` wins outright; otherwise explicit
/// `--n`/`--zipf` override the config's Zipf parameters field by field; a
/// config distribution untouched by flags is used as is; the fallback is
/// Zipf(5, 1).
fn resolve_distribution(common: &CommonOpts, cfg: &RunConfig) -> Result<DistributionSpec> {
    if let Some(ps) = &common.probs {
        return Ok(DistributionSpec::Probs(ps.clone()));
    }
    if common.n.is_none() && common.zipf.is_none() {
        if let Some(spec) = &cfg.distribution {
            return Ok(spec.clone());
        }
    }
    let (cfg_n, cfg_alpha) = match &cfg.distribution {
        Some(DistributionSpec::Zipf { n, alpha }) => (Some(*n), Some(*alpha)),
        _ => (None, None),
    };
    Ok(DistributionSpec::Zipf {
        n: common.n.or(cfg_n).unwrap_or(5),
        alpha: common.zipf.or(cfg_alpha).unwrap_or(1.0),
    })
}

fn derive_base_set(k: usize, dist: &Distribution) -> Result<BaseSet> {
    let candidates = enumerate_candidates(k, dist)?;
    Ok(build_base_set(k, dist.n_files(), &candidates)?)
}

fn load_base_set(path: &Path) -> Result<BaseSet> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading base cases {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing base cases {}", path.display()))
}

fn require_m(m: Option<f64>) -> Result<f64> {
    m.ok_or_else(|| anyhow::anyhow!("a storage budget is required; pass --m or set m in the config"))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}
