use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use yule_core::acceptance::{self, CRITERIA};
use yule_core::analytic::{self, BoundKind, BoundReport};
use yule_core::branch::grow_branch;
use yule_core::experiment::{self, reports_text, run_experiment, ExperimentConfig};
use yule_core::fe::{self, FeParams};
use yule_core::rng::{child_seed, stream};
use yule_core::stats::wilson_interval;
use yule_core::tree::{self, Probe, TrialBatch};
use yule_core::{Point, SimConfig};

#[derive(Parser)]
#[command(name = "yule", version, about = "Spatial Yule trees: simulation, bounds and the functional-equation solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the simulation subcommands. A `--config` file supplies
/// the same keys (`dim`, `rate`, `horizon`, `trials`, `seed`, `out`);
/// flags given on the command line win.
#[derive(Args, Clone, Default)]
struct Common {
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (directory for `run` and `check`); stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

struct Resolved {
    dim: usize,
    rate: f64,
    horizon: f64,
    trials: u64,
    seed: u64,
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<Resolved> {
        let file = match &self.config {
            Some(p) => read_pairs(p)?,
            None => BTreeMap::new(),
        };
        for key in file.keys() {
            if !["dim", "rate", "horizon", "trials", "seed", "out"].contains(&key.as_str()) {
                bail!("unknown key `{key}` in {}", self.config.as_ref().unwrap().display());
            }
        }
        fn pick<T: std::str::FromStr>(
            flag: Option<T>,
            file: &BTreeMap<String, String>,
            key: &str,
            default: T,
        ) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            if let Some(v) = flag {
                return Ok(v);
            }
            match file.get(key) {
                Some(s) => s.parse().map_err(|e| anyhow::anyhow!("bad `{key}` = `{s}`: {e}")),
                None => Ok(default),
            }
        }
        Ok(Resolved {
            dim: pick(self.dim, &file, "dim", 2)?,
            rate: pick(self.rate, &file, "rate", 1.0)?,
            horizon: pick(self.horizon, &file, "horizon", 1.0)?,
            trials: pick(self.trials, &file, "trials", 1000)?,
            seed: pick(self.seed, &file, "seed", 0)?,
            out: self.out.clone().or_else(|| file.get("out").map(PathBuf::from)),
        })
    }
}

fn read_pairs(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) =
            line.split_once('=').with_context(|| format!("{}:{}: expected key=value", path.display(), n + 1))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

#[derive(Subcommand)]
enum Command {
    /// Grow one tree and write its segments as CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = tree::DEFAULT_MAX_SEGMENTS)]
        max_segments: usize,
    },
    /// Grow one root-to-leaf branch and write its turn points as CSV.
    Branch {
        #[command(flatten)]
        common: Common,
    },
    /// Trial summaries over a grid of rates and horizons.
    RadiusSurvey {
        #[command(flatten)]
        common: Common,
        /// Comma-separated rates (default: `--rate`).
        #[arg(long, value_delimiter = ',')]
        rates: Vec<f64>,
        /// Comma-separated horizons (default: `--horizon`).
        #[arg(long, value_delimiter = ',')]
        horizons: Vec<f64>,
        #[arg(long, default_value_t = tree::DEFAULT_MAX_SEGMENTS)]
        max_segments: usize,
    },
    /// Monte Carlo connection probability to the ball `B(d e_1, r)`.
    ConnectMc {
        #[command(flatten)]
        common: Common,
        /// Distance of the probe centre from the origin.
        #[arg(long)]
        d: f64,
        #[arg(long)]
        r: f64,
        #[arg(long, default_value_t = tree::DEFAULT_MAX_SEGMENTS)]
        max_segments: usize,
    },
    /// Solve the functional equation for the miss probability on a grid.
    SolveFe {
        #[arg(long)]
        rate: f64,
        #[arg(long)]
        r: f64,
        #[arg(long)]
        tmax: f64,
        /// Defaults to `tmax + r`.
        #[arg(long)]
        dmax: Option<f64>,
        #[arg(long, default_value_t = 0.05)]
        dt: f64,
        /// Defaults to `dt`.
        #[arg(long)]
        dd: Option<f64>,
        #[arg(long, default_value_t = 32)]
        nalpha: usize,
        #[arg(long, default_value_t = 32)]
        ns: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the explicit bounds, then run the acceptance criteria (exit code 1 on any failure).
    Check {
        #[arg(long, default_value_t = 20_240_601)]
        seed: u64,
        /// Directory for the bound table and per-criterion summaries.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated criterion numbers (default: all).
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<u8>,
        /// Only print the bound table.
        #[arg(long)]
        bounds_only: bool,
    },
    /// Run one experiment from a key=value config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Extra `key=value` overrides.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(out: &Option<PathBuf>, contents: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            std::io::stdout().write_all(contents.as_bytes())?;
            Ok(())
        }
    }
}

fn warn_budget(config: &SimConfig) {
    let expected = config.expected_segments();
    if expected + 1.0 > config.max_segments as f64 {
        eprintln!(
            "warning: rate {} horizon {} expects about {expected:.3e} segments per tree, cap is {}",
            config.rate, config.horizon, config.max_segments
        );
    }
}

fn sim_config(r: &Resolved, max_segments: usize) -> SimConfig {
    SimConfig::new(r.dim, r.rate, r.horizon).with_seed(r.seed).with_max_segments(max_segments)
}

fn report_failures(batch: &TrialBatch) {
    if !batch.failures.is_empty() {
        eprintln!(
            "warning: {} trials exceeded the segment budget and were dropped (first: trial {} seed {})",
            batch.failures.len(),
            batch.failures[0].trial,
            batch.failures[0].seed
        );
    }
}

fn bound_table() -> Result<Vec<BoundReport>> {
    let mut v = Vec::new();
    for rate in [10.0, 20.0, 40.0] {
        v.push(analytic::radius_lower_bound_product(rate, 0.1)?);
    }
    v.push(analytic::radius_lower_bound_conditional(200.0, 0.05, 0.5, 0.45, 0.5)?);
    for (y, a, b) in [(0.1, 0.3, 1.0), (0.01, 0.7, 2.0)] {
        v.push(analytic::fs_tail_bound(y, a, b)?);
    }
    for (a, b, c, x) in [(1.0, 0.5, 0.3, 2.0), (2.0, 2.0, 0.8, 4.0)] {
        v.push(analytic::exp_max_bound(a, b, c, x)?);
    }
    Ok(v)
}

fn params_text(b: &BoundReport) -> String {
    b.params.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
}

fn bounds_text(bounds: &[BoundReport]) -> String {
    let rows: Vec<(String, String)> = bounds.iter().map(|b| (b.name.clone(), params_text(b))).collect();
    let w0 = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let w1 = rows.iter().map(|r| r.1.len()).max().unwrap_or(0);
    let mut s = String::new();
    for (b, (name, params)) in bounds.iter().zip(&rows) {
        let kind = match b.kind {
            BoundKind::Lower => "lower",
            BoundKind::Upper => "upper",
        };
        let _ =
            writeln!(s, "{name:<w0$}  {kind}  {params:<w1$}  {:<14.6e}  terms {}", b.bound_value, b.truncation_terms);
    }
    s
}

fn bounds_csv(bounds: &[BoundReport]) -> String {
    let mut s = String::from("name,kind,params,bound_value,clamped,truncation_terms\n");
    for b in bounds {
        let kind = if b.kind == BoundKind::Lower { "lower" } else { "upper" };
        let _ = writeln!(
            s,
            "{},{kind},{},{},{},{}",
            b.name,
            params_text(b),
            b.bound_value,
            b.clamped(),
            b.truncation_terms
        );
    }
    s
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate { common, max_segments } => {
            let r = common.resolve()?;
            let config = sim_config(&r, max_segments);
            warn_budget(&config);
            let tree = tree::grow(&config, &mut stream(child_seed(r.seed, 0)))?;
            emit(&r.out, &experiment::segments_csv(&tree))?;
        }
        Command::Branch { common } => {
            let r = common.resolve()?;
            let path = grow_branch(r.rate, r.horizon, r.dim, &mut stream(child_seed(r.seed, 0)))?;
            emit(&r.out, &experiment::branch_csv(&path))?;
        }
        Command::RadiusSurvey { common, rates, horizons, max_segments } => {
            let r = common.resolve()?;
            let rates = if rates.is_empty() { vec![r.rate] } else { rates };
            let horizons = if horizons.is_empty() { vec![r.horizon] } else { horizons };
            let mut csv = String::new();
            let mut k = 0;
            for &rate in &rates {
                for &horizon in &horizons {
                    let config = SimConfig::new(r.dim, rate, horizon)
                        .with_seed(child_seed(r.seed, k))
                        .with_max_segments(max_segments);
                    k += 1;
                    warn_budget(&config);
                    let batch = tree::run_trials(&config, r.trials, &[])?;
                    report_failures(&batch);
                    let body = experiment::trials_csv(&batch);
                    let mut lines = body.lines();
                    let header = lines.next().unwrap_or("");
                    if csv.is_empty() {
                        let _ = writeln!(csv, "rate,horizon,{header}");
                    }
                    for line in lines {
                        let _ = writeln!(csv, "{rate},{horizon},{line}");
                    }
                }
            }
            emit(&r.out, &csv)?;
        }
        Command::ConnectMc { common, d, r: radius, max_segments } => {
            let r = common.resolve()?;
            let config = sim_config(&r, max_segments);
            warn_budget(&config);
            let batch = tree::run_trials(&config, r.trials, &[Probe::new(Point::on_axis(r.dim, d), radius)])?;
            report_failures(&batch);
            let n = batch.records.len() as u64;
            let hits = batch.hit_count(0) as u64;
            let (lo, hi) = wilson_interval(hits, n, 3.0);
            eprintln!("p = {} over {n} trials, 3-sigma Wilson interval [{lo}, {hi}]", hits as f64 / n as f64);
            emit(&r.out, &experiment::trials_csv(&batch))?;
        }
        Command::SolveFe { rate, r, tmax, dmax, dt, dd, nalpha, ns, out } => {
            let params = FeParams {
                rate,
                r,
                t_max: tmax,
                d_max: dmax.unwrap_or(tmax + r),
                dt,
                dd: dd.unwrap_or(dt),
                n_alpha: nalpha,
                n_s: ns,
            };
            let grid = fe::solve(params)?;
            emit(&out, &experiment::fe_csv(&grid))?;
        }
        Command::Check { seed, out, criteria, bounds_only } => {
            let bounds = bound_table()?;
            print!("{}", bounds_text(&bounds));
            if let Some(dir) = &out {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                fs::write(dir.join("bounds.csv"), bounds_csv(&bounds))?;
            }
            if bounds_only {
                return Ok(true);
            }
            for id in &criteria {
                if !CRITERIA.iter().any(|c| c.id == *id) {
                    bail!("no criterion {id}");
                }
            }
            let mut all = true;
            for c in CRITERIA.iter().filter(|c| criteria.is_empty() || criteria.contains(&c.id)) {
                let o = acceptance::run_criterion(c, seed);
                println!("{}", o.line());
                if let Some(dir) = &out {
                    let file = dir.join(format!("criterion_{:02}_{}.csv", c.id, c.kind));
                    fs::write(&file, experiment::reports_csv(&o.reports))
                        .with_context(|| format!("writing {}", file.display()))?;
                }
                all &= o.passed;
            }
            return Ok(all);
        }
        Command::Run { config, overrides, trials, seed, out } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            for kv in &overrides {
                let (k, v) = kv.split_once('=').with_context(|| format!("`{kv}` is not key=value"))?;
                cfg.set(k.trim(), v.trim())?;
            }
            if let Some(t) = trials {
                cfg.n_trials = t;
            }
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if out.is_some() {
                cfg.output_path = out;
            }
            let result = run_experiment(&cfg)?;
            print!("{}", reports_text(&result.reports));
            return Ok(result.passed());
        }
    }
    Ok(true)
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("YULE_THREADS") {
        let n: usize = v.parse().with_context(|| format!("YULE_THREADS = `{v}`"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads().and_then(|_| run(cli)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
