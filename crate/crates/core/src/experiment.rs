//! Experiment orchestration: flat key=value configs, the experiment kinds,
//! their statistical reports and the CSV artifacts they write.
//!
//! Every kind is deterministic given `master_seed`; sub-runs draw from
//! `child_seed(master_seed, k)` so rerunning a config reproduces its CSV
//! files byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand_distr::{Distribution, Geometric};
use thiserror::Error;

use crate::analytic::{self, AnalyticError, BoundReport, ConnectionParams};
use crate::branch::{self, BranchError, BranchPath};
use crate::explore::{self, TargetPlan};
use crate::fe::{self, FeError, FeGrid, FeParams};
use crate::geometry::{self, ball_lattice, GeometryError, Point, SegmentGrid, SegmentView};
use crate::rng::{child_seed, stream};
use crate::stats::{self, StatError, StatReport};
use crate::tree::{self, Probe, SimConfig, SimError, Tree, TrialBatch};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown experiment kind `{0}`")]
    UnknownKind(String),
    #[error("config has no `kind`")]
    MissingKind,
    #[error("`{key}` is not a parameter of `{kind}`")]
    UnknownKey { kind: &'static str, key: String },
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{failed} of {total} trials exceeded the segment budget")]
    Budget { failed: usize, total: u64 },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Fe(#[from] FeError),
    #[error(transparent)]
    Stat(#[from] StatError),
    #[error(transparent)]
    Branch(#[from] BranchError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

type Result<T> = std::result::Result<T, ExperimentError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExperimentKind {
    LeafDist,
    Length,
    Scaling,
    Moments,
    BranchCollapse,
    RadiusTail,
    Bounds,
    FeVsMc,
    Hausdorff,
    Holes,
    Connect,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 11] = [
        ExperimentKind::LeafDist,
        ExperimentKind::Length,
        ExperimentKind::Scaling,
        ExperimentKind::Moments,
        ExperimentKind::BranchCollapse,
        ExperimentKind::RadiusTail,
        ExperimentKind::Bounds,
        ExperimentKind::FeVsMc,
        ExperimentKind::Hausdorff,
        ExperimentKind::Holes,
        ExperimentKind::Connect,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::LeafDist => "leafdist",
            ExperimentKind::Length => "length",
            ExperimentKind::Scaling => "scaling",
            ExperimentKind::Moments => "moments",
            ExperimentKind::BranchCollapse => "branch-collapse",
            ExperimentKind::RadiusTail => "radius-tail",
            ExperimentKind::Bounds => "bounds",
            ExperimentKind::FeVsMc => "fe-vs-mc",
            ExperimentKind::Hausdorff => "hausdorff",
            ExperimentKind::Holes => "holes",
            ExperimentKind::Connect => "connect",
        }
    }

    /// Default trial count.
    pub fn default_trials(self) -> u64 {
        match self {
            ExperimentKind::LeafDist
            | ExperimentKind::Length
            | ExperimentKind::Moments
            | ExperimentKind::Bounds
            | ExperimentKind::FeVsMc => 100_000,
            ExperimentKind::Scaling
            | ExperimentKind::BranchCollapse
            | ExperimentKind::RadiusTail
            | ExperimentKind::Connect => 10_000,
            ExperimentKind::Hausdorff | ExperimentKind::Holes => 200,
        }
    }

    /// Parameters and their default values.
    pub fn defaults(self) -> &'static [(&'static str, &'static str)] {
        match self {
            ExperimentKind::LeafDist | ExperimentKind::Length => {
                &[("dim", "2"), ("rate", "1"), ("horizon", "1"), ("tol", "0.01")]
            }
            ExperimentKind::Scaling => &[("dim", "2"), ("rate", "1"), ("horizon", "5"), ("s", "5")],
            ExperimentKind::Moments => &[("dim", "2"), ("rate", "1"), ("k", "9"), ("z_max", "4"), ("tol", "0.05")],
            ExperimentKind::BranchCollapse => &[("dim", "2"), ("rates", "1,4,16,64"), ("horizon", "1")],
            ExperimentKind::RadiusTail => {
                &[("dim", "2"), ("rates", "10,20,40"), ("eps", "0.1"), ("full_limit", "100000"), ("budget", "1000000")]
            }
            ExperimentKind::Bounds => &[
                ("fs_y", "0.5,0.1,0.01"),
                ("fs_a", "0.3,0.7"),
                ("fs_b", "0.5,1,2"),
                ("max_a", "1,2"),
                ("max_b", "0.5,2"),
                ("max_c", "0.3,0.8"),
                ("max_x", "1,2,4"),
                ("ks_y", "0.001"),
                ("ks_tol", "0.01"),
            ],
            ExperimentKind::FeVsMc => &[
                ("dim", "2"),
                ("rate", "1"),
                ("r", "0.3"),
                ("points", "1:0.5,1:0.9,2:1.0,2:1.5,0.5:0.6"),
                ("step", "0.05"),
                ("levels", "3"),
                ("n_alpha", "32"),
                ("n_s", "32"),
                ("tol", "0.02"),
                ("rate0_tol", "1e-10"),
                ("min_ratio", "2"),
            ],
            ExperimentKind::Hausdorff => &[
                ("dim", "2"),
                ("rates", "10,50"),
                ("horizon", "1"),
                ("d", "0.45"),
                ("grid_step", "0.02"),
                ("full_limit", "100000"),
                ("budget", "200000"),
                ("per_target", "2000"),
            ],
            ExperimentKind::Holes => &[
                ("dim", "2"),
                ("rate", "50"),
                ("horizon", "1"),
                ("d", "0.45"),
                ("delta", "0.2"),
                ("a", "0.5"),
                ("alpha", "1"),
                ("control_rate", "0"),
                ("control_delta", "0.1"),
                ("control_min", "0.99"),
                ("full_limit", "100000"),
                ("budget", "200000"),
                ("per_target", "2000"),
            ],
            ExperimentKind::Connect => &[("dim", "2"), ("rate", "1"), ("t", "2"), ("r", "0.4"), ("d", "1"), ("s", "1")],
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| ExperimentError::UnknownKind(s.to_string()))
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One experiment: its kind, parameter overrides, trial count, seed and
/// the directory CSV artifacts go to (none: keep them in memory only).
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub params: BTreeMap<String, String>,
    pub n_trials: u64,
    pub master_seed: u64,
    pub output_path: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        ExperimentConfig {
            kind,
            params: kind.defaults().iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            n_trials: kind.default_trials(),
            master_seed: 0,
            output_path: None,
        }
    }

    /// Parses `key = value` lines; `#` starts a comment. `kind` must appear.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut kind = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ExperimentError::Syntax {
                    line: n + 1,
                    message: format!("expected key=value, got `{line}`"),
                });
            };
            let (k, v) = (k.trim(), v.trim());
            if k == "kind" {
                kind = Some(v.parse::<ExperimentKind>()?);
            } else {
                pairs.push((k.to_string(), v.to_string()));
            }
        }
        let mut cfg = ExperimentConfig::new(kind.ok_or(ExperimentError::MissingKind)?);
        for (k, v) in pairs {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|source| ExperimentError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    /// Sets one key; `trials`, `seed` and `out` address the fixed fields.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "trials" => self.n_trials = parse_value(key, value)?,
            "seed" => self.master_seed = parse_value(key, value)?,
            "out" => self.output_path = Some(PathBuf::from(value)),
            _ => {
                if !self.params.contains_key(key) {
                    return Err(ExperimentError::UnknownKey { kind: self.kind.name(), key: key.to_string() });
                }
                self.params.insert(key.to_string(), value.to_string());
            }
        }
        Ok(())
    }

    /// Checks that every parameter parses and lies in its range.
    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(bad("trials", "0", "must be positive"));
        }
        for key in self.params.keys() {
            match key.as_str() {
                "rates" | "fs_y" | "fs_a" | "fs_b" | "max_a" | "max_b" | "max_c" | "max_x" => {
                    let v = self.list(key)?;
                    if v.is_empty() {
                        return Err(bad(key, "", "empty list"));
                    }
                }
                "points" => {
                    self.points()?;
                }
                "dim" | "k" | "levels" | "n_alpha" | "n_s" | "budget" | "per_target" => {
                    let v = self.usize(key)?;
                    if v == 0 {
                        return Err(bad(key, "0", "must be positive"));
                    }
                }
                _ => {
                    let v = self.f64(key)?;
                    if !v.is_finite() {
                        return Err(bad(key, &self.params[key], "must be finite"));
                    }
                }
            }
        }
        Ok(())
    }

    fn raw(&self, key: &str) -> &str {
        self.params.get(key).map(String::as_str).unwrap_or_else(|| panic!("`{key}` has a default for {}", self.kind))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        parse_value(key, self.raw(key))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        let v: f64 = parse_value(key, self.raw(key))?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(bad(key, self.raw(key), "not a non-negative integer"));
        }
        Ok(v as usize)
    }

    pub fn list(&self, key: &str) -> Result<Vec<f64>> {
        self.raw(key).split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_value(key, s.trim())).collect()
    }

    /// `t:d` pairs separated by commas.
    pub fn points(&self) -> Result<Vec<(f64, f64)>> {
        self.raw("points")
            .split(',')
            .map(|p| {
                let (t, d) = p.split_once(':').ok_or_else(|| bad("points", p, "expected t:d"))?;
                Ok((parse_value("points", t.trim())?, parse_value("points", d.trim())?))
            })
            .collect()
    }

    /// Renders the config back to key=value text.
    pub fn to_text(&self) -> String {
        let mut s = format!("kind = {}\ntrials = {}\nseed = {}\n", self.kind, self.n_trials, self.master_seed);
        if let Some(p) = &self.output_path {
            let _ = writeln!(s, "out = {}", p.display());
        }
        for (k, v) in &self.params {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

fn bad(key: &str, value: &str, reason: &str) -> ExperimentError {
    ExperimentError::BadValue { key: key.to_string(), value: value.to_string(), reason: reason.to_string() }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| bad(key, value, &e.to_string()))
}

/// A CSV file produced by an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub file_name: String,
    pub contents: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub kind: ExperimentKind,
    pub reports: Vec<StatReport>,
    pub artifacts: Vec<Artifact>,
}

impl ExperimentOutput {
    pub fn passed(&self) -> bool {
        !self.reports.is_empty() && self.reports.iter().all(|r| r.passed)
    }
}

/// Runs `cfg`, writing `<kind>_*.csv` and `<kind>_summary.csv` under
/// `cfg.output_path` when it is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let mut out = match cfg.kind {
        ExperimentKind::LeafDist => leafdist(cfg)?,
        ExperimentKind::Length => length(cfg)?,
        ExperimentKind::Scaling => scaling(cfg)?,
        ExperimentKind::Moments => moments(cfg)?,
        ExperimentKind::BranchCollapse => branch_collapse(cfg)?,
        ExperimentKind::RadiusTail => radius_tail(cfg)?,
        ExperimentKind::Bounds => bounds(cfg)?,
        ExperimentKind::FeVsMc => fe_vs_mc(cfg)?,
        ExperimentKind::Hausdorff => hausdorff(cfg)?,
        ExperimentKind::Holes => holes(cfg)?,
        ExperimentKind::Connect => connect(cfg)?,
    };
    out.artifacts
        .push(Artifact { file_name: format!("{}_summary.csv", cfg.kind), contents: reports_csv(&out.reports) });
    if let Some(dir) = &cfg.output_path {
        write_artifacts(dir, &out.artifacts)?;
    }
    Ok(out)
}

pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| ExperimentError::Io { path: dir.to_path_buf(), source })?;
    for a in artifacts {
        let path = dir.join(&a.file_name);
        fs::write(&path, &a.contents).map_err(|source| ExperimentError::Io { path, source })?;
    }
    Ok(())
}

fn output(kind: ExperimentKind, reports: Vec<StatReport>, artifacts: Vec<(&str, String)>) -> ExperimentOutput {
    ExperimentOutput {
        kind,
        reports,
        artifacts: artifacts
            .into_iter()
            .map(|(suffix, contents)| Artifact { file_name: format!("{kind}_{suffix}.csv"), contents })
            .collect(),
    }
}

/// Maps `f` over trial indices, in parallel when the feature is on.
fn map_trials<T, F>(n: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

fn full_batch(config: &SimConfig, n: u64, probes: &[Probe]) -> Result<TrialBatch> {
    let batch = tree::run_trials(config, n, probes)?;
    if !batch.failures.is_empty() {
        return Err(ExperimentError::Budget { failed: batch.failures.len(), total: n });
    }
    Ok(batch)
}

fn sim_config(cfg: &ExperimentConfig, rate: f64, horizon: f64, sub: u64) -> Result<SimConfig> {
    Ok(SimConfig::new(cfg.usize("dim")?, rate, horizon).with_seed(child_seed(cfg.master_seed, sub)))
}

fn leafdist(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let (rate, horizon, tol) = (cfg.f64("rate")?, cfg.f64("horizon")?, cfg.f64("tol")?);
    let config = sim_config(cfg, rate, horizon, 0)?;
    let n = cfg.n_trials;
    let batch = full_batch(&config, n, &[])?;
    let y = (-rate * horizon).exp();
    // Bins k = 1..K while each expects at least 5, then the tail N > K.
    let mut probs = Vec::new();
    let mut k = 1u64;
    loop {
        let p = analytic::fs_pmf(y, k)?;
        if p * n as f64 >= 5.0 || k == 1 {
            probs.push(p);
            k += 1;
        } else {
            break;
        }
    }
    let kmax = probs.len() as u64;
    probs.push(1.0 - analytic::fs_cdf(y, kmax));
    let mut observed = vec![0u64; probs.len()];
    for s in batch.summaries() {
        let bin = (s.leaf_count as u64).min(kmax + 1) as usize - 1;
        observed[bin] += 1;
    }
    let chi = stats::chi_square_gof(&observed, &probs, 5.0)?.with_seed(config.master_seed, n);
    let counts: Vec<f64> = batch.summaries().map(|s| s.leaf_count as f64).collect();
    let m = stats::mean(&counts);
    let expected = (rate * horizon).exp();
    let rel = (m / expected - 1.0).abs();
    let mean_rep = StatReport::new("leaf_count_mean", rel, tol, rel <= tol)
        .with_seed(config.master_seed, n)
        .with_detail(format!("mean {m} vs {expected}"));
    let chi = StatReport { name: "leaf_count_chi_square".into(), ..chi };
    Ok(output(cfg.kind, vec![chi, mean_rep], vec![("trials", trials_csv(&batch))]))
}

fn length(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let (rate, horizon, tol) = (cfg.f64("rate")?, cfg.f64("horizon")?, cfg.f64("tol")?);
    let config = sim_config(cfg, rate, horizon, 0)?;
    let batch = full_batch(&config, cfg.n_trials, &[])?;
    let lengths: Vec<f64> = batch.summaries().map(|s| s.total_length).collect();
    let m = stats::mean(&lengths);
    let se = (stats::variance(&lengths) / lengths.len() as f64).sqrt();
    let expected = analytic::length_mean(rate, horizon);
    let rel = (m / expected - 1.0).abs();
    let rep = StatReport::new("total_length_mean", rel, tol, rel <= tol)
        .with_seed(config.master_seed, cfg.n_trials)
        .with_interval(m - 3.0 * se, m + 3.0 * se)
        .with_detail(format!("mean {m} vs {expected}"));
    Ok(output(cfg.kind, vec![rep], vec![("trials", trials_csv(&batch))]))
}

fn scaling(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let (rate, horizon, s) = (cfg.f64("rate")?, cfg.f64("horizon")?, cfg.f64("s")?);
    if !(s > 0.0) {
        return Err(bad("s", &s.to_string(), "must be positive"));
    }
    let left_cfg = sim_config(cfg, rate, horizon, 0)?;
    let right_cfg = sim_config(cfg, rate * s, horizon / s, 1)?;
    let n = cfg.n_trials;
    let left = full_batch(&left_cfg, n, &[])?;
    let right = full_batch(&right_cfg, n, &[])?;
    let column = |b: &TrialBatch, f: &dyn Fn(&tree::TrialSummary) -> f64| b.summaries().map(f).collect::<Vec<f64>>();
    let l_radius = column(&left, &|t| t.radius / s);
    let r_radius = column(&right, &|t| t.radius);
    let l_length = column(&left, &|t| t.total_length / s);
    let r_length = column(&right, &|t| t.total_length);
    let l_leaves = column(&left, &|t| t.leaf_count as f64);
    let r_leaves = column(&right, &|t| t.leaf_count as f64);
    let mut reports = Vec::new();
    for (name, a, b) in [
        ("scaling_radius_ks", &l_radius, &r_radius),
        ("scaling_length_ks", &l_length, &r_length),
        ("scaling_leaf_count_ks", &l_leaves, &r_leaves),
    ] {
        let rep = stats::ks_two_sample(a, b)?;
        reports.push(StatReport { name: name.into(), ..rep }.with_seed(cfg.master_seed, n));
    }
    let mut csv = String::from("trial,left_radius,left_length,left_leaves,right_radius,right_length,right_leaves\n");
    for i in 0..l_radius.len() {
        let _ = writeln!(
            csv,
            "{i},{},{},{},{},{},{}",
            l_radius[i], l_length[i], l_leaves[i], r_radius[i], r_length[i], r_leaves[i]
        );
    }
    Ok(output(cfg.kind, reports, vec![("samples", csv)]))
}

fn moments(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let (dim, rate, k) = (cfg.usize("dim")?, cfg.f64("rate")?, cfg.usize("k")?);
    let (z_max, tol) = (cfg.f64("z_max")?, cfg.f64("tol")?);
    let seed = child_seed(cfg.master_seed, 0);
    let n = cfg.n_trials;
    let m = branch::walk_moments(rate, dim, k, n, &mut stream(seed))?;
    let exact = branch::walk_variance_exact(rate, dim, k);
    let bound = branch::walk_variance_bound(rate, k);
    let mut reports = Vec::new();
    let mut csv = String::from("quantity,value,se,target\n");
    let z_report = |name: String, e: branch::Estimate, reports: &mut Vec<StatReport>, csv: &mut String| {
        let z = e.z(0.0);
        let _ = writeln!(csv, "{name},{},{},0", e.value, e.se);
        reports.push(StatReport::new(name, z, z_max, z <= z_max).with_seed(seed, n));
    };
    for (c, e) in m.mean.iter().enumerate() {
        z_report(format!("mean_x{c}"), *e, &mut reports, &mut csv);
    }
    for (c, e) in m.variance.iter().enumerate() {
        let _ = writeln!(csv, "variance_x{c},{},{},{exact}", e.value, e.se);
        reports
            .push(StatReport::new(format!("variance_x{c}_bound"), e.value, bound, e.value <= bound).with_seed(seed, n));
        let rel = (e.value / exact - 1.0).abs();
        reports.push(
            StatReport::new(format!("variance_x{c}_exact"), rel, tol, rel <= tol)
                .with_seed(seed, n)
                .with_detail(format!("{} vs {exact}", e.value)),
        );
    }
    if let Some(e) = m.correlation {
        z_report("correlation_x0_x1".into(), e, &mut reports, &mut csv);
    }
    for (c, e) in m.increment_mean.iter().enumerate() {
        z_report(format!("increment_mean_x{c}"), *e, &mut reports, &mut csv);
    }
    let mut worst = 0.0f64;
    for lag in &m.increment_past {
        let _ = writeln!(csv, "increment_past_{}_x{},{},{},0", lag.past_step, lag.coord, lag.cov.value, lag.cov.se);
        worst = worst.max(lag.cov.z(0.0));
    }
    if !m.increment_past.is_empty() {
        reports.push(
            StatReport::new("increment_past_covariance", worst, z_max, worst <= z_max)
                .with_seed(seed, n)
                .with_detail(format!("largest |z| over {} covariances", m.increment_past.len())),
        );
    }
    Ok(output(cfg.kind, reports, vec![("moments", csv)]))
}

fn branch_collapse(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let (dim, horizon) = (cfg.usize("dim")?, cfg.f64("horizon")?);
    let rates = cfg.list("rates")?;
    let n = cfg.n_trials;
    let mut csv = String::from("rate,trial,max_displacement\n");
    let mut medians = Vec::new();
    let mut reports = Vec::new();
    for (k, &rate) in rates.iter().enumerate() {
        let master = child_seed(cfg.master_seed, k as u64);
        let values: std::result::Result<Vec<f64>, BranchError> = map_trials(n, |i| {
            let path = branch::grow_branch(rate, horizon, dim, &mut stream(child_seed(master, i)))?;
            Ok(branch::max_displacement(&path))
        })
        .into_iter()
        .collect();
        let values = values?;
        for (i, v) in values.iter().enumerate() {
            let _ = writeln!(csv, "{rate},{i},{v}");
        }
        let med = stats::median(&values);
        reports.push(
            StatReport::new(format!("median_max_displacement_rate_{rate}"), med, f64::NAN, true).with_seed(master, n),
        );
        medians.push(med);
    }
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    reports.push(
        StatReport::new(
            "median_strictly_decreasing",
            medians.last().copied().unwrap_or(f64::NAN),
            f64::NAN,
            decreasing,
        )
        .with_seed(cfg.master_seed, n)
        .with_detail(format!("medians {medians:?} over rates {rates:?}")),
    );
    Ok(output(cfg.kind, reports, vec![("displacements", csv)]))
}

/// Whether the tree of `config` reaches distance `radius` from the origin,
/// decided on a subset grown toward the point `(radius + cover) e_1`.
/// A subset that reaches `radius` proves the full tree does; the converse
/// can fail, so hit frequencies from here never exceed the true ones.
pub fn reaches_radius(config: &SimConfig, radius: f64, per_target: usize, seed: u64) -> Result<(bool, usize)> {
    let cover = 0.01;
    let plan = TargetPlan {
        targets: vec![Point::on_axis(config.dim, radius + cover).into_inner()],
        cover,
        per_target,
        cell: 2.0 * cover,
    };
    let partial = explore::grow_toward(config, &plan, &mut stream(seed))?;
    let far = partial.segments().map(|s| geometry::norm(s.end)).fold(0.0, f64::max);
    Ok((far >= radius, partial.segment_count()))
}

fn radius_tail(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let eps = cfg.f64("eps")?;
    let rates = cfg.list("rates")?;
    let (full_limit, budget) = (cfg.f64("full_limit")?, cfg.usize("budget")?);
    let threshold = 0.5 - eps;
    let n = cfg.n_trials;
    let mut csv = String::from("rate,method,hits,trials,frequency,se,bound,satisfied\n");
    let mut reports = Vec::new();
    let mut bounds = Vec::new();
    for (k, &rate) in rates.iter().enumerate() {
        let config = sim_config(cfg, rate, 1.0, k as u64)?.with_max_segments(budget);
        let bound = analytic::radius_lower_bound_product(rate, eps)?;
        let full = config.expected_segments() <= full_limit;
        let hits = if full {
            let batch = tree::run_trials(&config, n, &[])?;
            // Trials over budget count as misses, which only lowers the frequency.
            batch.summaries().filter(|s| s.radius >= threshold).count() as u64
        } else {
            let master = config.master_seed;
            let results: Result<Vec<(bool, usize)>> =
                map_trials(n, |i| reaches_radius(&config, threshold, budget, child_seed(master, i)))
                    .into_iter()
                    .collect();
            results?.iter().filter(|r| r.0).count() as u64
        };
        let freq = hits as f64 / n as f64;
        let se = stats::binomial_se(freq, n);
        let checked = bound.clone().with_empirical(freq, se);
        let ok = checked.satisfied == Some(true);
        let method = if full { "full" } else { "subset" };
        let _ = writeln!(csv, "{rate},{method},{hits},{n},{freq},{se},{},{ok}", bound.bound_value);
        let (lo, hi) = stats::wilson_interval(hits, n, 3.0);
        reports.push(
            StatReport::new(format!("radius_tail_rate_{rate}"), freq, bound.bound_value, ok)
                .with_seed(config.master_seed, n)
                .with_interval(lo, hi)
                .with_detail(format!("P(R >= {threshold}) by {method} growth; frequency + 3se >= bound")),
        );
        bounds.push(bound.bound_value);
    }
    let monotone = bounds.windows(2).all(|w| w[1] >= w[0]);
    if let Some(last) = reports.last_mut() {
        last.detail.push_str(&format!("; bound nondecreasing in rate: {monotone}"));
    }
    Ok(output(cfg.kind, reports, vec![("frequencies", csv)]))
}

fn bounds(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut csv = String::from("name,p1,p2,p3,p4,exact,bound,satisfied\n");
    let mut violations = 0usize;
    let mut checks = 0usize;
    for &y in &cfg.list("fs_y")? {
        for &a in &cfg.list("fs_a")? {
            for &b in &cfg.list("fs_b")? {
                let rep = analytic::fs_tail_bound(y, a, b)?;
                let m = (b * y.powf(-a)).floor() as u64;
                let exact = analytic::fs_cdf(y, m);
                let ok = exact <= rep.bound_value;
                violations += usize::from(!ok);
                checks += 1;
                let _ = writeln!(csv, "fs_tail,{y},{a},{b},,{exact},{},{ok}", rep.bound_value);
            }
        }
    }
    for &a in &cfg.list("max_a")? {
        for &b in &cfg.list("max_b")? {
            for &c in &cfg.list("max_c")? {
                for &x in &cfg.list("max_x")? {
                    let rep: BoundReport = analytic::exp_max_bound(a, b, c, x)?;
                    let exact = analytic::exp_max_exact(a, b, c, x);
                    let ok = exact <= rep.bound_value;
                    violations += usize::from(!ok);
                    checks += 1;
                    let _ = writeln!(csv, "exp_max,{a},{b},{c},{x},{exact},{},{ok}", rep.bound_value);
                }
            }
        }
    }
    let mut reports = vec![StatReport::new("bound_violations", violations as f64, 0.0, violations == 0)
        .with_detail(format!("{checks} parameter points"))];

    let (y, tol) = (cfg.f64("ks_y")?, cfg.f64("ks_tol")?);
    let seed = child_seed(cfg.master_seed, 0);
    let geo = Geometric::new(y).map_err(|e| bad("ks_y", &y.to_string(), &e.to_string()))?;
    let mut rng = stream(seed);
    let sample: Vec<f64> = (0..cfg.n_trials).map(|_| y * (geo.sample(&mut rng) + 1) as f64).collect();
    let ks = stats::ks_one_sample(&sample, |x| -(-x).exp_m1())?;
    let d = ks.statistic;
    reports.push(
        StatReport { name: "scaled_leaf_count_exp1_ks".into(), threshold: tol, passed: d < tol, ..ks }
            .with_seed(seed, cfg.n_trials)
            .with_detail(format!("y = {y}; pass when the distance is below {tol}")),
    );
    Ok(output(cfg.kind, reports, vec![("scan", csv)]))
}

fn fe_vs_mc(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let (rate, r, step) = (cfg.f64("rate")?, cfg.f64("r")?, cfg.f64("step")?);
    let (levels, n_alpha, n_s) = (cfg.usize("levels")?, cfg.usize("n_alpha")?, cfg.usize("n_s")?);
    let (tol, rate0_tol, min_ratio) = (cfg.f64("tol")?, cfg.f64("rate0_tol")?, cfg.f64("min_ratio")?);
    let points = cfg.points()?;
    let t_max = points.iter().map(|p| p.0).fold(0.0, f64::max);
    let t_max = (t_max / step).ceil() * step;
    let base = FeParams::square(rate, r, t_max, step).with_orders(n_alpha, n_s);
    let mut reports = Vec::new();

    let grids: Vec<FeGrid> =
        (0..levels.max(1)).map(|l| fe::solve(base.refined(1 << l))).collect::<std::result::Result<_, _>>()?;
    let diffs: Vec<f64> = grids
        .windows(2)
        .map(|w| fe::limit_consistency(&w[0], &w[1]).map(|c| c.max_diff))
        .collect::<std::result::Result<_, _>>()?;
    for (l, pair) in diffs.windows(2).enumerate() {
        let ratio = pair[0] / pair[1];
        reports.push(
            StatReport::new(format!("refinement_ratio_{l}"), ratio, min_ratio, ratio >= min_ratio)
                .with_detail(format!("discrepancies {} then {}", pair[0], pair[1])),
        );
    }

    let zero = fe::solve(FeParams { rate: 0.0, ..base })?;
    let jr = (r / step).round() as usize;
    let mut worst = 0.0f64;
    for i in 1..=zero.nt() {
        for j in jr + 1..=zero.nd() {
            if i + jr > j {
                let f = analytic::miss_given_no_branch(zero.t(i), zero.d(j), r)?;
                worst = worst.max((zero.value(i, j) - f).abs());
            }
        }
    }
    reports.push(StatReport::new("rate_zero_matches_single_segment", worst, rate0_tol, worst <= rate0_tol));

    let finest = grids.last().expect("at least one level");
    let n = cfg.n_trials;
    let mut csv = String::from("t,d,q_solver,q_mc,se\n");
    for (k, &(t, d)) in points.iter().enumerate() {
        let config = sim_config(cfg, rate, t, k as u64)?;
        let batch = full_batch(&config, n, &[Probe::new(Point::on_axis(config.dim, d), r)])?;
        let q_mc = 1.0 - batch.hit_fraction(0);
        let se = stats::binomial_se(q_mc, n);
        let q = finest.interpolate(t, d)?;
        let diff = (q - q_mc).abs();
        let _ = writeln!(csv, "{t},{d},{q},{q_mc},{se}");
        let hits = batch.hit_count(0) as u64;
        let (lo, hi) = stats::wilson_interval(n - hits, n, 3.0);
        reports.push(
            StatReport::new(format!("solver_vs_mc_t{t}_d{d}"), diff, tol, diff <= tol)
                .with_seed(config.master_seed, n)
                .with_interval(lo, hi)
                .with_detail(format!("solver {q}, monte carlo {q_mc}")),
        );
    }
    Ok(output(cfg.kind, reports, vec![("points", csv), ("grid", fe_csv(finest))]))
}

/// Lattice for the Hausdorff estimate together with the plan that grows a
/// subset of the tree toward it.
fn ball_plan(dim: usize, d: f64, grid_step: f64, per_target: usize) -> TargetPlan {
    TargetPlan {
        targets: ball_lattice(&vec![0.0; dim], d - grid_step / 2.0, grid_step),
        cover: grid_step / 2.0,
        per_target,
        cell: grid_step,
    }
}

fn hausdorff(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let (dim, horizon, d, grid_step) = (cfg.usize("dim")?, cfg.f64("horizon")?, cfg.f64("d")?, cfg.f64("grid_step")?);
    let (full_limit, budget, per_target) = (cfg.f64("full_limit")?, cfg.usize("budget")?, cfg.usize("per_target")?);
    let rates = cfg.list("rates")?;
    let n = cfg.n_trials;
    let centre = Point::origin(dim);
    let plan = ball_plan(dim, d, grid_step, per_target);
    let mut csv = String::from("rate,trial,method,segments,distance,empty\n");
    let mut medians = Vec::new();
    let mut reports = Vec::new();
    for (k, &rate) in rates.iter().enumerate() {
        let full = SimConfig::new(dim, rate, horizon).expected_segments() <= full_limit;
        let config = sim_config(cfg, rate, horizon, k as u64)?;
        let config = if full { config } else { config.with_max_segments(budget) };
        let rows: Result<Vec<(usize, geometry::HausdorffEstimate)>> = map_trials(n, |i| {
            if full {
                let t = tree::grow_trial(&config, i)?;
                Ok((t.segment_count(), geometry::hausdorff_to_ball(t.segments(), &centre, d, grid_step)?))
            } else {
                let p = explore::grow_toward(&config, &plan, &mut stream(child_seed(config.master_seed, i)))?;
                Ok((p.segment_count(), geometry::hausdorff_to_ball(p.segments(), &centre, d, grid_step)?))
            }
        })
        .into_iter()
        .collect();
        let rows = rows?;
        let method = if full { "full" } else { "subset" };
        for (i, (segs, h)) in rows.iter().enumerate() {
            let _ = writeln!(csv, "{rate},{i},{method},{segs},{},{}", h.value, h.empty);
        }
        let values: Vec<f64> = rows.iter().map(|r| r.1.value).collect();
        let med = stats::median(&values);
        reports.push(
            StatReport::new(format!("median_hausdorff_rate_{rate}"), med, f64::NAN, true)
                .with_seed(config.master_seed, n)
                .with_detail(format!("{method} growth")),
        );
        medians.push(med);
    }
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    reports.push(
        StatReport::new(
            "median_hausdorff_decreasing",
            medians.last().copied().unwrap_or(f64::NAN),
            f64::NAN,
            decreasing,
        )
        .with_seed(cfg.master_seed, n)
        .with_detail(format!("medians {medians:?} over rates {rates:?}")),
    );
    Ok(output(cfg.kind, reports, vec![("distances", csv)]))
}

/// Parameters of a hole-frequency estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct HoleParams {
    pub dim: usize,
    pub rate: f64,
    pub t: f64,
    pub d: f64,
    pub delta: f64,
    pub a: f64,
    pub alpha: f64,
    pub seed: u64,
    /// Largest expected segment count grown in full.
    pub full_limit: f64,
    pub budget: usize,
    pub per_target: usize,
}

impl HoleParams {
    pub fn new(rate: f64, t: f64, d: f64, delta: f64) -> Self {
        HoleParams {
            dim: 2,
            rate,
            t,
            d,
            delta,
            a: 0.5,
            alpha: 1.0,
            seed: 0,
            full_limit: 1e5,
            budget: 200_000,
            per_target: 2000,
        }
    }

    /// `(δt/2) Z^D ∩ B(0, td − δt/4)`.
    pub fn lattice(&self) -> Vec<Vec<f64>> {
        let radius = self.t * self.d - self.delta * self.t / 4.0;
        ball_lattice(&vec![0.0; self.dim], radius, self.delta * self.t / 2.0)
    }

    /// `8d²(1 + α)`.
    pub fn constant(&self) -> f64 {
        8.0 * self.d * self.d * (1.0 + self.alpha)
    }

    pub fn bound(&self) -> f64 {
        analytic::hole_probability_bound(self.constant(), self.delta, self.dim, self.a, self.rate, self.t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoleOutcome {
    pub report: StatReport,
    pub lattice_size: usize,
    pub bound: f64,
    /// Per trial: segments grown and lattice points left uncovered.
    pub trials: Vec<(usize, usize)>,
}

fn uncovered<'a>(segments: impl Iterator<Item = SegmentView<'a>>, lattice: &[Vec<f64>], dim: usize, gap: f64) -> usize {
    let mut grid = SegmentGrid::new(dim, gap);
    for s in segments {
        grid.insert(s.start, s.end);
    }
    lattice.iter().filter(|x| grid.nearest(x, gap) > gap).count()
}

/// Frequency of `∃x ∈ X_δ: dist(T, x) > δt` against the explicit bound.
///
/// Large trees are replaced by a subset grown toward the lattice, which
/// can only leave more points uncovered, so the frequency is an
/// overestimate there.
pub fn hole_probability(p: &HoleParams, n_trials: u64) -> Result<HoleOutcome> {
    if !(p.delta > 0.0 && p.delta < 1.0) {
        return Err(bad("delta", &p.delta.to_string(), "not in (0, 1)"));
    }
    if !(p.d > 0.0 && p.d <= 1.0) {
        return Err(bad("d", &p.d.to_string(), "not in (0, 1]"));
    }
    let lattice = p.lattice();
    let bound = p.bound();
    let gap = p.delta * p.t;
    let config = SimConfig::new(p.dim, p.rate, p.t).with_seed(p.seed);
    config.validate()?;
    let full = config.expected_segments() <= p.full_limit;
    let trials: Vec<(usize, usize)> = if lattice.is_empty() {
        vec![(0, 0); n_trials as usize]
    } else {
        let config = if full { config.clone() } else { config.clone().with_max_segments(p.budget) };
        let plan = TargetPlan { targets: lattice.clone(), cover: gap, per_target: p.per_target, cell: gap };
        let rows: Result<Vec<(usize, usize)>> = map_trials(n_trials, |i| {
            if full {
                let t: Tree = tree::grow_trial(&config, i)?;
                Ok((t.segment_count(), uncovered(t.segments(), &lattice, p.dim, gap)))
            } else {
                let t = explore::grow_toward(&config, &plan, &mut stream(child_seed(config.master_seed, i)))?;
                Ok((t.segment_count(), uncovered(t.segments(), &lattice, p.dim, gap)))
            }
        })
        .into_iter()
        .collect();
        rows?
    };
    let holes = trials.iter().filter(|t| t.1 > 0).count() as u64;
    let freq = holes as f64 / n_trials as f64;
    let se = stats::binomial_se(freq, n_trials);
    let (lo, hi) = stats::wilson_interval(holes, n_trials, 3.0);
    let report = StatReport::new(format!("hole_frequency_rate_{}", p.rate), freq, bound, freq - 3.0 * se <= bound)
        .with_seed(p.seed, n_trials)
        .with_interval(lo, hi)
        .with_detail(format!(
            "lattice {} points, C = {}, a = {}, {} growth",
            lattice.len(),
            p.constant(),
            p.a,
            if full { "full" } else { "subset" }
        ));
    Ok(HoleOutcome { report, lattice_size: lattice.len(), bound, trials })
}

fn holes(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let base = HoleParams {
        dim: cfg.usize("dim")?,
        rate: cfg.f64("rate")?,
        t: cfg.f64("horizon")?,
        d: cfg.f64("d")?,
        delta: cfg.f64("delta")?,
        a: cfg.f64("a")?,
        alpha: cfg.f64("alpha")?,
        seed: child_seed(cfg.master_seed, 0),
        full_limit: cfg.f64("full_limit")?,
        budget: cfg.usize("budget")?,
        per_target: cfg.usize("per_target")?,
    };
    let control = HoleParams {
        rate: cfg.f64("control_rate")?,
        delta: cfg.f64("control_delta")?,
        seed: child_seed(cfg.master_seed, 1),
        ..base.clone()
    };
    let n = cfg.n_trials;
    let main = hole_probability(&base, n)?;
    let ctrl = hole_probability(&control, n)?;
    let min = cfg.f64("control_min")?;
    let mut control_report = ctrl.report.clone();
    control_report.name = format!("hole_control_rate_{}", control.rate);
    control_report.threshold = min;
    control_report.passed = control_report.statistic >= min;
    let mut csv = String::from("rate,delta,trial,segments,uncovered,lattice_size,bound\n");
    for (p, o) in [(&base, &main), (&control, &ctrl)] {
        for (i, (segs, unc)) in o.trials.iter().enumerate() {
            let _ = writeln!(csv, "{},{},{i},{segs},{unc},{},{}", p.rate, p.delta, o.lattice_size, o.bound);
        }
    }
    Ok(output(cfg.kind, vec![main.report, control_report], vec![("trials", csv)]))
}

fn connect(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let params = ConnectionParams { rate: cfg.f64("rate")?, t: cfg.f64("t")?, r: cfg.f64("r")?, d: cfg.f64("d")? };
    let s = cfg.f64("s")?;
    let seed = child_seed(cfg.master_seed, 0);
    let n = cfg.n_trials;
    let c = analytic::p_scaling_identity_check(params, s, cfg.usize("dim")?, n, seed)?;
    let other = params.rescaled(s);
    let tol = 3.0 * (c.left_se * c.left_se + c.right_se * c.right_se).sqrt();
    let rep = StatReport::new("connection_scaling_identity", (c.left - c.right).abs(), tol, c.agree)
        .with_seed(seed, n)
        .with_detail(format!("{} at {params:?} vs {} at {other:?}", c.left, c.right));
    let csv = format!(
        "side,rate,t,r,d,p,se\nleft,{},{},{},{},{},{}\nright,{},{},{},{},{},{}\n",
        params.rate,
        params.t,
        params.r,
        params.d,
        c.left,
        c.left_se,
        other.rate,
        other.t,
        other.r,
        other.d,
        c.right,
        c.right_se
    );
    Ok(output(cfg.kind, vec![rep], vec![("estimates", csv)]))
}

/// `segment_id,parent_id,birth_time,x0..,y0..`; the root's parent is `-1`.
pub fn segments_csv(tree: &Tree) -> String {
    let dim = tree.dim();
    let mut s = String::from("segment_id,parent_id,birth_time");
    for prefix in ["x", "y"] {
        for k in 0..dim {
            let _ = write!(s, ",{prefix}{k}");
        }
    }
    s.push('\n');
    for (i, seg) in tree.segments().enumerate() {
        let parent = tree.parent(i).map_or(-1, |p| p as i64);
        let _ = write!(s, "{i},{parent},{}", seg.birth_time);
        for v in seg.start.iter().chain(seg.end) {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

/// `trial,seed,radius,total_length,leaf_count,branch_points[,hit_k]`.
pub fn trials_csv(batch: &TrialBatch) -> String {
    let mut s = String::from("trial,seed,radius,total_length,leaf_count,branch_points");
    for k in 0..batch.probes.len() {
        let _ = write!(s, ",hit_{k}");
    }
    s.push('\n');
    for r in &batch.records {
        let t = &r.summary;
        let _ = write!(
            s,
            "{},{},{},{},{},{}",
            r.trial, t.seed, t.radius, t.total_length, t.leaf_count, t.branch_point_count
        );
        for &h in &r.hits {
            let _ = write!(s, ",{}", u8::from(h));
        }
        s.push('\n');
    }
    s
}

/// `turn_index,time,x0..`: the origin, each turn point, then the endpoint.
pub fn branch_csv(path: &BranchPath) -> String {
    let mut s = String::from("turn_index,time");
    for k in 0..path.dim() {
        let _ = write!(s, ",x{k}");
    }
    s.push('\n');
    let times = std::iter::once(0.0).chain(path.turn_times().iter().copied()).chain(std::iter::once(path.horizon()));
    for (i, (time, v)) in times.zip(path.vertices()).enumerate() {
        let _ = write!(s, "{i},{time}");
        for c in v.coords() {
            let _ = write!(s, ",{c}");
        }
        s.push('\n');
    }
    s
}

/// A `#` metadata line with every solver parameter, then `t,d,q`.
pub fn fe_csv(grid: &FeGrid) -> String {
    let p = &grid.params;
    let mut s = format!(
        "# rate={} r={} tmax={} dmax={} dt={} dd={} nalpha={} ns={}\nt,d,q\n",
        p.rate, p.r, p.t_max, p.d_max, p.dt, p.dd, p.n_alpha, p.n_s
    );
    for (t, d, q) in grid.rows() {
        let _ = writeln!(s, "{t},{d},{q}");
    }
    s
}

fn quoted(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn reports_csv(reports: &[StatReport]) -> String {
    let mut s = String::from("name,statistic,p_value,interval_lo,interval_hi,threshold,passed,seed,n_trials,detail\n");
    for r in reports {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            quoted(&r.name),
            r.statistic,
            opt(r.p_value),
            opt(r.interval.map(|i| i.0)),
            opt(r.interval.map(|i| i.1)),
            r.threshold,
            r.passed,
            opt(r.seed),
            opt(r.n_trials),
            quoted(&r.detail)
        );
    }
    s
}

/// Reports as aligned text, one per line.
pub fn reports_text(reports: &[StatReport]) -> String {
    let width = reports.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    for r in reports {
        let _ = write!(
            s,
            "{:<width$}  {}  statistic {:<12.6}  threshold {:<10.4}",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.statistic,
            r.threshold
        );
        if let Some(p) = r.p_value {
            let _ = write!(s, "  p {p:.4}");
        }
        if !r.detail.is_empty() {
            let _ = write!(s, "  {}", r.detail);
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        for k in ExperimentKind::ALL {
            assert_eq!(k.name().parse::<ExperimentKind>().unwrap(), k);
        }
        assert!("nope".parse::<ExperimentKind>().is_err());
    }

    #[test]
    fn parse_config_with_comments_and_overrides() {
        let cfg =
            ExperimentConfig::parse("# leaf law\nkind = leafdist\ntrials = 500\nseed=7\nrate = 2 # faster\n").unwrap();
        assert_eq!(cfg.kind, ExperimentKind::LeafDist);
        assert_eq!(cfg.n_trials, 500);
        assert_eq!(cfg.master_seed, 7);
        assert_eq!(cfg.f64("rate").unwrap(), 2.0);
        assert_eq!(cfg.f64("horizon").unwrap(), 1.0);
        assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn config_errors() {
        assert!(matches!(ExperimentConfig::parse("trials = 3"), Err(ExperimentError::MissingKind)));
        assert!(matches!(
            ExperimentConfig::parse("kind = length\nbogus"),
            Err(ExperimentError::Syntax { line: 2, .. })
        ));
        assert!(matches!(ExperimentConfig::parse("kind = length\nrates = 1"), Err(ExperimentError::UnknownKey { .. })));
        let mut cfg = ExperimentConfig::new(ExperimentKind::Length);
        cfg.set("rate", "fast").unwrap();
        assert!(matches!(cfg.validate(), Err(ExperimentError::BadValue { .. })));
        let mut cfg = ExperimentConfig::new(ExperimentKind::FeVsMc);
        cfg.set("points", "1-0.5").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn segments_csv_layout() {
        let tree = tree::grow_trial(&SimConfig::new(2, 1.0, 1.0).with_seed(3), 0).unwrap();
        let csv = segments_csv(&tree);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "segment_id,parent_id,birth_time,x0,x1,y0,y1");
        let root: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(&root[..5], &["0", "-1", "0", "0", "0"]);
        assert_eq!(csv.lines().count(), tree.segment_count() + 1);
    }

    #[test]
    fn branch_csv_starts_at_origin_and_ends_at_horizon() {
        let path = branch::grow_branch(3.0, 2.0, 2, &mut stream(1)).unwrap();
        let csv = branch_csv(&path);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "turn_index,time,x0,x1");
        assert_eq!(lines[1], "0,0,0,0");
        assert_eq!(lines.len(), path.turn_count() + 3);
        assert!(lines.last().unwrap().split(',').nth(1).unwrap() == "2");
    }

    #[test]
    fn reports_csv_quotes_details() {
        let r = StatReport::new("x", 1.0, 2.0, true).with_detail("a, b");
        let csv = reports_csv(&[r]);
        assert!(csv.lines().nth(1).unwrap().ends_with("\"a, b\""));
    }

    #[test]
    fn small_experiments_are_reproducible() {
        let dir = std::env::temp_dir().join(format!("yule-exp-{}", std::process::id()));
        let mut cfg = ExperimentConfig::new(ExperimentKind::LeafDist);
        cfg.n_trials = 2000;
        cfg.master_seed = 11;
        cfg.output_path = Some(dir.clone());
        let a = run_experiment(&cfg).unwrap();
        let first = fs::read(dir.join("leafdist_trials.csv")).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(first, fs::read(dir.join("leafdist_trials.csv")).unwrap());
        assert!(dir.join("leafdist_summary.csv").exists());
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn hole_lattice_matches_definition() {
        let p = HoleParams::new(0.0, 1.0, 0.45, 0.1);
        let lattice = p.lattice();
        assert!(lattice.iter().all(|x| geometry::norm(x) <= 0.425 + 1e-12));
        assert!(lattice.iter().any(|x| x == &vec![0.0, 0.0]));
        // Spacing 0.05 in a radius 0.425 disc: about π·8.5² points.
        assert!((lattice.len() as f64 - std::f64::consts::PI * 72.25).abs() < 20.0);
    }

    #[test]
    fn empty_lattice_gives_zero_frequency() {
        let p = HoleParams::new(1.0, 1.0, 0.1, 0.9);
        assert!(p.lattice().is_empty());
        let o = hole_probability(&p, 10).unwrap();
        assert_eq!(o.lattice_size, 0);
        assert_eq!(o.report.statistic, 0.0);
    }

    #[test]
    fn single_segment_always_leaves_holes() {
        let o = hole_probability(&HoleParams::new(0.0, 1.0, 0.45, 0.1), 50).unwrap();
        assert_eq!(o.report.statistic, 1.0);
    }

    #[test]
    fn reach_respects_the_horizon() {
        let config = SimConfig::new(2, 0.0, 1.0);
        for i in 0..20 {
            assert!(reaches_radius(&config, 0.9, 100, i).unwrap().0);
            assert!(!reaches_radius(&config, 1.1, 100, i).unwrap().0);
        }
        let config = SimConfig::new(2, 3.0, 1.0);
        for i in 0..20 {
            assert!(!reaches_radius(&config, 1.01, 10_000, i).unwrap().0);
        }
    }
}
