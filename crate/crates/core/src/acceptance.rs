//! The ten acceptance criteria, each one experiment kind at its default
//! parameters plus a wall-clock limit.

use std::time::{Duration, Instant};

use crate::experiment::{run_experiment, ExperimentConfig, ExperimentKind};
use crate::stats::StatReport;

/// One acceptance criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Criterion {
    pub id: u8,
    pub name: &'static str,
    pub kind: ExperimentKind,
    pub time_limit: Duration,
}

const fn criterion(id: u8, name: &'static str, kind: ExperimentKind, secs: u64) -> Criterion {
    Criterion { id, name, kind, time_limit: Duration::from_secs(secs) }
}

pub const CRITERIA: [Criterion; 10] = [
    criterion(1, "leaf-count law", ExperimentKind::LeafDist, 30),
    criterion(2, "mean total length", ExperimentKind::Length, 30),
    criterion(3, "scaling law", ExperimentKind::Scaling, 300),
    criterion(4, "projection walk moments", ExperimentKind::Moments, 60),
    criterion(5, "branch collapse", ExperimentKind::BranchCollapse, 120),
    criterion(6, "radius lower bound", ExperimentKind::RadiusTail, 600),
    criterion(7, "tail bound domination", ExperimentKind::Bounds, 60),
    criterion(8, "functional equation vs Monte Carlo", ExperimentKind::FeVsMc, 900),
    criterion(9, "Hausdorff convergence", ExperimentKind::Hausdorff, 600),
    criterion(10, "hole probability", ExperimentKind::Holes, 600),
];

#[derive(Debug, Clone)]
pub struct CriterionOutcome {
    pub criterion: Criterion,
    pub passed: bool,
    pub reports: Vec<StatReport>,
    pub error: Option<String>,
    pub elapsed: Duration,
}

impl CriterionOutcome {
    /// `criterion N [PASS|FAIL] name (seconds) first failing report`.
    pub fn line(&self) -> String {
        let c = &self.criterion;
        let mut s = format!(
            "criterion {:>2} [{}] {} ({:.1} s)",
            c.id,
            if self.passed { "PASS" } else { "FAIL" },
            c.name,
            self.elapsed.as_secs_f64()
        );
        if let Some(e) = &self.error {
            s.push_str(&format!(": error: {e}"));
        } else if let Some(r) = self.reports.iter().find(|r| !r.passed) {
            s.push_str(&format!(": {} = {} vs {} {}", r.name, r.statistic, r.threshold, r.detail));
        } else if self.elapsed > c.time_limit {
            s.push_str(&format!(": over the {} s limit", c.time_limit.as_secs()));
        }
        s
    }
}

pub fn config_for(c: &Criterion, master_seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(c.kind);
    cfg.master_seed = master_seed;
    cfg
}

pub fn run_criterion(c: &Criterion, master_seed: u64) -> CriterionOutcome {
    let start = Instant::now();
    let result = run_experiment(&config_for(c, master_seed));
    let elapsed = start.elapsed();
    match result {
        Ok(out) => CriterionOutcome {
            criterion: *c,
            passed: out.passed() && elapsed <= c.time_limit,
            reports: out.reports,
            error: None,
            elapsed,
        },
        Err(e) => {
            CriterionOutcome { criterion: *c, passed: false, reports: Vec::new(), error: Some(e.to_string()), elapsed }
        }
    }
}

/// Runs every criterion, calling `progress` after each.
pub fn run_all(master_seed: u64, mut progress: impl FnMut(&CriterionOutcome)) -> Vec<CriterionOutcome> {
    CRITERIA
        .iter()
        .map(|c| {
            let o = run_criterion(c, master_seed);
            progress(&o);
            o
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn criteria_are_numbered_in_order() {
        for (i, c) in CRITERIA.iter().enumerate() {
            assert_eq!(c.id as usize, i + 1);
        }
    }

    #[test]
    fn defaults_validate() {
        for c in &CRITERIA {
            config_for(c, 0).validate().unwrap();
        }
    }
}
