//! Growth of the spatial Yule tree `T_λ(t)` and its trial statistics.
//!
//! Growth is a depth-first recursion over leaves. Each leaf draws a
//! direction and an `Exp(λ)` clock; if the clock fires before the horizon
//! the leaf becomes a branching point with two children, otherwise it grows
//! straight to the horizon. By memorylessness this is exact in distribution.
//! Random draws happen in a fixed order (direction, then clock, first child
//! before second), so a seed determines the tree bit for bit.

use std::ops::ControlFlow;

use rand::Rng;
use rand_distr::Exp1;
use thiserror::Error;

use crate::geometry::{self, distance, distance_to_segment, norm, Point, SegmentView};
use crate::rng::{child_seed, stream};

/// Default cap on the number of segments of one tree.
pub const DEFAULT_MAX_SEGMENTS: usize = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("dimension must be at least 1")]
    InvalidDimension,
    #[error("rate must be finite and non-negative, got {0}")]
    InvalidRate(f64),
    #[error("horizon must be finite and positive, got {0}")]
    InvalidHorizon(f64),
    #[error("max_segments must be at least 1")]
    InvalidBudget,
    #[error("segment budget of {cap} exceeded after {segments} segments")]
    BudgetExceeded { segments: usize, cap: usize },
    #[error("probe has dimension {got}, tree has dimension {expected}")]
    ProbeDimension { expected: usize, got: usize },
}

/// Parameters of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dim: usize,
    pub rate: f64,
    pub horizon: f64,
    pub master_seed: u64,
    pub max_segments: usize,
}

impl SimConfig {
    pub fn new(dim: usize, rate: f64, horizon: f64) -> Self {
        SimConfig { dim, rate, horizon, master_seed: 0, max_segments: DEFAULT_MAX_SEGMENTS }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn with_max_segments(mut self, cap: usize) -> Self {
        self.max_segments = cap;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.dim == 0 {
            return Err(SimError::InvalidDimension);
        }
        if !(self.rate.is_finite() && self.rate >= 0.0) {
            return Err(SimError::InvalidRate(self.rate));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(SimError::InvalidHorizon(self.horizon));
        }
        if self.max_segments == 0 {
            return Err(SimError::InvalidBudget);
        }
        Ok(())
    }

    /// Mean number of segments, `2e^{λt} − 1`.
    pub fn expected_segments(&self) -> f64 {
        2.0 * (self.rate * self.horizon).exp() - 1.0
    }
}

/// Receives the pieces of a tree as they are grown.
pub(crate) trait GrowthSink {
    /// Called once per segment, in index order.
    fn segment(&mut self, start: &[f64], end: &[f64], birth: f64, parent: Option<usize>) -> ControlFlow<()>;
    fn leaf(&mut self, _position: &[f64], _direction: &[f64], _segment: usize) {}
    fn branch(&mut self, _position: &[f64], _time: f64) {}
}

/// Outcome of [`grow_with`]: finished, or stopped early by the sink.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Growth {
    Complete { segments: usize },
    Stopped { segments: usize },
}

pub(crate) fn grow_with<R: Rng + ?Sized, S: GrowthSink>(
    config: &SimConfig,
    rng: &mut R,
    sink: &mut S,
) -> Result<Growth, SimError> {
    config.validate()?;
    let dim = config.dim;
    let horizon = config.horizon;
    let inv_rate = if config.rate > 0.0 { config.rate.recip() } else { f64::INFINITY };

    // Pending leaves: (birth time, parent segment) plus start coordinates.
    let mut pending: Vec<(f64, Option<usize>)> = vec![(0.0, None)];
    let mut pending_pos: Vec<f64> = vec![0.0; dim];
    let mut start = vec![0.0; dim];
    let mut dir = vec![0.0; dim];
    let mut end = vec![0.0; dim];
    let mut count = 0usize;

    while let Some((birth, parent)) = pending.pop() {
        if count == config.max_segments {
            return Err(SimError::BudgetExceeded { segments: count, cap: config.max_segments });
        }
        let at = pending_pos.len() - dim;
        start.copy_from_slice(&pending_pos[at..]);
        pending_pos.truncate(at);

        geometry::sample_direction_into(&mut dir, rng);
        let fire = if inv_rate.is_finite() {
            let e: f64 = rng.sample(Exp1);
            birth + e * inv_rate
        } else {
            f64::INFINITY
        };
        let branches = fire < horizon;
        let len = if branches { fire } else { horizon } - birth;
        for k in 0..dim {
            end[k] = start[k] + len * dir[k];
        }
        let index = count;
        count += 1;
        if sink.segment(&start, &end, birth, parent).is_break() {
            return Ok(Growth::Stopped { segments: count });
        }
        if branches {
            sink.branch(&end, fire);
            // Second child below the first so the first is grown next.
            for _ in 0..2 {
                pending.push((fire, Some(index)));
                pending_pos.extend_from_slice(&end);
            }
        } else {
            sink.leaf(&end, &dir, index);
        }
    }
    Ok(Growth::Complete { segments: count })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Leaf {
    pub position: Point,
    pub direction: Point,
    pub segment: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint {
    pub position: Point,
    pub time: f64,
}

/// An immutable grown tree.
///
/// Segment `i` occupies `coords[2·D·i .. 2·D·(i+1)]` (start then end).
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    dim: usize,
    horizon: f64,
    coords: Vec<f64>,
    birth: Vec<f64>,
    parent: Vec<Option<usize>>,
    leaves: Vec<Leaf>,
    branch_points: Vec<BranchPoint>,
}

#[derive(Default)]
struct TreeSink {
    coords: Vec<f64>,
    birth: Vec<f64>,
    parent: Vec<Option<usize>>,
    leaves: Vec<Leaf>,
    branch_points: Vec<BranchPoint>,
}

impl GrowthSink for TreeSink {
    fn segment(&mut self, start: &[f64], end: &[f64], birth: f64, parent: Option<usize>) -> ControlFlow<()> {
        self.coords.extend_from_slice(start);
        self.coords.extend_from_slice(end);
        self.birth.push(birth);
        self.parent.push(parent);
        ControlFlow::Continue(())
    }

    fn leaf(&mut self, position: &[f64], direction: &[f64], segment: usize) {
        self.leaves.push(Leaf {
            position: Point::from_slice(position),
            direction: Point::from_slice(direction),
            segment,
        });
    }

    fn branch(&mut self, position: &[f64], time: f64) {
        self.branch_points.push(BranchPoint { position: Point::from_slice(position), time });
    }
}

/// Grows one exact sample of `T_λ(horizon)`.
pub fn grow<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Result<Tree, SimError> {
    let mut sink = TreeSink::default();
    grow_with(config, rng, &mut sink)?;
    Ok(Tree {
        dim: config.dim,
        horizon: config.horizon,
        coords: sink.coords,
        birth: sink.birth,
        parent: sink.parent,
        leaves: sink.leaves,
        branch_points: sink.branch_points,
    })
}

impl Tree {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn segment_count(&self) -> usize {
        self.birth.len()
    }

    pub fn segment(&self, i: usize) -> SegmentView<'_> {
        let w = 2 * self.dim;
        let s = &self.coords[w * i..w * (i + 1)];
        SegmentView { start: &s[..self.dim], end: &s[self.dim..], birth_time: self.birth[i] }
    }

    pub fn segments(&self) -> impl Iterator<Item = SegmentView<'_>> + '_ {
        (0..self.segment_count()).map(move |i| self.segment(i))
    }

    /// Flat `[start, end]` coordinates of every segment.
    pub fn flat_coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        self.parent[i]
    }

    pub fn leaves(&self) -> &[Leaf] {
        &self.leaves
    }

    pub fn branch_points(&self) -> &[BranchPoint] {
        &self.branch_points
    }

    /// `N_λ(t)`.
    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    /// `L_λ(t)`.
    pub fn total_length(&self) -> f64 {
        self.segments().map(|s| s.length()).sum()
    }

    /// Children of segment `i`, first child first. Depth-first growth puts
    /// the first child right after its parent.
    pub fn children(&self, i: usize) -> Option<(usize, usize)> {
        if i + 1 >= self.segment_count() || self.parent[i + 1] != Some(i) {
            return None;
        }
        let second = (i + 2..self.segment_count()).find(|&j| self.parent[j] == Some(i))?;
        Some((i + 1, second))
    }

    /// Segment indices along the root-to-leaf path that always takes the
    /// first child.
    pub fn first_child_path(&self) -> Vec<usize> {
        let mut path = vec![0];
        let mut i = 0;
        while i + 1 < self.segment_count() && self.parent[i + 1] == Some(i) {
            i += 1;
            path.push(i);
        }
        path
    }

    pub fn summary(&self, seed: u64) -> TrialSummary {
        TrialSummary {
            radius: radius(self),
            total_length: self.total_length(),
            leaf_count: self.leaf_count(),
            branch_point_count: self.branch_points.len(),
            seed,
        }
    }
}

/// `R_λ(t) = sup_{x∈T} |x|`. The norm is convex along a segment, so the
/// supremum is attained at an endpoint.
pub fn radius(tree: &Tree) -> f64 {
    tree.segments().map(|s| norm(s.end)).fold(0.0, f64::max)
}

/// `dist(T, x)`, by brute force over the segments.
pub fn min_distance(tree: &Tree, x: &Point) -> f64 {
    tree.segments().map(|s| distance_to_segment(x.coords(), s.start, s.end)).fold(f64::INFINITY, f64::min)
}

/// Per-trial scalar statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSummary {
    pub radius: f64,
    pub total_length: f64,
    pub leaf_count: usize,
    pub branch_point_count: usize,
    pub seed: u64,
}

/// Accumulates a [`TrialSummary`] and probe distances without storing the tree.
struct SummarySink<'p> {
    radius: f64,
    length: f64,
    leaves: usize,
    branches: usize,
    probes: &'p [Probe],
    min_dist: Vec<f64>,
}

impl<'p> SummarySink<'p> {
    fn new(probes: &'p [Probe]) -> Self {
        SummarySink {
            radius: 0.0,
            length: 0.0,
            leaves: 0,
            branches: 0,
            probes,
            min_dist: vec![f64::INFINITY; probes.len()],
        }
    }
}

impl GrowthSink for SummarySink<'_> {
    fn segment(&mut self, start: &[f64], end: &[f64], _birth: f64, _parent: Option<usize>) -> ControlFlow<()> {
        self.radius = self.radius.max(norm(end));
        self.length += distance(start, end);
        for (m, p) in self.min_dist.iter_mut().zip(self.probes) {
            let d = distance_to_segment(p.center.coords(), start, end);
            if d < *m {
                *m = d;
            }
        }
        ControlFlow::Continue(())
    }

    fn leaf(&mut self, _: &[f64], _: &[f64], _: usize) {
        self.leaves += 1;
    }

    fn branch(&mut self, _: &[f64], _: f64) {
        self.branches += 1;
    }
}

/// Same statistics as `grow(..).summary(seed)` from the same stream, without
/// keeping the segments.
pub fn grow_summary<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R, seed: u64) -> Result<TrialSummary, SimError> {
    let mut sink = SummarySink::new(&[]);
    grow_with(config, rng, &mut sink)?;
    Ok(TrialSummary {
        radius: sink.radius,
        total_length: sink.length,
        leaf_count: sink.leaves,
        branch_point_count: sink.branches,
        seed,
    })
}

/// A connection probe: does the tree come within `r` of `center`?
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub center: Point,
    pub r: f64,
}

impl Probe {
    pub fn new(center: Point, r: f64) -> Self {
        Probe { center, r }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: u64,
    pub summary: TrialSummary,
    /// `dist(T, center) ≤ r` per probe (closed balls).
    pub hits: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialFailure {
    pub trial: u64,
    pub seed: u64,
    pub segments: usize,
}

/// Results of [`run_trials`], in trial-index order.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialBatch {
    pub records: Vec<TrialRecord>,
    pub failures: Vec<TrialFailure>,
    pub probes: Vec<Probe>,
}

impl TrialBatch {
    pub fn hit_count(&self, probe: usize) -> usize {
        self.records.iter().filter(|r| r.hits[probe]).count()
    }

    /// Monte Carlo estimate of `p_r^λ(t, x)` for one probe.
    pub fn hit_fraction(&self, probe: usize) -> f64 {
        self.hit_count(probe) as f64 / self.records.len() as f64
    }

    pub fn summaries(&self) -> impl Iterator<Item = &TrialSummary> {
        self.records.iter().map(|r| &r.summary)
    }
}

fn one_trial(config: &SimConfig, probes: &[Probe], trial: u64) -> Result<TrialRecord, TrialFailure> {
    let seed = child_seed(config.master_seed, trial);
    let mut rng = stream(seed);
    let mut sink = SummarySink::new(probes);
    match grow_with(config, &mut rng, &mut sink) {
        Ok(_) => Ok(TrialRecord {
            trial,
            summary: TrialSummary {
                radius: sink.radius,
                total_length: sink.length,
                leaf_count: sink.leaves,
                branch_point_count: sink.branches,
                seed,
            },
            hits: sink.min_dist.iter().zip(probes).map(|(&d, p)| d <= p.r).collect(),
        }),
        Err(SimError::BudgetExceeded { segments, .. }) => Err(TrialFailure { trial, seed, segments }),
        Err(e) => unreachable!("configuration validated before trials: {e}"),
    }
}

/// Runs `n_trials` independent trees; trial `i` uses
/// `child_seed(master_seed, i)`. Budget overruns are recorded, not fatal.
pub fn run_trials(config: &SimConfig, n_trials: u64, probes: &[Probe]) -> Result<TrialBatch, SimError> {
    config.validate()?;
    for p in probes {
        if p.center.dim() != config.dim {
            return Err(SimError::ProbeDimension { expected: config.dim, got: p.center.dim() });
        }
    }
    #[cfg(feature = "parallel")]
    let results: Vec<_> = {
        use rayon::prelude::*;
        (0..n_trials).into_par_iter().map(|i| one_trial(config, probes, i)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<_> = (0..n_trials).map(|i| one_trial(config, probes, i)).collect();

    let mut records = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(f) => failures.push(f),
        }
    }
    Ok(TrialBatch { records, failures, probes: probes.to_vec() })
}

/// Grows the tree of trial `trial` under `config.master_seed` in full.
pub fn grow_trial(config: &SimConfig, trial: u64) -> Result<Tree, SimError> {
    grow(config, &mut stream(child_seed(config.master_seed, trial)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn cfg(dim: usize, rate: f64, horizon: f64) -> SimConfig {
        SimConfig::new(dim, rate, horizon)
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut rng = stream(0);
        assert_eq!(grow(&cfg(0, 1.0, 1.0), &mut rng), Err(SimError::InvalidDimension));
        assert_eq!(grow(&cfg(2, -1.0, 1.0), &mut rng), Err(SimError::InvalidRate(-1.0)));
        assert_eq!(grow(&cfg(2, 1.0, 0.0), &mut rng), Err(SimError::InvalidHorizon(0.0)));
        assert_eq!(grow(&cfg(2, 1.0, 1.0).with_max_segments(0), &mut rng), Err(SimError::InvalidBudget));
    }

    #[test]
    fn rate_zero_is_one_straight_segment() {
        let tree = grow(&cfg(3, 0.0, 2.5), &mut stream(4)).unwrap();
        assert_eq!(tree.segment_count(), 1);
        assert_eq!(tree.leaf_count(), 1);
        assert!(tree.branch_points().is_empty());
        assert!((radius(&tree) - 2.5).abs() < 1e-12);
        assert!((tree.total_length() - 2.5).abs() < 1e-12);
        assert_eq!(tree.parent(0), None);
    }

    #[test]
    fn budget_overrun_reports_count() {
        let err = grow(&cfg(2, 5.0, 3.0).with_max_segments(50), &mut stream(1)).unwrap_err();
        assert_eq!(err, SimError::BudgetExceeded { segments: 50, cap: 50 });
    }

    #[test]
    fn min_distance_cases() {
        let tree = grow(&cfg(2, 2.0, 1.0), &mut stream(9)).unwrap();
        assert_eq!(min_distance(&tree, &Point::origin(2)), 0.0);
        let s = tree.segment(tree.segment_count() / 2);
        let mid = Point::new(s.start.iter().zip(s.end).map(|(a, b)| 0.5 * (a + b)).collect()).unwrap();
        assert!(min_distance(&tree, &mid) < 1e-12);
        assert!(min_distance(&tree, &Point::on_axis(2, 2.0)) >= 1.0);
    }

    #[test]
    fn radius_of_single_segment() {
        let seg = [0.0, 0.0, 0.3, 0.4];
        let tree = Tree {
            dim: 2,
            horizon: 0.5,
            coords: seg.to_vec(),
            birth: vec![0.0],
            parent: vec![None],
            leaves: vec![],
            branch_points: vec![],
        };
        assert!((radius(&tree) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn summary_sink_agrees_with_stored_tree() {
        let c = cfg(2, 3.0, 1.0);
        for seed in 0..20 {
            let tree = grow(&c, &mut stream(seed)).unwrap();
            let s = grow_summary(&c, &mut stream(seed), seed).unwrap();
            assert_eq!(tree.summary(seed), s);
        }
    }

    #[test]
    fn trials_are_reproducible_and_indexed() {
        let c = cfg(2, 1.5, 1.0).with_seed(77);
        let probes = [Probe::new(Point::origin(2), 0.1), Probe::new(Point::on_axis(2, 0.5), 0.2)];
        let a = run_trials(&c, 200, &probes).unwrap();
        let b = run_trials(&c, 200, &probes).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hit_fraction(0), 1.0);
        for (i, r) in a.records.iter().enumerate() {
            assert_eq!(r.trial, i as u64);
            let tree = grow_trial(&c, i as u64).unwrap();
            assert_eq!(tree.summary(r.summary.seed), r.summary);
        }
    }

    #[test]
    fn budget_failures_are_recorded() {
        let c = cfg(2, 3.0, 1.0).with_max_segments(40);
        let batch = run_trials(&c, 100, &[]).unwrap();
        assert!(!batch.failures.is_empty());
        assert_eq!(batch.failures.len() + batch.records.len(), 100);
        assert!(batch.failures.iter().all(|f| f.segments == 40));
    }

    #[test]
    fn probe_dimension_is_checked() {
        let c = cfg(3, 1.0, 1.0);
        let err = run_trials(&c, 1, &[Probe::new(Point::origin(2), 0.1)]).unwrap_err();
        assert_eq!(err, SimError::ProbeDimension { expected: 3, got: 2 });
    }

    #[test]
    fn rate_zero_hit_fraction_is_arcsine_of_r_over_d() {
        // A single ray of length t > sqrt(d² − r²) hits B(x, r) iff its angle
        // to x is at most arcsin(r/d).
        let (d, r) = (0.6, 0.2);
        let c = cfg(2, 0.0, 1.0).with_seed(5);
        let batch = run_trials(&c, 20_000, &[Probe::new(Point::on_axis(2, d), r)]).unwrap();
        let expect = (r / d).asin() / std::f64::consts::PI;
        let se = (expect * (1.0 - expect) / 20_000.0).sqrt();
        assert!((batch.hit_fraction(0) - expect).abs() < 4.0 * se);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn structural_invariants(seed in any::<u64>(), rate in 0.0f64..6.0, horizon in 0.1f64..1.5, dim in 1usize..4) {
            let tree = grow(&cfg(dim, rate, horizon), &mut stream(seed)).unwrap();
            prop_assert_eq!(tree.leaf_count(), tree.branch_points().len() + 1);
            prop_assert!(radius(&tree) <= horizon + 1e-12);
            prop_assert!(tree.total_length() >= horizon - 1e-12);
            for i in 1..tree.segment_count() {
                let p = tree.parent(i).unwrap();
                prop_assert_eq!(tree.segment(i).start, tree.segment(p).end);
                let parent_end_time = tree.segment(p).birth_time + tree.segment(p).length();
                prop_assert!((tree.segment(i).birth_time - parent_end_time).abs() < 1e-12);
            }
            // Each branch point ends one segment and starts two.
            for bp in tree.branch_points() {
                let ends = tree.segments().filter(|s| s.end == bp.position.coords()).count();
                let starts = tree.segments().filter(|s| s.start == bp.position.coords()).count();
                prop_assert_eq!((ends, starts), (1, 2));
            }
            // Every root-to-leaf path has length `horizon`.
            for leaf in tree.leaves() {
                let mut len = 0.0;
                let mut i = Some(leaf.segment);
                while let Some(k) = i {
                    len += tree.segment(k).length();
                    i = tree.parent(k);
                }
                prop_assert!((len - horizon).abs() < 1e-9, "path length {}", len);
            }
        }

        #[test]
        fn same_seed_same_tree(seed in any::<u64>()) {
            let c = cfg(2, 2.0, 1.0);
            prop_assert_eq!(grow(&c, &mut stream(seed)).unwrap(), grow(&c, &mut stream(seed)).unwrap());
        }
    }
}
