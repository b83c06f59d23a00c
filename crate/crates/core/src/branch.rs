//! A single root-to-leaf branch `B_λ` and the projection walk `X_k`.
//!
//! A branch moves at unit speed and turns to a fresh uniform direction at
//! the jumps of a rate-λ Poisson process. It can be built from i.i.d.
//! `Exp(λ)` gaps ([`grow_branch`]) or from a Poisson count with uniform
//! order statistics ([`grow_branch_poisson`]); the two laws agree.
//! The walk `X_k = Σ_{i≤k} t_i ν_i` drops the time truncation, and
//! [`coupled`] draws both from the same `(t_i, ν_i)` so that `B(t*_k) = X_k`.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use thiserror::Error;

use crate::geometry::{norm, sample_direction_into, Point};
use crate::tree::Tree;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BranchError {
    #[error("dimension must be at least 1")]
    InvalidDimension,
    #[error("rate must be finite and non-negative, got {0}")]
    InvalidRate(f64),
    #[error("horizon must be finite and positive, got {0}")]
    InvalidHorizon(f64),
    #[error("need one more direction than turns ({turns} turns, {directions} directions)")]
    DirectionCount { turns: usize, directions: usize },
    #[error("turn times must be strictly increasing within (0, horizon]")]
    TurnTimes,
    #[error("directions must be unit vectors")]
    NotUnit,
    #[error("at least {needed} trials required, got {got}")]
    TooFewTrials { needed: u64, got: u64 },
}

fn check(dim: usize, rate: f64, horizon: f64) -> Result<(), BranchError> {
    if dim == 0 {
        return Err(BranchError::InvalidDimension);
    }
    if !(rate.is_finite() && rate >= 0.0) {
        return Err(BranchError::InvalidRate(rate));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(BranchError::InvalidHorizon(horizon));
    }
    Ok(())
}

/// Piecewise-linear unit-speed path: direction `directions[i]` is followed
/// between `turn_times[i-1]` (0 for i = 0) and `turn_times[i]` (`horizon`
/// for the last piece).
#[derive(Debug, Clone, PartialEq)]
pub struct BranchPath {
    turn_times: Vec<f64>,
    directions: Vec<Point>,
    horizon: f64,
}

impl BranchPath {
    pub fn new(turn_times: Vec<f64>, directions: Vec<Point>, horizon: f64) -> Result<Self, BranchError> {
        if directions.len() != turn_times.len() + 1 {
            return Err(BranchError::DirectionCount { turns: turn_times.len(), directions: directions.len() });
        }
        let mut prev = 0.0;
        for &t in &turn_times {
            if !(t > prev && t <= horizon) {
                return Err(BranchError::TurnTimes);
            }
            prev = t;
        }
        if directions.iter().any(|d| (d.norm() - 1.0).abs() > 1e-9) {
            return Err(BranchError::NotUnit);
        }
        Ok(BranchPath { turn_times, directions, horizon })
    }

    pub fn turn_times(&self) -> &[f64] {
        &self.turn_times
    }

    pub fn directions(&self) -> &[Point] {
        &self.directions
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.directions[0].dim()
    }

    /// `N_B(horizon)`.
    pub fn turn_count(&self) -> usize {
        self.turn_times.len()
    }

    /// Origin, every turn point, then the endpoint.
    pub fn vertices(&self) -> Vec<Point> {
        let dim = self.dim();
        let mut pos = vec![0.0; dim];
        let mut out = vec![Point::origin(dim)];
        let mut prev = 0.0;
        for (i, dir) in self.directions.iter().enumerate() {
            let until = self.turn_times.get(i).copied().unwrap_or(self.horizon);
            for (p, d) in pos.iter_mut().zip(dir.coords()) {
                *p += (until - prev) * d;
            }
            out.push(Point::from_slice(&pos));
            prev = until;
        }
        out
    }

    pub fn endpoint(&self) -> Point {
        self.vertices().pop().expect("at least one piece")
    }

    /// Total path length; equals the horizon.
    pub fn length(&self) -> f64 {
        self.vertices().windows(2).map(|w| w[0].distance(&w[1])).sum()
    }
}

/// Branch from i.i.d. `Exp(rate)` gaps, truncated at `horizon`.
pub fn grow_branch<R: Rng + ?Sized>(
    rate: f64,
    horizon: f64,
    dim: usize,
    rng: &mut R,
) -> Result<BranchPath, BranchError> {
    check(dim, rate, horizon)?;
    let mut turn_times = Vec::new();
    let mut directions = Vec::new();
    let mut elapsed = 0.0;
    loop {
        let mut dir = vec![0.0; dim];
        sample_direction_into(&mut dir, rng);
        directions.push(Point::from_slice(&dir));
        if rate == 0.0 {
            break;
        }
        let gap: f64 = rng.sample::<f64, _>(Exp1) / rate;
        elapsed += gap;
        if elapsed >= horizon {
            break;
        }
        turn_times.push(elapsed);
    }
    Ok(BranchPath { turn_times, directions, horizon })
}

/// Branch from a `Poisson(rate·horizon)` turn count with turn times the
/// order statistics of uniforms on `(0, horizon)`.
pub fn grow_branch_poisson<R: Rng + ?Sized>(
    rate: f64,
    horizon: f64,
    dim: usize,
    rng: &mut R,
) -> Result<BranchPath, BranchError> {
    check(dim, rate, horizon)?;
    let turns = if rate * horizon > 0.0 {
        Poisson::new(rate * horizon).expect("positive mean").sample(rng) as usize
    } else {
        0
    };
    let mut turn_times: Vec<f64> = (0..turns).map(|_| horizon * (1.0 - rng.random::<f64>())).collect();
    turn_times.sort_by(f64::total_cmp);
    turn_times.dedup();
    let directions = (0..=turn_times.len())
        .map(|_| {
            let mut dir = vec![0.0; dim];
            sample_direction_into(&mut dir, rng);
            Point::from_slice(&dir)
        })
        .collect();
    Ok(BranchPath { turn_times, directions, horizon })
}

/// `max_{0≤s≤t} |B(s)|`. Along a straight piece the norm peaks at an end,
/// so turn points and the endpoint suffice.
pub fn max_displacement(path: &BranchPath) -> f64 {
    path.vertices().iter().map(Point::norm).fold(0.0, f64::max)
}

/// The branch of a grown tree that always follows the first child.
pub fn branch_from_tree(tree: &Tree) -> BranchPath {
    let path = tree.first_child_path();
    let mut turn_times = Vec::with_capacity(path.len() - 1);
    let mut directions = Vec::with_capacity(path.len());
    for (n, &i) in path.iter().enumerate() {
        let s = tree.segment(i);
        if n > 0 {
            turn_times.push(s.birth_time);
        }
        let len = s.length();
        let dir: Vec<f64> = s.start.iter().zip(s.end).map(|(a, b)| (b - a) / len).collect();
        directions.push(Point::from_slice(&dir));
    }
    BranchPath { turn_times, directions, horizon: tree.horizon() }
}

/// Partial sums `X_0, …, X_{k_max}` of `t_i ν_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Walk {
    steps: Vec<Point>,
}

impl Walk {
    pub fn steps(&self) -> &[Point] {
        &self.steps
    }

    pub fn k_max(&self) -> usize {
        self.steps.len() - 1
    }

    /// `R_X(k) = max_{j≤k} |X_j|`.
    pub fn radius(&self, k: usize) -> f64 {
        self.steps[..=k].iter().map(Point::norm).fold(0.0, f64::max)
    }

    /// `R_X^n(k) = max_{j≤k} |X_j^n|`, coordinate `n` zero-based.
    pub fn coordinate_radius(&self, k: usize, n: usize) -> f64 {
        self.steps[..=k].iter().map(|x| x.coords()[n].abs()).fold(0.0, f64::max)
    }
}

fn draw_step<R: Rng + ?Sized>(rate: f64, dir: &mut [f64], rng: &mut R) -> f64 {
    sample_direction_into(dir, rng);
    rng.sample::<f64, _>(Exp1) / rate
}

/// Walk with `k_max + 1` steps.
pub fn sample_walk<R: Rng + ?Sized>(rate: f64, dim: usize, k_max: usize, rng: &mut R) -> Result<Walk, BranchError> {
    check(dim, rate, 1.0)?;
    if rate == 0.0 {
        return Err(BranchError::InvalidRate(rate));
    }
    let mut pos = vec![0.0; dim];
    let mut dir = vec![0.0; dim];
    let mut steps = Vec::with_capacity(k_max + 1);
    for _ in 0..=k_max {
        let t = draw_step(rate, &mut dir, rng);
        for (p, d) in pos.iter_mut().zip(&dir) {
            *p += t * d;
        }
        steps.push(Point::from_slice(&pos));
    }
    Ok(Walk { steps })
}

/// A branch and the walk built from the same gaps and directions; the walk
/// has one step per turn, so `X_k` is the position at the k-th turn.
pub fn coupled<R: Rng + ?Sized>(
    rate: f64,
    horizon: f64,
    dim: usize,
    rng: &mut R,
) -> Result<(BranchPath, Walk), BranchError> {
    check(dim, rate, horizon)?;
    if rate == 0.0 {
        return Err(BranchError::InvalidRate(rate));
    }
    let mut dir = vec![0.0; dim];
    let mut pos = vec![0.0; dim];
    let mut turn_times = Vec::new();
    let mut directions = Vec::new();
    let mut steps = Vec::new();
    let mut elapsed = 0.0;
    loop {
        let t = draw_step(rate, &mut dir, rng);
        directions.push(Point::from_slice(&dir));
        if elapsed + t >= horizon {
            break;
        }
        elapsed += t;
        turn_times.push(elapsed);
        for (p, d) in pos.iter_mut().zip(&dir) {
            *p += t * d;
        }
        steps.push(Point::from_slice(&pos));
    }
    Ok((BranchPath { turn_times, directions, horizon }, Walk { steps }))
}

/// A Monte Carlo estimate and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    /// `|value − target|` in standard errors.
    pub fn z(&self, target: f64) -> f64 {
        (self.value - target).abs() / self.se
    }
}

/// Covariance of the increment `X_{k+1} − X_k` with an earlier increment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagCovariance {
    pub past_step: usize,
    pub coord: usize,
    pub cov: Estimate,
}

/// Moments of `X_k` over independent walks.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkMoments {
    pub k: usize,
    pub n_trials: u64,
    pub mean: Vec<Estimate>,
    pub variance: Vec<Estimate>,
    /// Correlation of the first two coordinates (D ≥ 2).
    pub correlation: Option<Estimate>,
    pub increment_mean: Vec<Estimate>,
    pub increment_past: Vec<LagCovariance>,
}

#[derive(Clone)]
struct Acc {
    n: f64,
    s1: f64,
    s2: f64,
}

impl Acc {
    fn new() -> Self {
        Acc { n: 0.0, s1: 0.0, s2: 0.0 }
    }

    fn push(&mut self, x: f64) {
        self.n += 1.0;
        self.s1 += x;
        self.s2 += x * x;
    }

    fn mean(&self) -> f64 {
        self.s1 / self.n
    }

    fn var(&self) -> f64 {
        (self.s2 - self.s1 * self.s1 / self.n) / (self.n - 1.0)
    }

    fn estimate(&self) -> Estimate {
        Estimate { value: self.mean(), se: (self.var() / self.n).sqrt() }
    }
}

/// Monte Carlo moments of the walk at step `k` (needs `n_trials ≥ 1000`).
pub fn walk_moments<R: Rng + ?Sized>(
    rate: f64,
    dim: usize,
    k: usize,
    n_trials: u64,
    rng: &mut R,
) -> Result<WalkMoments, BranchError> {
    const MIN_TRIALS: u64 = 1000;
    if n_trials < MIN_TRIALS {
        return Err(BranchError::TooFewTrials { needed: MIN_TRIALS, got: n_trials });
    }
    let mut x = vec![Acc::new(); dim];
    // (X^n − mean)² needs the mean; accumulate raw powers and centre later.
    let mut x3 = vec![0.0; dim];
    let mut x4 = vec![0.0; dim];
    let mut cross = Acc::new();
    let mut inc = vec![Acc::new(); dim];
    let mut lag = vec![Acc::new(); dim * (k + 1)];
    let mut incs = vec![0.0; dim * (k + 2)];
    for _ in 0..n_trials {
        let walk = sample_walk(rate, dim, k + 1, rng)?;
        let steps = walk.steps();
        for j in 0..=k + 1 {
            for n in 0..dim {
                let prev = if j == 0 { 0.0 } else { steps[j - 1].coords()[n] };
                incs[j * dim + n] = steps[j].coords()[n] - prev;
            }
        }
        let xk = steps[k].coords();
        for n in 0..dim {
            let v = xk[n];
            x[n].push(v);
            x3[n] += v * v * v;
            x4[n] += v * v * v * v;
            let d = incs[(k + 1) * dim + n];
            inc[n].push(d);
            for j in 0..=k {
                lag[j * dim + n].push(d * incs[j * dim + n]);
            }
        }
        if dim >= 2 {
            cross.push(xk[0] * xk[1]);
        }
    }
    let nf = n_trials as f64;
    let mean: Vec<Estimate> = x.iter().map(Acc::estimate).collect();
    let variance = (0..dim)
        .map(|n| {
            let m = x[n].mean();
            let m2 = x[n].s2 / nf;
            let var = x[n].var();
            // Fourth central moment from raw moments.
            let mu4 = x4[n] / nf - 4.0 * m * x3[n] / nf + 6.0 * m * m * m2 - 3.0 * m.powi(4);
            Estimate { value: var, se: ((mu4 - var * var) / nf).max(0.0).sqrt() }
        })
        .collect();
    let correlation = (dim >= 2).then(|| {
        let cov = cross.mean() - x[0].mean() * x[1].mean();
        let r = cov / (x[0].var() * x[1].var()).sqrt();
        Estimate { value: r, se: (1.0 - r * r) / (nf - 1.0).sqrt() }
    });
    let increment_past = (0..=k)
        .flat_map(|j| (0..dim).map(move |n| (j, n)))
        .map(|(j, n)| LagCovariance { past_step: j, coord: n, cov: lag[j * dim + n].estimate() })
        .collect();
    Ok(WalkMoments {
        k,
        n_trials,
        mean,
        variance,
        correlation,
        increment_mean: inc.iter().map(Acc::estimate).collect(),
        increment_past,
    })
}

/// `Var[X_k^n] = 2(k+1)/(D λ²)`: `E[t²] = 2/λ²` and `E[(ν^n)²] = 1/D`.
pub fn walk_variance_exact(rate: f64, dim: usize, k: usize) -> f64 {
    2.0 * (k as f64 + 1.0) / (dim as f64 * rate * rate)
}

/// The dimension-free bound `2(k+1)/λ²`.
pub fn walk_variance_bound(rate: f64, k: usize) -> f64 {
    2.0 * (k as f64 + 1.0) / (rate * rate)
}

/// Norm of the endpoint of each path, for distribution comparisons.
pub fn endpoint_norms(paths: &[BranchPath]) -> Vec<f64> {
    paths.iter().map(|p| norm(p.endpoint().coords())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::tree::{grow, SimConfig};
    use proptest::prelude::*;

    #[test]
    fn rate_zero_branch_is_straight() {
        let p = grow_branch(0.0, 3.0, 2, &mut stream(1)).unwrap();
        assert_eq!(p.turn_count(), 0);
        assert_eq!(p.directions().len(), 1);
        assert!((p.endpoint().norm() - 3.0).abs() < 1e-12);
        assert!((max_displacement(&p) - 3.0).abs() < 1e-12);
        let q = grow_branch_poisson(0.0, 3.0, 2, &mut stream(1)).unwrap();
        assert_eq!(q.turn_count(), 0);
    }

    #[test]
    fn monotone_path_reaches_horizon() {
        let e1 = Point::on_axis(3, 1.0);
        let p = BranchPath::new(vec![0.2, 0.5, 0.9], vec![e1.clone(); 4], 1.5).unwrap();
        assert!((max_displacement(&p) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn constructor_validates() {
        let e1 = Point::on_axis(2, 1.0);
        assert_eq!(
            BranchPath::new(vec![0.5], vec![e1.clone()], 1.0),
            Err(BranchError::DirectionCount { turns: 1, directions: 1 })
        );
        assert_eq!(BranchPath::new(vec![0.5, 0.4], vec![e1.clone(); 3], 1.0), Err(BranchError::TurnTimes));
        assert_eq!(BranchPath::new(vec![1.5], vec![e1.clone(); 2], 1.0), Err(BranchError::TurnTimes));
        assert_eq!(BranchPath::new(vec![], vec![e1.scaled(2.0)], 1.0), Err(BranchError::NotUnit));
        assert_eq!(grow_branch(1.0, 1.0, 0, &mut stream(0)), Err(BranchError::InvalidDimension));
        assert_eq!(grow_branch(-1.0, 1.0, 2, &mut stream(0)), Err(BranchError::InvalidRate(-1.0)));
        assert!(walk_moments(1.0, 2, 3, 999, &mut stream(0)).is_err());
    }

    #[test]
    fn no_turn_probability_is_poisson_mass_at_zero() {
        let mut rng = stream(21);
        let n = 100_000;
        let zero = (0..n).filter(|_| grow_branch(1.0, 1.0, 2, &mut rng).unwrap().turn_count() == 0).count();
        let f = zero as f64 / n as f64;
        let p0 = (-1.0f64).exp();
        assert!((f - p0).abs() < 4.0 * (p0 * (1.0 - p0) / n as f64).sqrt(), "{f}");
    }

    #[test]
    fn long_branch_stays_near_origin() {
        let p = grow_branch(2.0, 20.0, 2, &mut stream(8)).unwrap();
        assert!((p.length() - 20.0).abs() < 1e-9);
        assert!(p.endpoint().norm() < 10.0);
    }

    #[test]
    fn branch_extracted_from_tree_is_valid() {
        let tree = grow(&SimConfig::new(2, 3.0, 1.0), &mut stream(4)).unwrap();
        let b = branch_from_tree(&tree);
        assert!((b.length() - 1.0).abs() < 1e-9);
        let leaf = tree.segment(*tree.first_child_path().last().unwrap()).end;
        assert!(b.endpoint().coords().iter().zip(leaf).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn variance_formulas() {
        assert_eq!(walk_variance_exact(1.0, 2, 9), 10.0);
        assert_eq!(walk_variance_bound(1.0, 9), 20.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn coupling_is_exact(seed in any::<u64>(), rate in 0.5f64..20.0, dim in 1usize..4) {
            let (path, walk) = coupled(rate, 1.0, dim, &mut stream(seed)).unwrap();
            let v = path.vertices();
            prop_assert_eq!(walk.steps().len(), path.turn_count());
            // Equal up to the rounding of turn-time differences.
            for (k, x) in walk.steps().iter().enumerate() {
                prop_assert!(x.distance(&v[k + 1]) < 1e-12);
            }
            if path.turn_count() > 0 {
                let k = path.turn_count() - 1;
                let along: f64 = v[..=k + 1].iter().map(Point::norm).fold(0.0, f64::max);
                prop_assert!((walk.radius(k) - along).abs() < 1e-12);
            }
        }

        #[test]
        fn walk_radius_sandwich(seed in any::<u64>(), dim in 1usize..5, k in 0usize..30) {
            let walk = sample_walk(1.0, dim, k, &mut stream(seed)).unwrap();
            let per: Vec<f64> = (0..dim).map(|n| walk.coordinate_radius(k, n)).collect();
            let max = per.iter().cloned().fold(0.0, f64::max);
            let sum: f64 = per.iter().sum();
            let r = walk.radius(k);
            prop_assert!(max <= r + 1e-12 && r <= sum + 1e-12);
        }

        #[test]
        fn branch_length_is_horizon(seed in any::<u64>(), rate in 0.0f64..30.0, horizon in 0.1f64..5.0) {
            let p = grow_branch(rate, horizon, 2, &mut stream(seed)).unwrap();
            prop_assert!((p.length() - horizon).abs() < 1e-9);
            prop_assert!(max_displacement(&p) <= horizon + 1e-12);
            let q = grow_branch_poisson(rate, horizon, 3, &mut stream(seed)).unwrap();
            prop_assert!((q.length() - horizon).abs() < 1e-9);
        }
    }
}
