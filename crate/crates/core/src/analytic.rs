//! Closed forms and explicit bounds for the spatial Yule tree.
//!
//! Every infinite series here has the shape `Σ_{n≥n0} qⁿ/(n+shift)` with
//! `0 ≤ q < 1`. It is summed term by term until a term drops below
//! [`SERIES_TOL`]; the remainder is then at most `term · q/(1−q)`, which
//! [`Series::tail_bound`] reports. When `q` is so close to 1 that this would
//! take more than [`SERIES_MAX_TERMS`] terms, the logarithmic closed form is
//! used instead and `terms` is reported as 0.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use thiserror::Error;

use crate::geometry::Point;
use crate::stats::binomial_se;
use crate::tree::{run_trials, Probe, SimConfig, SimError};

pub const SERIES_TOL: f64 = 1e-16;
pub const SERIES_MAX_TERMS: usize = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("{what} out of domain: {detail}")]
    Domain { what: &'static str, detail: String },
    #[error("MGF diverges at x = {x} (singularity at {singularity})")]
    Divergence { x: f64, singularity: f64 },
    #[error("t = {t} is below d − r = {reach}: the segment cannot reach the ball")]
    OutOfReach { t: f64, reach: f64 },
    #[error(transparent)]
    Sim(#[from] SimError),
}

fn domain(what: &'static str, detail: String) -> AnalyticError {
    AnalyticError::Domain { what, detail }
}

/// A truncated series value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Series {
    pub sum: f64,
    /// Terms added; 0 when the closed form was used.
    pub terms: usize,
    pub tail_bound: f64,
}

/// `Σ_{n≥n0} qⁿ/(n+shift)` for `0 ≤ q < 1`, `n0 + shift ≥ 1`.
pub fn harmonic_geometric(q: f64, n0: u32, shift: u32) -> Series {
    debug_assert!(n0 + shift >= 1);
    if q <= 0.0 {
        return Series { sum: 0.0, terms: 0, tail_bound: 0.0 };
    }
    if q >= 1.0 {
        return Series { sum: f64::INFINITY, terms: 0, tail_bound: f64::INFINITY };
    }
    // Terms needed for qⁿ < tol.
    let needed = SERIES_TOL.ln() / q.ln();
    if needed > SERIES_MAX_TERMS as f64 {
        return Series { sum: harmonic_geometric_closed(q, n0, shift), terms: 0, tail_bound: 0.0 };
    }
    let mut sum = 0.0;
    let mut qn = q.powi(n0 as i32);
    let mut n = n0;
    let mut terms = 0;
    loop {
        let term = qn / (n + shift) as f64;
        sum += term;
        terms += 1;
        if term < SERIES_TOL {
            return Series { sum, terms, tail_bound: term * q / (1.0 - q) };
        }
        qn *= q;
        n += 1;
    }
}

/// Closed form of [`harmonic_geometric`] for `shift ∈ {0, 1}` and small `n0`,
/// via `Σ_{n≥1} qⁿ/n = −ln(1−q)`.
pub fn harmonic_geometric_closed(q: f64, n0: u32, shift: u32) -> f64 {
    let log_sum = -(-q).ln_1p();
    // Σ_{m ≥ n0+shift} q^m / m.
    let m0 = n0 + shift;
    let mut head = 0.0;
    for m in 1..m0 {
        head += q.powi(m as i32) / m as f64;
    }
    let tail = log_sum - head;
    // Σ_{n≥n0} qⁿ/(n+shift) = q^{-shift} Σ_{m≥n0+shift} q^m/m.
    tail / q.powi(shift as i32)
}

/// First-success pmf `P(N = k) = y(1−y)^{k−1}`, `N ∼ Fs(y)`.
pub fn fs_pmf(y: f64, k: u64) -> Result<f64, AnalyticError> {
    if !(y > 0.0 && y < 1.0) {
        return Err(domain("y", format!("{y} not in (0, 1)")));
    }
    if k == 0 {
        return Err(domain("k", "must be at least 1".into()));
    }
    Ok(y * (1.0 - y).powf((k - 1) as f64))
}

/// `P(N ≤ m) = 1 − (1−y)^m` for `N ∼ Fs(y)`.
pub fn fs_cdf(y: f64, m: u64) -> f64 {
    -((m as f64) * (-y).ln_1p()).exp_m1()
}

/// `E[L_λ(t)] = (e^{λt} − 1)/λ`, with the limit `t` at λ = 0.
pub fn length_mean(rate: f64, horizon: f64) -> f64 {
    let z = rate * horizon;
    if z.abs() < 1e-8 {
        // (e^z − 1)/z = 1 + z/2 + z²/6 + …
        horizon * (1.0 + z / 2.0 + z * z / 6.0)
    } else {
        z.exp_m1() / rate
    }
}

/// Smallest `x > 0` where the length MGF blows up: the root of
/// `x e^{(λ−x)t} = λ` other than the removable one at `x = λ`
/// (`+∞` for λ = 0).
pub fn mgf_singularity(rate: f64, horizon: f64) -> f64 {
    if rate == 0.0 {
        return f64::INFINITY;
    }
    let g = |x: f64| x * ((rate - x) * horizon).exp() - rate;
    let peak = horizon.recip();
    let z = rate * horizon;
    let (mut lo, mut hi) = if (z - 1.0).abs() < 1e-12 {
        return rate;
    } else if z > 1.0 {
        (0.0, peak)
    } else {
        let mut hi = 2.0 * peak.max(rate);
        while g(hi) > 0.0 {
            hi *= 2.0;
        }
        (peak, hi)
    };
    // g < 0 at one end and > 0 at the other; keep the sign change bracketed.
    let lo_sign = g(lo) < 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (g(mid) < 0.0) == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `ψ_{L_λ(t)}(x) = (x − λ)/(x e^{(λ−x)t} − λ)` for `x` below
/// [`mgf_singularity`].
pub fn length_mgf(rate: f64, horizon: f64, x: f64) -> Result<f64, AnalyticError> {
    if !(rate >= 0.0 && horizon > 0.0) {
        return Err(domain("rate/horizon", format!("rate = {rate}, horizon = {horizon}")));
    }
    let singularity = mgf_singularity(rate, horizon);
    if x >= singularity {
        return Err(AnalyticError::Divergence { x, singularity });
    }
    if rate == 0.0 {
        return Ok((x * horizon).exp());
    }
    let h = x - rate;
    if h.abs() < 1e-6 * rate.max(1.0) {
        // Removable point x = λ: ψ = 1/((1−λt) + h(λt²/2 − t)) + O(h²).
        return Ok(1.0 / ((1.0 - rate * horizon) + h * (rate * horizon * horizon / 2.0 - horizon)));
    }
    Ok(h / (x * ((rate - x) * horizon).exp() - rate))
}

/// `f_r(t, d)`: probability that a single straight segment of length `t`
/// from the origin misses `B(x, r)`, `|x| = d`, in two dimensions.
pub fn miss_given_no_branch(t: f64, d: f64, r: f64) -> Result<f64, AnalyticError> {
    if !(r > 0.0 && d > r) {
        return Err(domain("d, r", format!("need d > r > 0, got d = {d}, r = {r}")));
    }
    if t < d - r {
        return Err(AnalyticError::OutOfReach { t, reach: d - r });
    }
    let tangent = (d * d - r * r).sqrt();
    Ok(if t <= tangent {
        let arg = ((d * d + t * t - r * r) / (2.0 * t * d)).clamp(-1.0, 1.0);
        1.0 - arg.acos() / PI
    } else {
        1.0 - (r / d).asin() / PI
    })
}

/// `α₀ = arcsin(r/d)`: half-angle of the cone of directions hitting `B(x, r)`.
pub fn cone_half_angle(d: f64, r: f64) -> Result<f64, AnalyticError> {
    if !(r > 0.0 && d >= r) {
        return Err(domain("d, r", format!("need d ≥ r > 0, got d = {d}, r = {r}")));
    }
    Ok((r / d).min(1.0).asin())
}

/// `s₀(α) = d cos α − √(r² − d² sin² α)`: distance along direction α at
/// which the ray enters `B(x, r)`.
pub fn entry_distance(d: f64, r: f64, alpha: f64) -> Result<f64, AnalyticError> {
    let a0 = cone_half_angle(d, r)?;
    if alpha.abs() > a0 {
        return Err(domain("alpha", format!("|{alpha}| exceeds α₀ = {a0}")));
    }
    let sin = alpha.sin();
    Ok(d * alpha.cos() - (r * r - d * d * sin * sin).max(0.0).sqrt())
}

/// `D(s, α) = √(d² + s² − 2ds cos α)`: distance from the point reached at
/// time `s` along direction α to the target.
pub fn kernel_distance(d: f64, s: f64, alpha: f64) -> f64 {
    (d * d + s * s - 2.0 * d * s * alpha.cos()).max(0.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeKernels {
    pub alpha0: f64,
    pub s0: f64,
    pub distance: f64,
}

pub fn fe_kernels(d: f64, r: f64, s: f64, alpha: f64) -> Result<FeKernels, AnalyticError> {
    Ok(FeKernels {
        alpha0: cone_half_angle(d, r)?,
        s0: entry_distance(d, r, alpha)?,
        distance: kernel_distance(d, s, alpha),
    })
}

/// Whether a bound is a lower or an upper bound on the empirical quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    Lower,
    Upper,
}

/// A bound evaluated at given parameters, optionally with an empirical value.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub name: String,
    pub kind: BoundKind,
    pub params: BTreeMap<String, f64>,
    pub bound_value: f64,
    pub empirical: Option<f64>,
    pub empirical_se: Option<f64>,
    pub satisfied: Option<bool>,
    /// Largest truncation order among the series used (0: closed form).
    pub truncation_terms: usize,
}

impl BoundReport {
    pub fn new(name: &str, kind: BoundKind, params: &[(&str, f64)], bound_value: f64, terms: usize) -> Self {
        BoundReport {
            name: name.to_string(),
            kind,
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            bound_value,
            empirical: None,
            empirical_se: None,
            satisfied: None,
            truncation_terms: terms,
        }
    }

    /// Bound clamped to `[0, 1]` (the unclamped value stays in `bound_value`).
    pub fn clamped(&self) -> f64 {
        if self.bound_value.is_nan() {
            return self.bound_value;
        }
        self.bound_value.clamp(0.0, 1.0)
    }

    /// Attaches a Monte Carlo value; satisfied within three standard errors.
    pub fn with_empirical(mut self, value: f64, se: f64) -> Self {
        self.empirical = Some(value);
        self.empirical_se = Some(se);
        self.satisfied = Some(match self.kind {
            BoundKind::Lower => value + 3.0 * se >= self.bound_value,
            BoundKind::Upper => value - 3.0 * se <= self.bound_value,
        });
        self
    }
}

fn positive(what: &'static str, v: f64) -> Result<(), AnalyticError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(domain(what, format!("{v} must be positive")))
    }
}

/// Explicit lower bound on `P(R_λ(1) ≥ 1/2 − ε)` (unclamped):
/// `(1 − e^{−ελ}(1 + C)) (1 − exp(−e^{λ/2}/8)) (1 − C̃ exp(−e^{ελ}/4))`.
pub fn radius_lower_bound_product(rate: f64, eps: f64) -> Result<BoundReport, AnalyticError> {
    positive("rate", rate)?;
    if !(eps > 0.0 && eps < 0.5) {
        return Err(domain("eps", format!("{eps} not in (0, 1/2)")));
    }
    let q = (-rate * (0.5 + eps)).exp();
    let c = harmonic_geometric(q, 1, 1);
    let c_tilde_series = harmonic_geometric(q, 2, 0);
    let c_tilde = (-0.25 * (rate / 2.0).exp() * c_tilde_series.sum).exp() / (1.0 - q);
    let leaves = 1.0 - (-eps * rate).exp() * (1.0 + c.sum);
    let good_direction = -(-(rate / 2.0).exp() / 8.0).exp_m1();
    let long_segment = 1.0 - c_tilde * (-0.25 * (eps * rate).exp()).exp();
    Ok(BoundReport::new(
        "radius_lower_bound_product",
        BoundKind::Lower,
        &[("rate", rate), ("eps", eps), ("C", c.sum), ("C_tilde", c_tilde)],
        leaves * good_direction * long_segment,
        c.terms.max(c_tilde_series.terms),
    ))
}

/// Explicit lower bound on `P(R_λ(1) ≥ d − ε)` given `P(R_λ(1) ≥ d) ≥ p`:
/// `(1 − exp(e^{(1−β)ελ/2} ln(1−p))) (1 − e^{−εβλ/2}(1 + Σ_{n≥1} e^{−nελ/2}/(n+1)))`.
pub fn radius_lower_bound_conditional(
    rate: f64,
    eps: f64,
    beta: f64,
    d: f64,
    p: f64,
) -> Result<BoundReport, AnalyticError> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(domain("rate", format!("{rate} must be non-negative")));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(domain("p", format!("{p} not in (0, 1]")));
    }
    if !(eps > 0.0 && eps < d && d <= 1.0) {
        return Err(domain("eps, d", format!("need 0 < eps < d ≤ 1, got eps = {eps}, d = {d}")));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(domain("beta", format!("{beta} not in (0, 1)")));
    }
    let ln_miss = (-p).ln_1p();
    let first = 1.0 - (((1.0 - beta) * eps * rate / 2.0).exp() * ln_miss).exp();
    let q = (-eps * rate / 2.0).exp();
    let s = harmonic_geometric(q, 1, 1);
    let second = 1.0 - (-eps * beta * rate / 2.0).exp() * (1.0 + s.sum);
    Ok(BoundReport::new(
        "radius_lower_bound_conditional",
        BoundKind::Lower,
        &[("rate", rate), ("eps", eps), ("beta", beta), ("d", d), ("p", p)],
        first * second,
        s.terms,
    ))
}

/// `b Σ_{n≥1} y^{n−a}/n`, an upper bound on `P(N_y ≤ b y^{−a})`.
pub fn fs_tail_bound(y: f64, a: f64, b: f64) -> Result<BoundReport, AnalyticError> {
    if !(y > 0.0 && y < 1.0) {
        return Err(domain("y", format!("{y} not in (0, 1)")));
    }
    if !(a > 0.0 && a < 1.0) {
        return Err(domain("a", format!("{a} not in (0, 1)")));
    }
    positive("b", b)?;
    let s = harmonic_geometric(y, 1, 0);
    Ok(BoundReport::new(
        "fs_tail_bound",
        BoundKind::Upper,
        &[("y", y), ("a", a), ("b", b)],
        b * y.powf(-a) * s.sum,
        s.terms,
    ))
}

/// `C_{a,b,c,x} exp(−b e^{(a−c)x})`, an upper bound on
/// `P(max_{j≤b e^{ax}} T_j ≤ c)` for i.i.d. `T_j ∼ Exp(x)`.
pub fn exp_max_bound(a: f64, b: f64, c: f64, x: f64) -> Result<BoundReport, AnalyticError> {
    positive("b", b)?;
    positive("c", c)?;
    positive("x", x)?;
    if !(a > c) {
        return Err(domain("a", format!("need a > c, got a = {a}, c = {c}")));
    }
    let q = (-c * x).exp();
    let s = harmonic_geometric(q, 2, 0);
    let constant = (-b * (a * x).exp() * s.sum).exp() / (1.0 - q);
    Ok(BoundReport::new(
        "exp_max_bound",
        BoundKind::Upper,
        &[("a", a), ("b", b), ("c", c), ("x", x), ("C", constant)],
        constant * (-b * ((a - c) * x).exp()).exp(),
        s.terms,
    ))
}

/// Exact `P(max_{j≤⌊b e^{ax}⌋} T_j ≤ c) = (1 − e^{−cx})^{⌊b e^{ax}⌋}`.
pub fn exp_max_exact(a: f64, b: f64, c: f64, x: f64) -> f64 {
    let m = (b * (a * x).exp()).floor();
    (m * (-(-c * x).exp()).ln_1p()).exp()
}

/// `C δ^{−2D} e^{−(1−a)λδt/16}`, the bound on the probability of a hole of
/// size `δt` in `B(0, td)`.
pub fn hole_probability_bound(c: f64, delta: f64, dim: usize, a: f64, rate: f64, t: f64) -> f64 {
    c * delta.powi(-2 * dim as i32) * (-(1.0 - a) * rate * delta * t / 16.0).exp()
}

/// Two Monte Carlo estimates of connection probabilities that a scaling
/// identity says are equal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingCheck {
    pub left: f64,
    pub left_se: f64,
    pub right: f64,
    pub right_se: f64,
    pub agree: bool,
}

/// Parameters `(rate, t, r, d)` of a connection probability `p_r^λ(t, x)`, `|x| = d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConnectionParams {
    pub rate: f64,
    pub t: f64,
    pub r: f64,
    pub d: f64,
}

impl ConnectionParams {
    /// `(λt/s, s, rs/t, ds/t)`: the same probability at horizon `s`.
    pub fn rescaled(&self, s: f64) -> ConnectionParams {
        ConnectionParams { rate: self.rate * self.t / s, t: s, r: self.r * s / self.t, d: self.d * s / self.t }
    }
}

/// Estimates `p` at `params` and at `params.rescaled(s)` from independent
/// runs and checks agreement within three combined standard errors. With
/// `s = t` both sides are the same parameters and the same stream.
pub fn p_scaling_identity_check(
    params: ConnectionParams,
    s: f64,
    dim: usize,
    n_trials: u64,
    seed: u64,
) -> Result<ScalingCheck, AnalyticError> {
    positive("s", s)?;
    let other = params.rescaled(s);
    let estimate = |p: &ConnectionParams, seed: u64| -> Result<(f64, f64), AnalyticError> {
        let cfg = SimConfig::new(dim, p.rate, p.t).with_seed(seed);
        let batch = run_trials(&cfg, n_trials, &[Probe::new(Point::on_axis(dim, p.d), p.r)])?;
        let f = batch.hit_fraction(0);
        Ok((f, binomial_se(f, batch.records.len() as u64)))
    };
    let (left, left_se) = estimate(&params, seed)?;
    let (right, right_se) =
        if other == params { (left, left_se) } else { estimate(&other, seed.wrapping_add(0x5eed))? };
    let tol = 3.0 * (left_se * left_se + right_se * right_se).sqrt();
    Ok(ScalingCheck { left, left_se, right, right_se, agree: (left - right).abs() <= tol })
}
