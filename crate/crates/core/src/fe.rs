//! Time-marching solver for the planar miss probability
//! `q_r^λ(t, d) = P(dist(T_λ(t), x) > r)`, `|x| = d`.
//!
//! Conditioning on the first branching time `s` and the direction `α` of the
//! root segment gives
//!
//! ```text
//! q(t,d) = ∫∫ λe^{−λs}/(2π) q(t−s, D(s,α))² ds dα + e^{−λt} f_r(t,d)
//! ```
//!
//! over the near cone (`|α| ≤ α₀`, `s ≤ min(s₀(α), t)`) and the far region
//! (`|α| ≥ α₀`, `s ≤ t`). The right side only looks at earlier times, so the
//! grid is filled one time layer at a time: an explicit predictor from the
//! finished layers, then one corrector pass that also reads the predicted
//! layer.
//!
//! The `s` integral uses the trapezoid rule with the exponential weight
//! integrated exactly against each hat function, so a constant integrand is
//! integrated exactly and `λ = 0` reduces to `f_r`. The `α` integral is the
//! plain trapezoid rule on a mesh graded toward the tangent angle `α₀`.
//!
//! `q` jumps from 0 to about 1/2 across `d = r`, so the solver also tracks
//! the one-sided column `q(t, r+)` and interpolates against it in cells
//! that straddle `r`.

use std::f64::consts::PI;

use thiserror::Error;

use crate::analytic::miss_given_no_branch;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeError {
    #[error("invalid solver parameters: {0}")]
    InvalidParams(String),
    #[error("grid too small: D = {distance} > d_max at t = {t}, d = {d}, s = {s}, alpha = {alpha}")]
    GridExtent { t: f64, d: f64, s: f64, alpha: f64, distance: f64 },
    #[error("grids are not comparable: {0}")]
    Mismatch(String),
}

pub const MIN_QUADRATURE_ORDER: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeParams {
    pub rate: f64,
    pub r: f64,
    pub t_max: f64,
    pub d_max: f64,
    pub dt: f64,
    pub dd: f64,
    pub n_alpha: usize,
    pub n_s: usize,
}

impl FeParams {
    /// Square cells (`dt = dd = step`) and `d_max = t_max + r`, the largest
    /// distance the equation ever needs to look up.
    pub fn square(rate: f64, r: f64, t_max: f64, step: f64) -> Self {
        FeParams { rate, r, t_max, d_max: t_max + r, dt: step, dd: step, n_alpha: 32, n_s: 32 }
    }

    pub fn with_orders(mut self, n_alpha: usize, n_s: usize) -> Self {
        self.n_alpha = n_alpha;
        self.n_s = n_s;
        self
    }

    /// Same extents with both steps divided by `factor`.
    pub fn refined(mut self, factor: usize) -> Self {
        self.dt /= factor as f64;
        self.dd /= factor as f64;
        self
    }

    pub fn validate(&self) -> Result<(), FeError> {
        let bad = |m: String| Err(FeError::InvalidParams(m));
        if !(self.rate >= 0.0 && self.rate.is_finite()) {
            return bad(format!("rate {} must be finite and non-negative", self.rate));
        }
        for (name, v) in [("r", self.r), ("t_max", self.t_max), ("d_max", self.d_max), ("dt", self.dt), ("dd", self.dd)]
        {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v} must be positive"));
            }
        }
        if self.t_max < self.dt {
            return bad(format!("t_max = {} is below the step {}", self.t_max, self.dt));
        }
        if self.d_max <= self.r {
            return bad(format!("d_max = {} must exceed r = {}", self.d_max, self.r));
        }
        if (self.dt - self.dd).abs() > 1e-12 * self.dd {
            return bad(format!("dt = {} and dd = {} must be equal", self.dt, self.dd));
        }
        let ratio = self.r / self.dd;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return bad(format!("r = {} must be a multiple of the step {}", self.r, self.dd));
        }
        if self.n_alpha < MIN_QUADRATURE_ORDER || self.n_s < MIN_QUADRATURE_ORDER {
            return bad(format!(
                "quadrature orders ({}, {}) must be at least {MIN_QUADRATURE_ORDER}",
                self.n_alpha, self.n_s
            ));
        }
        Ok(())
    }

    fn r_index(&self) -> usize {
        (self.r / self.dd).round() as usize
    }

    fn nt(&self) -> usize {
        (self.t_max / self.dt + 1e-9).floor() as usize
    }

    fn nd(&self) -> usize {
        (self.d_max / self.dd - 1e-9).ceil() as usize
    }
}

/// Solution on the nodes `t_i = i·dt`, `d_j = j·dd`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeGrid {
    pub params: FeParams,
    nt: usize,
    nd: usize,
    q: Vec<f64>,
    edge: Vec<f64>,
}

impl FeGrid {
    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn nd(&self) -> usize {
        self.nd
    }

    pub fn t(&self, i: usize) -> f64 {
        i as f64 * self.params.dt
    }

    pub fn d(&self, j: usize) -> f64 {
        j as f64 * self.params.dd
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.q[i * (self.nd + 1) + j]
    }

    /// `q(t_i, r+)`.
    pub fn edge(&self, i: usize) -> f64 {
        self.edge[i]
    }

    /// `q` at an arbitrary point, by the same interpolation the solver uses.
    pub fn interpolate(&self, t: f64, d: f64) -> Result<f64, FeError> {
        let view = Layers { p: &self.params, nd: self.nd, q: &self.q, edge: &self.edge, last: self.nt };
        view.lookup(t, d).ok_or(FeError::GridExtent { t, d, s: 0.0, alpha: 0.0, distance: d })
    }

    /// `(t, d, q)` for every node, time-major.
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (0..=self.nt).flat_map(move |i| (0..=self.nd).map(move |j| (self.t(i), self.d(j), self.value(i, j))))
    }
}

struct Layers<'a> {
    p: &'a FeParams,
    nd: usize,
    q: &'a [f64],
    edge: &'a [f64],
    /// Last filled layer.
    last: usize,
}

impl Layers<'_> {
    /// Node value, with the `r+` edge standing in for the column at `d = r`.
    fn node(&self, i: usize, j: usize) -> f64 {
        if j <= self.p.r_index() {
            self.edge[i]
        } else {
            self.q[i * (self.nd + 1) + j]
        }
    }

    /// Piecewise linear lookup on triangles whose diagonals run parallel to
    /// the sheet `t = d − r`, so no triangle straddles it. In the strip just
    /// past the sheet, where `1 − q` grows like the square root of the
    /// distance, the interpolation across the strip is in that square root.
    /// Times past the last filled layer are clamped to it; `None` when `d`
    /// runs past the grid.
    fn lookup(&self, t: f64, d: f64) -> Option<f64> {
        let r = self.p.r;
        if d <= r {
            return Some(0.0);
        }
        let t = t.min(self.last as f64 * self.p.dt);
        if t < d - r {
            return Some(1.0);
        }
        let h = self.p.dd;
        let (x, y) = (t / h, d / h);
        if y > self.nd as f64 + 1e-9 {
            return None;
        }
        let jr = self.p.r_index();
        let i0 = (x.floor() as usize).min(self.last - 1);
        let j0 = (y.floor() as usize).clamp(jr, self.nd - 1);
        let (fx, fy) = ((x - i0 as f64).clamp(0.0, 1.0), (y - j0 as f64).clamp(0.0, 1.0));
        // Index of the diagonal through (i0, j0); the sheet is line 0.
        let line = i0 as i64 - j0 as i64 + jr as i64;
        let (a, c) = (self.node(i0, j0), self.node(i0 + 1, j0 + 1));
        let shape = |w: f64, sheet: bool| if sheet { w.sqrt() } else { w };
        Some(if fx >= fy {
            // Third vertex (i0+1, j0) on line + 1.
            let w = fx - fy;
            let b = self.node(i0 + 1, j0);
            let along = if w < 1.0 { ((1.0 - fx) * a + fy * c) / (1.0 - w) } else { b };
            along + shape(w, line == 0) * (b - along)
        } else {
            // Third vertex (i0, j0+1) on line − 1.
            let w = 1.0 - (fy - fx);
            let b = self.node(i0, j0 + 1);
            let along = if w > 0.0 { ((1.0 - fy) * a + fx * c) / w } else { b };
            b + shape(w, line == 1) * (along - b)
        })
    }
}

/// Weights `w_k` with `Σ w_k g(s_k) = ∫ λe^{−λs} ĝ(s) ds`, `ĝ` the piecewise
/// linear interpolant of `g` on `nodes`.
fn exponential_hat_weights(rate: f64, nodes: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.resize(nodes.len(), 0.0);
    if rate == 0.0 {
        return;
    }
    for k in 0..nodes.len() - 1 {
        let (a, b) = (nodes[k], nodes[k + 1]);
        let h = b - a;
        if h <= 0.0 {
            continue;
        }
        let z = rate * h;
        let ea = (-rate * a).exp();
        let mass = -(-z).exp_m1();
        let right = if z < 1e-3 {
            z / 2.0 - z * z / 3.0 + z * z * z / 8.0 - z * z * z * z / 30.0
        } else {
            mass / z - (-z).exp()
        };
        out[k] += ea * (mass - right);
        out[k + 1] += ea * right;
    }
}

fn trapezoid_weights(nodes: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.resize(nodes.len(), 0.0);
    for k in 0..nodes.len() - 1 {
        let h = 0.5 * (nodes[k + 1] - nodes[k]);
        out[k] += h;
        out[k + 1] += h;
    }
}

/// Angular nodes and weights for one region, graded toward `α₀`.
struct AngleMesh {
    alpha: Vec<f64>,
    cos: Vec<f64>,
    weight: Vec<f64>,
}

impl AngleMesh {
    fn near(alpha0: f64, n: usize) -> Self {
        Self::build((0..=n).map(|k| {
            let u = 1.0 - k as f64 / n as f64;
            alpha0 * (1.0 - u * u)
        }))
    }

    fn far(alpha0: f64, n: usize) -> Self {
        Self::build((0..=n).map(|k| {
            let u = k as f64 / n as f64;
            alpha0 + (PI - alpha0) * u * u
        }))
    }

    fn build(nodes: impl Iterator<Item = f64>) -> Self {
        let alpha: Vec<f64> = nodes.collect();
        let mut weight = Vec::new();
        trapezoid_weights(&alpha, &mut weight);
        let cos = alpha.iter().map(|a| a.cos()).collect();
        AngleMesh { alpha, cos, weight }
    }
}

struct Scratch {
    s: Vec<f64>,
    w: Vec<f64>,
}

/// `(1/π) ∫_mesh ∫_0^{s_max(α)} λe^{−λs} q(t−s, D)² ds dα`; the factor 2 of
/// the symmetric half-plane cancels against `1/(2π)`.
fn region_integral(
    layers: &Layers<'_>,
    t: f64,
    d: f64,
    mesh: &AngleMesh,
    s_max: impl Fn(usize) -> f64,
    scratch: &mut Scratch,
) -> Result<f64, FeError> {
    let n_s = layers.p.n_s;
    let mut total = 0.0;
    for (k, (&cos, &wa)) in mesh.cos.iter().zip(&mesh.weight).enumerate() {
        let top = s_max(k);
        if top <= 0.0 || wa == 0.0 {
            continue;
        }
        scratch.s.clear();
        scratch.s.extend((0..=n_s).map(|m| {
            let u = m as f64 / n_s as f64;
            top * u * u
        }));
        exponential_hat_weights(layers.p.rate, &scratch.s, &mut scratch.w);
        let mut inner = 0.0;
        for (&s, &ws) in scratch.s.iter().zip(&scratch.w) {
            if ws == 0.0 {
                continue;
            }
            let dist = (d * d + s * s - 2.0 * d * s * cos).max(0.0).sqrt();
            let v = layers.lookup(t - s, dist).ok_or(FeError::GridExtent {
                t,
                d,
                s,
                alpha: mesh.alpha[k],
                distance: dist,
            })?;
            inner += ws * v * v;
        }
        total += wa * inner;
    }
    Ok(total / PI)
}

fn solve_node(layers: &Layers<'_>, t: f64, d: f64, scratch: &mut Scratch) -> Result<f64, FeError> {
    let p = layers.p;
    let r = p.r;
    let alpha0 = (r / d).min(1.0).asin();
    let near = AngleMesh::near(alpha0, p.n_alpha);
    let far = AngleMesh::far(alpha0, p.n_alpha);
    let near_part = region_integral(
        layers,
        t,
        d,
        &near,
        |k| {
            let (sin, cos) = near.alpha[k].sin_cos();
            let s0 = d * cos - (r * r - d * d * sin * sin).max(0.0).sqrt();
            s0.min(t)
        },
        scratch,
    )?;
    let far_part = region_integral(layers, t, d, &far, |_| t, scratch)?;
    let f = if d <= r { 0.5 } else { miss_given_no_branch(t, d, r).unwrap_or(1.0) };
    Ok((near_part + far_part + (-p.rate * t).exp() * f).clamp(0.0, 1.0))
}

/// Marches the equation from `t = 0` to `t_max`.
pub fn solve(params: FeParams) -> Result<FeGrid, FeError> {
    params.validate()?;
    let nt = params.nt();
    let nd = params.nd();
    let width = nd + 1;
    let mut q = vec![0.0; (nt + 1) * width];
    // q(0+, r+) = 1/2: half the directions head into the ball.
    let mut edge = vec![0.5; nt + 1];
    for (j, v) in q[..width].iter_mut().enumerate() {
        *v = if j <= params.r_index() { 0.0 } else { 1.0 };
    }
    let mut row = vec![0.0; width];
    for i in 1..=nt {
        let t = i as f64 * params.dt;
        // Predictor reads layers below i; the corrector then also reads the
        // predicted layer i for t − s in (t_{i−1}, t_i].
        for last in [i - 1, i] {
            let layers = Layers { p: &params, nd, q: &q[..(last + 1) * width], edge: &edge[..=last], last };
            let column = |j: usize| -> Result<f64, FeError> {
                let d = j as f64 * params.dd;
                if j <= params.r_index() {
                    Ok(0.0)
                } else if i + params.r_index() <= j {
                    // On or below the sheet t = d − r.
                    Ok(1.0)
                } else {
                    solve_node(&layers, t, d, &mut Scratch { s: Vec::new(), w: Vec::new() })
                }
            };
            fill(&mut row, column)?;
            let e = solve_node(&layers, t, params.r, &mut Scratch { s: Vec::new(), w: Vec::new() })?;
            q[i * width..(i + 1) * width].copy_from_slice(&row);
            edge[i] = e;
        }
    }
    Ok(FeGrid { params, nt, nd, q, edge })
}

#[cfg(feature = "parallel")]
fn fill(row: &mut [f64], column: impl Fn(usize) -> Result<f64, FeError> + Sync) -> Result<(), FeError> {
    use rayon::prelude::*;
    row.par_iter_mut().enumerate().try_for_each(|(j, v)| {
        *v = column(j)?;
        Ok(())
    })
}

#[cfg(not(feature = "parallel"))]
fn fill(row: &mut [f64], column: impl Fn(usize) -> Result<f64, FeError>) -> Result<(), FeError> {
    for (j, v) in row.iter_mut().enumerate() {
        *v = column(j)?;
    }
    Ok(())
}

/// Largest disagreement between two solutions on the coarse grid's nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Consistency {
    pub max_diff: f64,
    pub t: f64,
    pub d: f64,
}

pub fn limit_consistency(grid: &FeGrid, finer: &FeGrid) -> Result<Consistency, FeError> {
    let (a, b) = (&grid.params, &finer.params);
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(1.0);
    if !(close(a.r, b.r) && close(a.t_max, b.t_max) && close(a.d_max, b.d_max) && close(a.rate, b.rate)) {
        return Err(FeError::Mismatch(format!("{a:?} vs {b:?}")));
    }
    let ratio_t = a.dt / b.dt;
    let ratio_d = a.dd / b.dd;
    let (ft, fd) = (ratio_t.round() as usize, ratio_d.round() as usize);
    if ft == 0 || fd == 0 || !close(ratio_t, ft as f64) || !close(ratio_d, fd as f64) {
        return Err(FeError::Mismatch(format!("steps {}/{} and {}/{} are not integer ratios", a.dt, b.dt, a.dd, b.dd)));
    }
    let mut worst = Consistency { max_diff: 0.0, t: 0.0, d: 0.0 };
    for i in 0..=grid.nt {
        for j in 0..=grid.nd {
            let (fi, fj) = (i * ft, j * fd);
            if fi > finer.nt || fj > finer.nd {
                continue;
            }
            let diff = (grid.value(i, j) - finer.value(fi, fj)).abs();
            if diff > worst.max_diff || diff.is_nan() {
                worst = Consistency { max_diff: diff, t: grid.t(i), d: grid.d(j) };
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub rate: f64,
    pub q: f64,
}

/// `q_r^λ(t, d)` for each rate, every solve sharing `step` and the orders.
pub fn lambda_sweep(
    rates: &[f64],
    r: f64,
    t: f64,
    d: f64,
    step: f64,
    n_alpha: usize,
    n_s: usize,
) -> Result<Vec<SweepPoint>, FeError> {
    rates
        .iter()
        .map(|&rate| {
            let grid = solve(FeParams::square(rate, r, t, step).with_orders(n_alpha, n_s))?;
            Ok(SweepPoint { rate, q: grid.interpolate(t, d)? })
        })
        .collect()
}

/// Whether `q` moves monotonically toward the nearer of 0 and 1 along the sweep.
pub fn drifts_to_binary(sweep: &[SweepPoint]) -> bool {
    let Some(last) = sweep.last() else { return false };
    let target = if last.q < 0.5 { 0.0 } else { 1.0 };
    sweep.windows(2).all(|w| (w[1].q - target).abs() <= (w[0].q - target).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(rate: f64) -> FeParams {
        FeParams::square(rate, 0.3, 1.0, 0.05).with_orders(16, 16)
    }

    #[test]
    fn hat_weights_integrate_exactly() {
        let nodes: Vec<f64> = (0..=20).map(|k| 0.7 * (k as f64 / 20.0).powi(2)).collect();
        let mut w = Vec::new();
        for rate in [1e-6, 0.3, 1.0, 40.0] {
            exponential_hat_weights(rate, &nodes, &mut w);
            let total: f64 = w.iter().sum();
            assert!((total - (1.0 - (-rate * 0.7f64).exp())).abs() < 1e-14, "{rate}: {total}");
            // Linear integrand: ∫ λe^{−λs} s ds = (1 − e^{−λT}(1 + λT))/λ.
            let lin: f64 = w.iter().zip(&nodes).map(|(a, b)| a * b).sum();
            let z = rate * 0.7;
            let exact = if z < 1e-3 { 0.7 * (z / 2.0 - z * z / 3.0) } else { (1.0 - (-z).exp() * (1.0 + z)) / rate };
            assert!((lin - exact).abs() < 1e-12 * exact.max(1e-12) + 1e-15, "{rate}: {lin} vs {exact}");
        }
        exponential_hat_weights(0.0, &nodes, &mut w);
        assert!(w.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rejects_bad_params() {
        assert!(solve(small(1.0).with_orders(8, 32)).is_err());
        let mut p = small(1.0);
        p.r = 0.0;
        assert!(solve(p).is_err());
        p = small(-1.0);
        assert!(solve(p).is_err());
    }

    #[test]
    fn boundary_conditions_are_exact() {
        let g = solve(small(1.0)).unwrap();
        for i in 0..=g.nt() {
            for j in 0..=g.nd() {
                let (t, d) = (g.t(i), g.d(j));
                let v = g.value(i, j);
                if j <= 6 {
                    assert_eq!(v, 0.0);
                } else if t < d - 0.3 - 1e-9 {
                    assert_eq!(v, 1.0);
                }
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn rate_zero_is_the_single_segment() {
        let g = solve(small(0.0)).unwrap();
        for i in 1..=g.nt() {
            for j in 0..=g.nd() {
                let (t, d) = (g.t(i), g.d(j));
                if j > 6 && i + 6 <= j {
                    assert_eq!(g.value(i, j), 1.0);
                } else if j > 6 {
                    let f = miss_given_no_branch(t, d, 0.3).unwrap();
                    assert!((g.value(i, j) - f).abs() < 1e-10, "({t},{d})");
                }
            }
            assert!((g.edge(i) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn monotone_in_time() {
        let g = solve(small(2.0)).unwrap();
        for j in 0..=g.nd() {
            for i in 1..=g.nt() {
                assert!(g.value(i, j) <= g.value(i - 1, j) + 1e-3, "column {j} at layer {i}");
            }
        }
    }

    #[test]
    fn identical_grids_agree() {
        let g = solve(small(1.0)).unwrap();
        assert_eq!(limit_consistency(&g, &g).unwrap().max_diff, 0.0);
        let mut other = small(1.0);
        other.r = 0.2;
        let h = solve(other).unwrap();
        assert!(matches!(limit_consistency(&g, &h), Err(FeError::Mismatch(_))));
    }

    #[test]
    fn grid_extent_error() {
        let mut p = small(1.0);
        p.d_max = 0.6;
        assert!(matches!(solve(p), Err(FeError::GridExtent { .. })));
    }

    #[test]
    fn interpolation_reproduces_nodes() {
        let g = solve(small(1.0)).unwrap();
        for (i, j) in [(10, 12), (20, 10), (15, 19)] {
            let v = g.interpolate(g.t(i), g.d(j)).unwrap();
            assert!((v - g.value(i, j)).abs() < 1e-12);
        }
        assert_eq!(g.interpolate(0.5, 0.2).unwrap(), 0.0);
        assert_eq!(g.interpolate(0.1, 0.9).unwrap(), 1.0);
    }

    #[test]
    fn drift_detection() {
        let down = [SweepPoint { rate: 1.0, q: 0.4 }, SweepPoint { rate: 2.0, q: 0.1 }];
        assert!(drifts_to_binary(&down));
        let up_then_down =
            [SweepPoint { rate: 1.0, q: 0.2 }, SweepPoint { rate: 2.0, q: 0.3 }, SweepPoint { rate: 3.0, q: 0.1 }];
        assert!(!drifts_to_binary(&up_then_down));
    }
}
