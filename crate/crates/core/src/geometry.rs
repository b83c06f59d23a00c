//! Dimension-generic points and segments, uniform directions on the sphere,
//! and the grid estimator of the Hausdorff distance between a segment set
//! and a ball.
//!
//! Hot loops work on raw `&[f64]` coordinate slices; [`Point`] and
//! [`Segment`] are the owned forms used at API boundaries.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension must be at least 1")]
    InvalidDimension,
    #[error("coordinates must be finite")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },
}

/// A point (or vector) of R^D.
#[derive(Debug, Clone, PartialEq)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self, GeometryError> {
        if coords.is_empty() {
            return Err(GeometryError::InvalidDimension);
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        Ok(Point(coords))
    }

    pub fn origin(dim: usize) -> Self {
        Point(vec![0.0; dim])
    }

    /// `radius · e_1`.
    pub fn on_axis(dim: usize, radius: f64) -> Self {
        let mut c = vec![0.0; dim];
        c[0] = radius;
        Point(c)
    }

    pub(crate) fn from_slice(coords: &[f64]) -> Self {
        Point(coords.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn distance(&self, other: &Point) -> f64 {
        distance(&self.0, &other.0)
    }

    pub fn scaled(&self, factor: f64) -> Point {
        Point(self.0.iter().map(|c| c * factor).collect())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// A straight piece of the tree; `birth_time` is when its growth started.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: Point,
    pub end: Point,
    pub birth_time: f64,
}

impl Segment {
    pub fn new(start: Point, end: Point, birth_time: f64) -> Result<Self, GeometryError> {
        if start.dim() != end.dim() {
            return Err(GeometryError::DimensionMismatch { expected: start.dim(), got: end.dim() });
        }
        Ok(Segment { start, end, birth_time })
    }

    pub fn view(&self) -> SegmentView<'_> {
        SegmentView { start: self.start.coords(), end: self.end.coords(), birth_time: self.birth_time }
    }

    pub fn length(&self) -> f64 {
        self.start.distance(&self.end)
    }
}

/// Borrowed segment, as stored inside a [`crate::Tree`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentView<'a> {
    pub start: &'a [f64],
    pub end: &'a [f64],
    pub birth_time: f64,
}

impl SegmentView<'_> {
    pub fn to_owned(&self) -> Segment {
        Segment { start: Point::from_slice(self.start), end: Point::from_slice(self.end), birth_time: self.birth_time }
    }

    pub fn length(&self) -> f64 {
        distance(self.start, self.end)
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Writes a uniform direction on S^{D-1} into `out` (D = `out.len()`).
///
/// D = 1 is a fair sign; otherwise a standard Gaussian vector is normalised.
pub fn sample_direction_into<R: Rng + ?Sized>(out: &mut [f64], rng: &mut R) {
    if out.len() == 1 {
        out[0] = if rng.random::<bool>() { 1.0 } else { -1.0 };
        return;
    }
    loop {
        let mut sq = 0.0;
        for c in out.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *c = g;
            sq += g * g;
        }
        // Probability zero, but a zero vector cannot be normalised.
        if sq > 1e-300 {
            let inv = sq.sqrt().recip();
            out.iter_mut().for_each(|c| *c *= inv);
            return;
        }
    }
}

/// Uniform random direction on S^{dim-1}.
pub fn sample_direction<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<Point, GeometryError> {
    if dim == 0 {
        return Err(GeometryError::InvalidDimension);
    }
    let mut v = vec![0.0; dim];
    sample_direction_into(&mut v, rng);
    Ok(Point(v))
}

/// Euclidean distance from `p` to the closed segment `[a, b]`.
pub fn distance_to_segment(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut ab2 = 0.0;
    let mut ap_ab = 0.0;
    for ((&pi, &ai), &bi) in p.iter().zip(a).zip(b) {
        let d = bi - ai;
        ab2 += d * d;
        ap_ab += (pi - ai) * d;
    }
    let u = if ab2 > 0.0 { (ap_ab / ab2).clamp(0.0, 1.0) } else { 0.0 };
    p.iter()
        .zip(a)
        .zip(b)
        .map(|((&pi, &ai), &bi)| {
            let foot = ai + u * (bi - ai);
            (pi - foot) * (pi - foot)
        })
        .sum::<f64>()
        .sqrt()
}

pub fn point_segment_distance(p: &Point, s: &Segment) -> f64 {
    distance_to_segment(p.coords(), s.start.coords(), s.end.coords())
}

/// Parameter interval `[u0, u1] ⊂ [0, 1]` of `a + u (b - a)` lying in the
/// closed ball `B(center, radius)`, if non-empty.
pub fn clip_to_ball(a: &[f64], b: &[f64], center: &[f64], radius: f64) -> Option<(f64, f64)> {
    let (mut qa, mut qb, mut qc) = (0.0, 0.0, -radius * radius);
    for ((&ai, &bi), &ci) in a.iter().zip(b).zip(center) {
        let d = bi - ai;
        let o = ai - ci;
        qa += d * d;
        qb += 2.0 * o * d;
        qc += o * o;
    }
    if qa == 0.0 {
        return (qc <= 0.0).then_some((0.0, 0.0));
    }
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // Numerically stable root pair.
    let sign = if qb >= 0.0 { 1.0 } else { -1.0 };
    let q = -0.5 * (qb + sign * sq);
    let (mut r0, mut r1) = if q != 0.0 { (q / qa, qc / q) } else { (0.0, 0.0) };
    if r0 > r1 {
        std::mem::swap(&mut r0, &mut r1);
    }
    let (u0, u1) = (r0.max(0.0), r1.min(1.0));
    (u0 <= u1).then_some((u0, u1))
}

/// Points of `step · Z^D` lying in the closed ball `B(center, radius)`.
pub fn ball_lattice(center: &[f64], radius: f64, step: f64) -> Vec<Vec<f64>> {
    let dim = center.len();
    let mut out = Vec::new();
    if radius < 0.0 || dim == 0 {
        return out;
    }
    let lo: Vec<i64> = center.iter().map(|c| ((c - radius) / step).ceil() as i64).collect();
    let hi: Vec<i64> = center.iter().map(|c| ((c + radius) / step).floor() as i64).collect();
    if lo.iter().zip(&hi).any(|(l, h)| l > h) {
        return out;
    }
    let mut idx = lo.clone();
    let r2 = radius * radius;
    loop {
        let p: Vec<f64> = idx.iter().map(|&k| k as f64 * step).collect();
        let d2: f64 = p.iter().zip(center).map(|(x, c)| (x - c) * (x - c)).sum();
        if d2 <= r2 {
            out.push(p);
        }
        let mut axis = 0;
        loop {
            if axis == dim {
                return out;
            }
            idx[axis] += 1;
            if idx[axis] <= hi[axis] {
                break;
            }
            idx[axis] = lo[axis];
            axis += 1;
        }
    }
}

/// Result of [`hausdorff_to_ball`].
#[derive(Debug, Clone, PartialEq)]
pub struct HausdorffEstimate {
    pub value: f64,
    /// No segment met the ball; `value` is then the ball radius by convention.
    pub empty: bool,
    pub grid_points: usize,
    /// `grid_step · √D / 2`: how far an interior ball point can be from the
    /// nearest lattice point. Points within `grid_step / 2` of the sphere
    /// are excluded from the lattice and add up to that much again.
    pub resolution: f64,
}

/// Grid estimate of `dist_H(S ∩ B, B)` for the closed ball `B = B(center, radius)`.
///
/// Only the ball-side supremum is computed; the clipped set lies inside the
/// ball, so the other one-sided distance is zero. The lattice is
/// `grid_step · Z^D ∩ B(center, radius − grid_step/2)`. Segments are
/// bucketed on a grid of twice the lattice step, and each lattice point
/// stops searching once it cannot raise the running maximum.
pub fn hausdorff_to_ball<'a, I>(
    segments: I,
    center: &Point,
    radius: f64,
    grid_step: f64,
) -> Result<HausdorffEstimate, GeometryError>
where
    I: IntoIterator<Item = SegmentView<'a>>,
{
    if !(radius > 0.0) {
        return Err(GeometryError::NonPositive { what: "radius", value: radius });
    }
    if !(grid_step > 0.0) {
        return Err(GeometryError::NonPositive { what: "grid_step", value: grid_step });
    }
    let dim = center.dim();
    let c = center.coords();
    let mut clipped: Vec<f64> = Vec::new();
    for s in segments {
        if s.start.len() != dim {
            return Err(GeometryError::DimensionMismatch { expected: dim, got: s.start.len() });
        }
        if let Some((u0, u1)) = clip_to_ball(s.start, s.end, c, radius) {
            for k in 0..dim {
                clipped.push(s.start[k] + u0 * (s.end[k] - s.start[k]));
            }
            for k in 0..dim {
                clipped.push(s.start[k] + u1 * (s.end[k] - s.start[k]));
            }
        }
    }
    let lattice = ball_lattice(c, radius - grid_step / 2.0, grid_step);
    let resolution = grid_step * (dim as f64).sqrt() / 2.0;
    if clipped.is_empty() {
        return Ok(HausdorffEstimate { value: radius, empty: true, grid_points: lattice.len(), resolution });
    }
    Ok(HausdorffEstimate {
        value: sup_min_distance(&lattice, &clipped, dim, 2.0 * grid_step),
        empty: false,
        grid_points: lattice.len(),
        resolution,
    })
}

/// `max_x min_s dist(x, s)` over lattice points `x` and flat segments `s`
/// (each `2·dim` coordinates: start then end). Zero for an empty lattice.
pub(crate) fn sup_min_distance(lattice: &[Vec<f64>], flat_segments: &[f64], dim: usize, cell: f64) -> f64 {
    let mut grid = SegmentGrid::new(dim, cell);
    for seg in flat_segments.chunks_exact(2 * dim) {
        grid.insert(&seg[..dim], &seg[dim..]);
    }
    let mut best = 0.0f64;
    for x in lattice {
        let m = grid.nearest(x, best);
        if m > best {
            best = m;
        }
    }
    best
}

/// Calls `f` on every integer offset of `center` at Chebyshev distance exactly `k`.
pub fn for_each_in_shell(center: &[i64], k: i64, f: &mut dyn FnMut(&[i64])) {
    let dim = center.len();
    let mut off = vec![-k; dim];
    let mut cell = vec![0i64; dim];
    loop {
        if k == 0 || off.iter().any(|o| o.abs() == k) {
            for ((c, &o), &x) in cell.iter_mut().zip(&off).zip(center) {
                *c = x + o;
            }
            f(&cell);
        }
        let mut axis = 0;
        loop {
            if axis == dim {
                return;
            }
            off[axis] += 1;
            if off[axis] <= k {
                break;
            }
            off[axis] = -k;
            axis += 1;
        }
    }
}

/// Uniform-grid index of segments for nearest-segment queries.
///
/// A segment is listed in every cell whose centre lies within half a cell
/// diagonal of it, which covers every cell it passes through.
#[derive(Debug, Clone)]
pub struct SegmentGrid {
    dim: usize,
    cell: f64,
    flat: Vec<f64>,
    cells: HashMap<Vec<i64>, Vec<u32>>,
    lo: Vec<i64>,
    hi: Vec<i64>,
}

impl SegmentGrid {
    pub fn new(dim: usize, cell: f64) -> Self {
        SegmentGrid {
            dim,
            cell,
            flat: Vec::new(),
            cells: HashMap::new(),
            lo: vec![i64::MAX; dim],
            hi: vec![i64::MIN; dim],
        }
    }

    pub fn len(&self) -> usize {
        self.flat.len() / (2 * self.dim)
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn cell_of(&self, x: &[f64]) -> Vec<i64> {
        x.iter().map(|v| (v / self.cell).floor() as i64).collect()
    }

    pub fn insert(&mut self, a: &[f64], b: &[f64]) {
        let id = self.len() as u32;
        self.flat.extend_from_slice(a);
        self.flat.extend_from_slice(b);
        let lo: Vec<i64> = a.iter().zip(b).map(|(x, y)| (x.min(*y) / self.cell).floor() as i64).collect();
        let hi: Vec<i64> = a.iter().zip(b).map(|(x, y)| (x.max(*y) / self.cell).floor() as i64).collect();
        for k in 0..self.dim {
            self.lo[k] = self.lo[k].min(lo[k]);
            self.hi[k] = self.hi[k].max(hi[k]);
        }
        let reach = 0.5 * self.cell * (self.dim as f64).sqrt();
        let mut idx = lo.clone();
        let mut centre = vec![0.0; self.dim];
        loop {
            for (c, &i) in centre.iter_mut().zip(&idx) {
                *c = (i as f64 + 0.5) * self.cell;
            }
            if distance_to_segment(&centre, a, b) <= reach {
                self.cells.entry(idx.clone()).or_default().push(id);
            }
            let mut axis = 0;
            loop {
                if axis == self.dim {
                    return;
                }
                idx[axis] += 1;
                if idx[axis] <= hi[axis] {
                    break;
                }
                idx[axis] = lo[axis];
                axis += 1;
            }
        }
    }

    /// Distance from `x` to the nearest segment (`+∞` when empty). The
    /// search may stop as soon as some segment is within `good_enough`, in
    /// which case the returned value is only guaranteed to be `≤ good_enough`.
    pub fn nearest(&self, x: &[f64], good_enough: f64) -> f64 {
        if self.is_empty() {
            return f64::INFINITY;
        }
        let c = self.cell_of(x);
        let k_max = (0..self.dim).map(|k| (c[k] - self.lo[k]).abs().max((self.hi[k] - c[k]).abs())).max().unwrap_or(0);
        let mut best = f64::INFINITY;
        let stride = 2 * self.dim;
        for k in 0..=k_max {
            for_each_in_shell(&c, k, &mut |cell| {
                if let Some(ids) = self.cells.get(cell) {
                    for &id in ids {
                        let s = &self.flat[id as usize * stride..(id as usize + 1) * stride];
                        let d = distance_to_segment(x, &s[..self.dim], &s[self.dim..]);
                        if d < best {
                            best = d;
                        }
                    }
                }
            });
            // Cells in shell k + 1 are at least k cells away.
            if best <= good_enough || best <= k as f64 * self.cell {
                return best;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn pt(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    fn seg(a: &[f64], b: &[f64]) -> Segment {
        Segment::new(pt(a), pt(b), 0.0).unwrap()
    }

    #[test]
    fn zero_dimension_is_rejected() {
        assert_eq!(sample_direction(0, &mut stream(1)), Err(GeometryError::InvalidDimension));
    }

    #[test]
    fn directions_are_unit() {
        let mut rng = stream(3);
        for dim in [1, 2, 3, 5] {
            for _ in 0..1000 {
                let v = sample_direction(dim, &mut rng).unwrap();
                assert!((v.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn one_dimensional_directions_are_fair_signs() {
        let mut rng = stream(11);
        let n = 10_000;
        let plus = (0..n).filter(|_| sample_direction(1, &mut rng).unwrap().coords()[0] > 0.0).count();
        let f = plus as f64 / n as f64;
        assert!((f - 0.5).abs() < 0.01, "{f}");
    }

    #[test]
    fn circle_angles_are_uniform() {
        let mut rng = stream(12);
        let n = 100_000;
        let mut counts = vec![0u64; 36];
        for _ in 0..n {
            let v = sample_direction(2, &mut rng).unwrap();
            let a = v.coords()[1].atan2(v.coords()[0]).rem_euclid(std::f64::consts::TAU);
            counts[((a / std::f64::consts::TAU * 36.0) as usize).min(35)] += 1;
        }
        let probs = vec![1.0 / 36.0; 36];
        let rep = crate::stats::chi_square_gof(&counts, &probs, 5.0).unwrap();
        assert!(rep.p_value.unwrap() > 1e-3, "{rep:?}");
    }

    #[test]
    fn sphere_coordinates_have_moments_of_one_over_d() {
        let mut rng = stream(13);
        let n = 100_000;
        let mut m1 = [0.0; 3];
        let mut m2 = [0.0; 3];
        for _ in 0..n {
            let v = sample_direction(3, &mut rng).unwrap();
            for k in 0..3 {
                m1[k] += v.coords()[k];
                m2[k] += v.coords()[k] * v.coords()[k];
            }
        }
        for k in 0..3 {
            assert!((m1[k] / n as f64).abs() < 0.01);
            assert!((m2[k] / n as f64 - 1.0 / 3.0).abs() < 0.01);
        }
    }

    #[test]
    fn segment_distance_cases() {
        let s = seg(&[-1.0, 0.0], &[1.0, 0.0]);
        assert_eq!(point_segment_distance(&pt(&[0.0, 1.0]), &s), 1.0);
        assert_eq!(point_segment_distance(&pt(&[2.0, 0.0]), &s), 1.0);
        let degenerate = seg(&[3.0, 4.0], &[3.0, 4.0]);
        assert_eq!(point_segment_distance(&pt(&[0.0, 0.0]), &degenerate), 5.0);
    }

    #[test]
    fn clipping_matches_chords() {
        // Chord through the centre of the unit disk.
        let (u0, u1) = clip_to_ball(&[-2.0, 0.0], &[2.0, 0.0], &[0.0, 0.0], 1.0).unwrap();
        assert!((u0 - 0.25).abs() < 1e-15 && (u1 - 0.75).abs() < 1e-15);
        // Entirely inside.
        assert_eq!(clip_to_ball(&[0.1, 0.0], &[0.2, 0.1], &[0.0, 0.0], 1.0), Some((0.0, 1.0)));
        // Misses.
        assert_eq!(clip_to_ball(&[-2.0, 2.0], &[2.0, 2.0], &[0.0, 0.0], 1.0), None);
        // Points outward and starts inside.
        let (u0, u1) = clip_to_ball(&[0.0, 0.0], &[0.0, 4.0], &[0.0, 0.0], 1.0).unwrap();
        assert_eq!(u0, 0.0);
        assert!((u1 - 0.25).abs() < 1e-15);
    }

    #[test]
    fn lattice_counts_in_disk() {
        // Gauss circle problem, r = 2: 13 integer points.
        assert_eq!(ball_lattice(&[0.0, 0.0], 2.0, 1.0).len(), 13);
        assert_eq!(ball_lattice(&[0.0], 1.0, 0.5).len(), 5);
        assert!(ball_lattice(&[0.0, 0.0], -0.1, 1.0).is_empty());
    }

    #[test]
    fn hausdorff_of_empty_set_is_radius() {
        let h = hausdorff_to_ball(std::iter::empty(), &Point::origin(2), 0.5, 0.01).unwrap();
        assert!(h.empty);
        assert_eq!(h.value, 0.5);
        let far = seg(&[3.0, 3.0], &[4.0, 3.0]);
        let h = hausdorff_to_ball([far.view()], &Point::origin(2), 0.5, 0.01).unwrap();
        assert!(h.empty);
    }

    #[test]
    fn hausdorff_rejects_bad_parameters() {
        assert!(hausdorff_to_ball(std::iter::empty(), &Point::origin(2), 0.0, 0.1).is_err());
        assert!(hausdorff_to_ball(std::iter::empty(), &Point::origin(2), 1.0, -0.1).is_err());
    }

    /// Horizontal chords of B(0, 1/2) every `spacing`.
    fn tiling(spacing: f64) -> Vec<Segment> {
        let mut out = Vec::new();
        let mut y = -0.5;
        while y <= 0.5 {
            out.push(seg(&[-1.0, y], &[1.0, y]));
            y += spacing;
        }
        out
    }

    #[test]
    fn dense_tiling_fills_the_ball() {
        let step = 0.02;
        let segs = tiling(step / 10.0);
        let h = hausdorff_to_ball(segs.iter().map(Segment::view), &Point::origin(2), 0.5, step).unwrap();
        assert!(h.value <= 2.0 * step, "{h:?}");
        assert!(h.value <= step / 10.0);
    }

    #[test]
    fn radius_segment_matches_dense_oracle() {
        // Brute force at step 0.001 over the whole closed disk.
        let s = seg(&[0.0, 0.0], &[0.5, 0.0]);
        let mut oracle = 0.0f64;
        let n = 500i32;
        for i in -n..=n {
            for j in -n..=n {
                let p = [i as f64 * 0.001, j as f64 * 0.001];
                if p[0] * p[0] + p[1] * p[1] <= 0.25 {
                    oracle = oracle.max(distance_to_segment(&p, s.start.coords(), s.end.coords()));
                }
            }
        }
        assert!((oracle - 0.5).abs() < 1e-3);
        let h = hausdorff_to_ball([s.view()], &Point::origin(2), 0.5, 0.01).unwrap();
        assert!((h.value - oracle).abs() <= h.resolution + 0.005, "{} vs {oracle}", h.value);
    }

    proptest! {
        #[test]
        fn distance_is_zero_on_the_segment(
            a in prop::collection::vec(-5.0f64..5.0, 3),
            b in prop::collection::vec(-5.0f64..5.0, 3),
            u in 0.0f64..=1.0,
        ) {
            let p: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + u * (y - x)).collect();
            prop_assert!(distance_to_segment(&p, &a, &b) < 1e-12);
        }

        #[test]
        fn distance_is_positive_off_the_line(
            a in prop::collection::vec(-5.0f64..5.0, 2),
            len in 0.1f64..3.0,
            u in -1.0f64..2.0,
            off in 0.01f64..2.0,
        ) {
            // Segment along +x from a; probe displaced perpendicular.
            let b = vec![a[0] + len, a[1]];
            let p = vec![a[0] + u * len, a[1] + off];
            prop_assert!(distance_to_segment(&p, &a, &b) >= off - 1e-12);
        }

        #[test]
        fn adding_segments_never_increases_hausdorff(
            raw in prop::collection::vec((-0.6f64..0.6, -0.6f64..0.6, -0.6f64..0.6, -0.6f64..0.6), 2..8),
        ) {
            let segs: Vec<Segment> = raw.iter().map(|&(a, b, c, d)| seg(&[a, b], &[c, d])).collect();
            let base = [seg(&[-0.3, 0.0], &[0.3, 0.0])];
            let centre = Point::origin(2);
            let mut prev = hausdorff_to_ball(base.iter().map(Segment::view), &centre, 0.5, 0.05).unwrap().value;
            for k in 1..=segs.len() {
                let all = base.iter().chain(&segs[..k]).map(Segment::view);
                let h = hausdorff_to_ball(all, &centre, 0.5, 0.05).unwrap().value;
                prop_assert!(h <= prev + 1e-15);
                prev = h;
            }
        }
    }
}
