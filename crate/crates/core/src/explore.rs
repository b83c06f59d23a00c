//! Partial growth of trees too large to grow in full.
//!
//! Every pending leaf of a Yule tree carries an independent copy of the
//! tree started at its position with the remaining time. Growing only some
//! of them, in an order chosen from what has been grown so far, therefore
//! yields a subset of an exact sample: finishing the remaining leaves would
//! complete it to a tree with the right law. Any statistic that can only
//! improve as segments are added is then bounded by its value on the subset.
//! For the distance from a point to the tree, the subset value is an upper
//! bound, and so is the Hausdorff distance to a ball.
//!
//! [`grow_toward`] visits target points in order of distance from the origin
//! and, for each one not yet within `cover` of the tree, repeatedly grows
//! the pending leaf closest to it among those that still have time to get
//! there.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::Exp1;

use crate::geometry::{self, distance, distance_to_segment, for_each_in_shell, SegmentView};
use crate::tree::{SimConfig, SimError};

#[derive(Debug, Clone, PartialEq)]
pub struct TargetPlan {
    pub targets: Vec<Vec<f64>>,
    /// A target counts as reached once a segment passes within this distance.
    pub cover: f64,
    /// Segments grown for a single target before giving up on it.
    pub per_target: usize,
    /// Bucket size for pending leaves and targets.
    pub cell: f64,
}

/// The grown part of a tree.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialTree {
    dim: usize,
    horizon: f64,
    coords: Vec<f64>,
    birth: Vec<f64>,
    parent: Vec<Option<usize>>,
    /// Leaves left ungrown.
    pub pending: usize,
    pub targets_reached: usize,
    pub targets_abandoned: usize,
}

impl PartialTree {
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
        let c = &self.coords[i * w..(i + 1) * w];
        SegmentView { start: &c[..self.dim], end: &c[self.dim..], birth_time: self.birth[i] }
    }

    pub fn segments(&self) -> impl Iterator<Item = SegmentView<'_>> + '_ {
        (0..self.segment_count()).map(move |i| self.segment(i))
    }

    pub fn flat_coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        self.parent[i]
    }

    /// Nothing is left to grow: the subset is the whole tree.
    pub fn is_complete(&self) -> bool {
        self.pending == 0
    }
}

type Cells = HashMap<Vec<i64>, Vec<u32>>;

struct Pending {
    pos: Vec<f64>,
    birth: Vec<f64>,
    parent: Vec<usize>,
    alive: Vec<bool>,
    cells: Cells,
    lo: Vec<i64>,
    hi: Vec<i64>,
    live: usize,
}

fn cell_of(x: &[f64], cell: f64) -> Vec<i64> {
    x.iter().map(|v| (v / cell).floor() as i64).collect()
}

impl Pending {
    fn new(dim: usize) -> Self {
        Pending {
            pos: Vec::new(),
            birth: Vec::new(),
            parent: Vec::new(),
            alive: Vec::new(),
            cells: HashMap::new(),
            lo: vec![i64::MAX; dim],
            hi: vec![i64::MIN; dim],
            live: 0,
        }
    }

    fn push(&mut self, pos: &[f64], birth: f64, parent: usize, cell: f64) {
        let id = self.birth.len() as u32;
        self.pos.extend_from_slice(pos);
        self.birth.push(birth);
        self.parent.push(parent);
        self.alive.push(true);
        let key = cell_of(pos, cell);
        for (k, &c) in key.iter().enumerate() {
            self.lo[k] = self.lo[k].min(c);
            self.hi[k] = self.hi[k].max(c);
        }
        self.cells.entry(key).or_default().push(id);
        self.live += 1;
    }

    fn take(&mut self, id: u32, dim: usize, cell: f64) {
        let key = cell_of(&self.pos[id as usize * dim..(id as usize + 1) * dim], cell);
        if let Some(v) = self.cells.get_mut(&key) {
            if let Some(at) = v.iter().position(|&x| x == id) {
                v.swap_remove(at);
            }
        }
        self.alive[id as usize] = false;
        self.live -= 1;
    }

    /// Closest live leaf to `x` that has time left to come within `cover`.
    fn nearest_reachable(&self, x: &[f64], horizon: f64, cover: f64, cell: f64) -> Option<u32> {
        if self.live == 0 {
            return None;
        }
        let dim = x.len();
        let c = cell_of(x, cell);
        let k_max = (0..dim).map(|k| (c[k] - self.lo[k]).abs().max((self.hi[k] - c[k]).abs())).max().unwrap_or(0);
        let mut best: Option<(f64, u32)> = None;
        for k in 0..=k_max {
            for_each_in_shell(&c, k, &mut |key| {
                if let Some(ids) = self.cells.get(key) {
                    for &id in ids {
                        let p = &self.pos[id as usize * dim..(id as usize + 1) * dim];
                        let d = distance(x, p);
                        if horizon - self.birth[id as usize] < d - cover {
                            continue;
                        }
                        if best.is_none_or(|(b, _)| d < b) {
                            best = Some((d, id));
                        }
                    }
                }
            });
            if let Some((b, id)) = best {
                if b <= k as f64 * cell {
                    return Some(id);
                }
            }
        }
        best.map(|(_, id)| id)
    }
}

/// Grows a subset of the tree of `config` aimed at the targets of `plan`,
/// stopping at `config.max_segments` segments or when every target is
/// reached or abandoned.
pub fn grow_toward<R: Rng + ?Sized>(
    config: &SimConfig,
    plan: &TargetPlan,
    rng: &mut R,
) -> Result<PartialTree, SimError> {
    config.validate()?;
    for t in &plan.targets {
        if t.len() != config.dim {
            return Err(SimError::ProbeDimension { expected: config.dim, got: t.len() });
        }
    }
    let dim = config.dim;
    let horizon = config.horizon;
    let cell = plan.cell;
    let inv_rate = if config.rate > 0.0 { config.rate.recip() } else { f64::INFINITY };

    let mut target_cells: Cells = HashMap::new();
    for (i, t) in plan.targets.iter().enumerate() {
        target_cells.entry(cell_of(t, cell)).or_default().push(i as u32);
    }
    let mut reached = vec![false; plan.targets.len()];
    let mut order: Vec<usize> = (0..plan.targets.len()).collect();
    order.sort_by(|&a, &b| geometry::norm(&plan.targets[a]).total_cmp(&geometry::norm(&plan.targets[b])));

    let mut tree = PartialTree {
        dim,
        horizon,
        coords: Vec::new(),
        birth: Vec::new(),
        parent: Vec::new(),
        pending: 0,
        targets_reached: 0,
        targets_abandoned: 0,
    };
    let mut pending = Pending::new(dim);
    // The root: a pending leaf at the origin born at time 0 with no parent.
    pending.push(&vec![0.0; dim], 0.0, usize::MAX, cell);

    let mut dir = vec![0.0; dim];
    let mut end = vec![0.0; dim];
    let mut expand = |id: u32, tree: &mut PartialTree, pending: &mut Pending, reached: &mut Vec<bool>, rng: &mut R| {
        pending.take(id, dim, cell);
        let i = id as usize;
        let start: Vec<f64> = pending.pos[i * dim..(i + 1) * dim].to_vec();
        let birth = pending.birth[i];
        let parent = pending.parent[i];
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
        let index = tree.birth.len();
        tree.coords.extend_from_slice(&start);
        tree.coords.extend_from_slice(&end);
        tree.birth.push(birth);
        tree.parent.push((parent != usize::MAX).then_some(parent));
        if branches {
            pending.push(&end, fire, index, cell);
            pending.push(&end, fire, index, cell);
        }
        // Mark targets the new segment reaches.
        let lo = cell_of(&start.iter().zip(&end).map(|(a, b)| a.min(*b) - plan.cover).collect::<Vec<_>>(), cell);
        let hi = cell_of(&start.iter().zip(&end).map(|(a, b)| a.max(*b) + plan.cover).collect::<Vec<_>>(), cell);
        let mut key = lo.clone();
        'cells: loop {
            if let Some(ids) = target_cells.get(&key) {
                for &t in ids {
                    let t = t as usize;
                    if !reached[t] && distance_to_segment(&plan.targets[t], &start, &end) <= plan.cover {
                        reached[t] = true;
                    }
                }
            }
            let mut axis = 0;
            loop {
                if axis == dim {
                    break 'cells;
                }
                key[axis] += 1;
                if key[axis] <= hi[axis] {
                    break;
                }
                key[axis] = lo[axis];
                axis += 1;
            }
        }
    };

    for &t in &order {
        let mut spent = 0;
        while !reached[t] && spent < plan.per_target && tree.birth.len() < config.max_segments {
            let Some(id) = pending.nearest_reachable(&plan.targets[t], horizon, plan.cover, cell) else {
                break;
            };
            expand(id, &mut tree, &mut pending, &mut reached, rng);
            spent += 1;
        }
        if reached[t] {
            tree.targets_reached += 1;
        } else {
            tree.targets_abandoned += 1;
        }
    }
    tree.pending = pending.live;
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ball_lattice;
    use crate::rng::stream;

    fn plan(targets: Vec<Vec<f64>>, cover: f64) -> TargetPlan {
        TargetPlan { targets, cover, per_target: 10_000, cell: 0.05 }
    }

    #[test]
    fn without_targets_only_nothing_is_grown() {
        let t = grow_toward(&SimConfig::new(2, 5.0, 1.0), &plan(vec![], 0.1), &mut stream(1)).unwrap();
        assert_eq!(t.segment_count(), 0);
        assert_eq!(t.pending, 1);
    }

    #[test]
    fn grown_part_is_a_connected_subtree() {
        let cfg = SimConfig::new(2, 20.0, 1.0);
        let targets = ball_lattice(&[0.0, 0.0], 0.4, 0.1);
        let t = grow_toward(&cfg, &plan(targets, 0.05), &mut stream(4)).unwrap();
        assert!(t.segment_count() > 1);
        assert_eq!(t.parent(0), None);
        for i in 1..t.segment_count() {
            let p = t.parent(i).expect("only the root lacks a parent");
            assert!(p < i);
            assert!(distance(t.segment(p).end, t.segment(i).start) < 1e-12);
            let child = t.segment(i);
            assert!((child.birth_time - (t.segment(p).birth_time + t.segment(p).length())).abs() < 1e-12);
        }
        for s in t.segments() {
            assert!(s.birth_time + s.length() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn reached_targets_are_within_cover() {
        let cfg = SimConfig::new(2, 30.0, 1.0);
        let targets = ball_lattice(&[0.0, 0.0], 0.35, 0.05);
        let t = grow_toward(&cfg, &plan(targets.clone(), 0.02), &mut stream(9)).unwrap();
        let within =
            targets.iter().filter(|x| t.segments().any(|s| distance_to_segment(x, s.start, s.end) <= 0.02)).count();
        assert_eq!(within, t.targets_reached);
        assert!(t.targets_reached > targets.len() / 2, "{} of {}", t.targets_reached, targets.len());
    }

    #[test]
    fn unreachable_targets_grow_nothing() {
        let cfg = SimConfig::new(2, 2.0, 1.0);
        let t = grow_toward(&cfg, &plan(vec![vec![5.0, 0.0]], 0.01), &mut stream(2)).unwrap();
        assert_eq!(t.segment_count(), 0);
        assert_eq!(t.targets_abandoned, 1);
    }

    #[test]
    fn budget_caps_growth() {
        let cfg = SimConfig::new(2, 50.0, 1.0).with_max_segments(500);
        let targets = ball_lattice(&[0.0, 0.0], 0.4, 0.02);
        let t = grow_toward(&cfg, &plan(targets, 0.001), &mut stream(5)).unwrap();
        assert_eq!(t.segment_count(), 500);
        assert!(t.pending > 0);
    }

    #[test]
    fn rate_zero_is_one_segment() {
        let cfg = SimConfig::new(2, 0.0, 1.0);
        let t = grow_toward(&cfg, &plan(vec![vec![0.3, 0.3]], 0.01), &mut stream(3)).unwrap();
        assert_eq!(t.segment_count(), 1);
        assert!(t.is_complete());
        assert!((t.segment(0).length() - 1.0).abs() < 1e-12);
    }
}
