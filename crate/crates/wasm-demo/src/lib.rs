//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each export has a plain Rust counterpart so it can be tested natively.

use wasm_bindgen::prelude::*;
use yule_core::branch::grow_branch;
use yule_core::fe::{self, FeParams};
use yule_core::rng::{child_seed, stream};
use yule_core::tree::{self, radius};
use yule_core::SimConfig;

/// Keeps a single call responsive in the browser.
pub const MAX_SEGMENTS: usize = 200_000;

/// A planar tree as `[radius, leaf_count, x0, y0, x1, y1, ...]`, one
/// quadruple per segment.
pub fn tree_coords(rate: f64, horizon: f64, seed: u64) -> Result<Vec<f64>, String> {
    let config = SimConfig::new(2, rate, horizon).with_max_segments(MAX_SEGMENTS);
    let tree = tree::grow(&config, &mut stream(child_seed(seed, 0))).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(2 + tree.flat_coords().len());
    out.push(radius(&tree));
    out.push(tree.leaf_count() as f64);
    out.extend_from_slice(tree.flat_coords());
    Ok(out)
}

/// Vertices of a planar branch as `[x, y, x, y, ...]`.
pub fn branch_coords(rate: f64, horizon: f64, seed: u64) -> Result<Vec<f64>, String> {
    let path = grow_branch(rate, horizon, 2, &mut stream(child_seed(seed, 0))).map_err(|e| e.to_string())?;
    Ok(path.vertices().into_iter().flat_map(|p| p.into_inner()).collect())
}

/// Miss probability grid as `[nt, nd, step, q(0,0), q(0,1), ...]`, time-major.
pub fn fe_grid(rate: f64, r: f64, t_max: f64, step: f64) -> Result<Vec<f64>, String> {
    let grid = fe::solve(FeParams::square(rate, r, t_max, step).with_orders(16, 16)).map_err(|e| e.to_string())?;
    let mut out = vec![grid.nt() as f64, grid.nd() as f64, step];
    out.extend(grid.rows().map(|(_, _, q)| q));
    Ok(out)
}

#[wasm_bindgen]
pub fn grow_tree(rate: f64, horizon: f64, seed: u32) -> Result<Vec<f64>, JsError> {
    tree_coords(rate, horizon, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn branch_path(rate: f64, horizon: f64, seed: u32) -> Result<Vec<f64>, JsError> {
    branch_coords(rate, horizon, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn solve_fe(rate: f64, r: f64, t_max: f64, step: f64) -> Result<Vec<f64>, JsError> {
    fe_grid(rate, r, t_max, step).map_err(|e| JsError::new(&e))
}
