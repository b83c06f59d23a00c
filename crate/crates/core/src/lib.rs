//! Spatial Yule trees: a tree growing at unit speed from the origin of R^D
//! whose tips split in two at rate λ, each new tip heading off in a fresh
//! uniformly random direction.
//!
//! The crate is organised in layers that check one another:
//!
//! * [`tree`] and [`branch`] sample trees and single root-to-leaf branches
//!   exactly in distribution;
//! * [`analytic`] evaluates the closed forms and explicit bounds known for
//!   the model (leaf-count law, length MGF, radius lower bounds, ...);
//! * [`fe`] solves the two-dimensional functional equation satisfied by the
//!   miss probability `q_r^λ(t, d)` by explicit time marching;
//! * [`stats`], [`experiment`] and [`acceptance`] tie the three together
//!   with Kolmogorov–Smirnov, chi-square and binomial checks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod analytic;
pub mod branch;
pub mod experiment;
pub mod explore;
pub mod fe;
pub mod geometry;
pub mod rng;
pub mod stats;
pub mod tree;

pub use geometry::{Point, Segment};
pub use tree::{SimConfig, Tree, TrialSummary};
