//! Central finite-difference gradient checking.
//!
//! The relative error of one coordinate is
//! `|a - n| / max(|a|, |n|, REL_FLOOR)` for analytic value `a` and numeric
//! value `n`; the floor keeps coordinates with vanishing gradients from
//! dividing rounding noise by zero.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::params::{Grads, ParamId, ParamStore};

pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coord {
    pub param: ParamId,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordCheck {
    pub coord: Coord,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checks: Vec<CoordCheck>,
    pub max_rel_error: f64,
    /// Names of the parameters that had at least one coordinate checked.
    pub params: BTreeSet<String>,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&CoordCheck> {
        self.checks.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares `analytic` with central differences of `f` at step `eps`.
/// `store` is perturbed in place and restored exactly.
pub fn grad_check(store: &mut ParamStore, analytic: &Grads, coords: &[Coord], eps: f64, f: impl Fn(&ParamStore) -> f64) -> GradCheckReport {
    let mut checks = Vec::with_capacity(coords.len());
    let mut params = BTreeSet::new();
    for &coord in coords {
        let idx = [coord.row, coord.col];
        let orig = store.value(coord.param)[idx];
        store.value_mut(coord.param)[idx] = orig + eps;
        let plus = f(store);
        store.value_mut(coord.param)[idx] = orig - eps;
        let minus = f(store);
        store.value_mut(coord.param)[idx] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic.entry(coord.param, coord.row, coord.col);
        params.insert(store.name(coord.param).to_string());
        checks.push(CoordCheck {
            coord,
            analytic: a,
            numeric,
            rel_error: relative_error(a, numeric),
        });
    }
    let max_rel_error = checks.iter().map(|c| c.rel_error).fold(0.0, f64::max);
    GradCheckReport { checks, max_rel_error, params }
}

/// At least one coordinate of every parameter, then random ones up to
/// `total`. Coordinates are drawn from entries with a nonzero analytic
/// gradient when a parameter has any, so embedding tables are probed on the
/// rows the sample actually uses.
pub fn sample_coords<R: Rng>(store: &ParamStore, analytic: &Grads, total: usize, rng: &mut R) -> Vec<Coord> {
    let pools: Vec<Vec<Coord>> = store
        .ids()
        .map(|param| {
            let (r, c) = store.value(param).dim();
            let all: Vec<Coord> = (0..r).flat_map(|row| (0..c).map(move |col| Coord { param, row, col })).collect();
            let live: Vec<Coord> = all.iter().copied().filter(|k| analytic.entry(k.param, k.row, k.col) != 0.0).collect();
            if live.is_empty() {
                all
            } else {
                live
            }
        })
        .filter(|p| !p.is_empty())
        .collect();
    let mut coords: Vec<Coord> = pools.iter().map(|p| *p.choose(rng).expect("non-empty pool")).collect();
    while coords.len() < total {
        let pool = pools.choose(rng).expect("at least one parameter");
        coords.push(*pool.choose(rng).expect("non-empty pool"));
    }
    coords
}
