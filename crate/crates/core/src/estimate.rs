//! Dimension estimators over an occupancy tree: dyadic dimension, box
//! counting, lower dimension, and the intermediate spectrum by restricted
//! cover optimization.
//!
//! Cubes of level `n` have diameter `sqrt(d) * 2^-n`; conversions between
//! scales and levels carry the `sqrt(d)` explicitly.

use rayon::prelude::*;
use thiserror::Error;

use crate::cube::DyadicCube;
use crate::tree::OccupancyTree;
use crate::weight::Weight;

pub const DEFAULT_BURN_IN: u32 = 4;

/// Absolute tolerance of the exponent bisection.
pub const BISECTION_TOL: f64 = 1e-6;

/// Levels per layer above which per-level work is split across threads.
const PAR_THRESHOLD: usize = 4096;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimateError {
    #[error("burn-in {burn_in} leaves no levels below max level {max_level}")]
    BurnIn { burn_in: u32, max_level: u32 },
    #[error("fit range {lo}..={hi} is invalid for max level {max_level} (need at least 3 levels)")]
    FitRange { lo: u32, hi: u32, max_level: u32 },
    #[error("empty level window")]
    EmptyWindow,
    #[error("level pair ({a}, {b}) is invalid for max level {max_level}")]
    BadPair { a: u32, b: u32, max_level: u32 },
    #[error(
        "theta = {theta}, delta = {delta} needs cover levels {a}..={b}, beyond max level {max_level}; \
         realize the set with n_max >= {b}"
    )]
    Infeasible { theta: f64, delta: f64, a: i64, b: i64, max_level: u32 },
    #[error("{0}")]
    Parameter(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelCounts {
    pub dim: usize,
    pub max_level: u32,
    /// `M_n`, occupied cubes per level, `n = 0..=max_level`.
    pub occupied: Vec<u128>,
    /// `N_n`, minimum occupied-children count per level, `n < max_level`.
    pub min_branching: Vec<u32>,
}

pub fn level_counts(tree: &OccupancyTree) -> LevelCounts {
    let arity = tree.arity();
    let occupied = (0..=tree.max_level()).map(|n| tree.occupied_count(n)).collect();
    let min_branching = (0..tree.max_level())
        .map(|n| {
            let lv = &tree.levels[n as usize];
            lv.branching.iter().map(|&b| b as u32).min().unwrap_or(arity).min(arity)
        })
        .collect();
    LevelCounts { dim: tree.dim(), max_level: tree.max_level(), occupied, min_branching }
}

/// `log2` that is exact on powers of two.
pub fn log2_exact(x: u128) -> f64 {
    if x.is_power_of_two() {
        x.trailing_zeros() as f64
    } else {
        (x as f64).log2()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DyadicDimension {
    /// Minimum of `log2 N_n` over `burn_in..max_level`.
    pub estimate: f64,
    /// Level attaining the minimum.
    pub level: u32,
    pub burn_in: u32,
    /// `log2 N_n` for every `n < max_level`.
    pub trace: Vec<f64>,
}

pub fn dyadic_dimension(counts: &LevelCounts, burn_in: u32) -> Result<DyadicDimension, EstimateError> {
    if burn_in + 1 >= counts.max_level {
        return Err(EstimateError::BurnIn { burn_in, max_level: counts.max_level });
    }
    let trace: Vec<f64> = counts.min_branching.iter().map(|&b| log2_exact(b as u128)).collect();
    let (level, estimate) = (burn_in..counts.max_level)
        .map(|n| (n, trace[n as usize]))
        .fold((burn_in, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
    Ok(DyadicDimension { estimate, level, burn_in, trace })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of `log2 M_n` about the fitted line.
    pub residual: f64,
    pub lo: u32,
    pub hi: u32,
}

/// Least-squares slope of `log2 M_n` against `n` over `lo..=hi`.
pub fn box_dimension(counts: &LevelCounts, lo: u32, hi: u32) -> Result<BoxFit, EstimateError> {
    if hi > counts.max_level || hi < lo + 2 {
        return Err(EstimateError::FitRange { lo, hi, max_level: counts.max_level });
    }
    let xs: Vec<f64> = (lo..=hi).map(|n| n as f64).collect();
    let ys: Vec<f64> = (lo..=hi).map(|n| log2_exact(counts.occupied[n as usize])).collect();
    let k = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
    let intercept = (sy - slope * sx) / k;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    Ok(BoxFit { slope, intercept, residual: (sse / k).sqrt(), lo, hi })
}

/// Default box-counting fit: `burn_in..=max_level`, widened downward if
/// the tree is too shallow.
pub fn default_box_range(max_level: u32, burn_in: u32) -> (u32, u32) {
    let lo = burn_in.min(max_level.saturating_sub(2));
    (lo, max_level)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSlope {
    pub a: u32,
    pub b: u32,
    /// Minimum number of occupied level-`b` descendants of an occupied
    /// level-`a` cube.
    pub min_descendants: u128,
    pub slope: f64,
    pub witness: DyadicCube,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerDimension {
    pub estimate: f64,
    pub witness: DyadicCube,
    pub a: u32,
    pub b: u32,
    pub pairs: Vec<PairSlope>,
}

/// Default window: all pairs `a < b` from the lattice
/// `burn_in, burn_in + 2, ...` up to `max_level`.
///
/// The even step keeps sets built from base-4 digits (or any
/// two-bits-per-digit structure) aligned with their self-similarity; pairs at
/// odd offsets see the half-digit phase and bias the slope by `O(1/gap)`.
pub fn default_window(max_level: u32, burn_in: u32) -> Vec<(u32, u32)> {
    let start = burn_in.min(max_level.saturating_sub(1));
    let lattice: Vec<u32> = (start..=max_level).step_by(2).collect();
    let mut pairs = Vec::new();
    for (i, &a) in lattice.iter().enumerate() {
        for &b in &lattice[i + 1..] {
            pairs.push((a, b));
        }
    }
    if pairs.is_empty() && start < max_level {
        pairs.push((start, max_level));
    }
    pairs
}

/// Occupied level-`b` descendants of every explicitly stored cube at levels
/// `0..=b`.
fn descendant_counts(tree: &OccupancyTree, b: u32) -> Vec<Vec<u128>> {
    let d = tree.dim() as u32;
    let mut out: Vec<Vec<u128>> = vec![Vec::new(); b as usize + 1];
    out[b as usize] = vec![1; tree.explicit_count(b)];
    for j in (0..b).rev() {
        let lv = &tree.levels[j as usize];
        let below = &out[j as usize + 1];
        let full_count = 1u128 << (d * (b - j));
        out[j as usize] = (0..lv.codes.len())
            .map(|i| {
                if lv.full[i] {
                    full_count
                } else {
                    let span = lv.child_start[i] as usize..lv.child_start[i + 1] as usize;
                    below[span].iter().sum()
                }
            })
            .collect();
    }
    out
}

pub fn lower_dimension(tree: &OccupancyTree, window: &[(u32, u32)]) -> Result<LowerDimension, EstimateError> {
    if window.is_empty() {
        return Err(EstimateError::EmptyWindow);
    }
    let n_max = tree.max_level();
    for &(a, b) in window {
        if a >= b || b > n_max {
            return Err(EstimateError::BadPair { a, b, max_level: n_max });
        }
    }
    let d = tree.dim() as u32;
    let mut bs: Vec<u32> = window.iter().map(|p| p.1).collect();
    bs.sort_unstable();
    bs.dedup();
    let mut pairs = Vec::with_capacity(window.len());
    let by_b: Vec<(u32, Vec<Vec<u128>>)> = bs.par_iter().map(|&b| (b, descendant_counts(tree, b))).collect();
    for &(a, b) in window {
        let counts = &by_b.iter().find(|x| x.0 == b).unwrap().1;
        let lv = &tree.levels[a as usize];
        let mut best: Option<(u128, DyadicCube)> = None;
        for (i, &m) in counts[a as usize].iter().enumerate() {
            if best.as_ref().is_none_or(|x| m < x.0) {
                best = Some((m, DyadicCube::from_code(tree.dim(), a, lv.codes[i])));
            }
        }
        if tree.interior_count(a) > 0 {
            let m = 1u128 << (d * (b - a));
            if best.as_ref().is_none_or(|x| m < x.0) {
                let q = tree.occupied_cubes(a).find(|q| !lv.codes.contains(&q.code())).expect("interior cube exists");
                best = Some((m, q));
            }
        }
        let (m, witness) = best.expect("every level has an occupied cube");
        pairs.push(PairSlope { a, b, min_descendants: m, slope: log2_exact(m) / (b - a) as f64, witness });
    }
    let best = pairs.iter().fold(&pairs[0], |acc, p| if p.slope < acc.slope { p } else { acc });
    Ok(LowerDimension { estimate: best.slope, witness: best.witness, a: best.a, b: best.b, pairs: pairs.clone() })
}

/// Minimal `sum |U|^s` over covers of the occupied set by occupied dyadic
/// cubes with levels in `a..=b`, where `|U| = sqrt(d) 2^-level`.
pub fn cover_cost(tree: &OccupancyTree, s: f64, a: u32, b: u32) -> Result<f64, EstimateError> {
    check_range(tree, a, b)?;
    if s.is_nan() || s < 0.0 {
        return Err(EstimateError::Parameter(format!("exponent s = {s} must be non-negative")));
    }
    let scaled: f64 = cover_cost_unscaled(tree, s, a, b);
    Ok((tree.dim() as f64).powf(s / 2.0) * scaled)
}

fn check_range(tree: &OccupancyTree, a: u32, b: u32) -> Result<(), EstimateError> {
    if a > b || b > tree.max_level() {
        return Err(EstimateError::BadPair { a, b, max_level: tree.max_level() });
    }
    Ok(())
}

/// The cover optimum with unit costs `2^(-level s)`. The common factor
/// `d^(s/2)` of all cube costs does not change which cover is optimal.
///
/// Recurrence: `cost(Q) = w(b)` at level `b`, otherwise
/// `min(w(level Q), sum over occupied children)`; full cubes use the closed
/// form `F(b) = w(b)`, `F(k) = min(w(k), 2^d F(k + 1))`.
pub fn cover_cost_unscaled<W: Weight>(tree: &OccupancyTree, s: f64, a: u32, b: u32) -> W {
    let arity = tree.arity() as u128;
    let unit: Vec<W> = (0..=b).map(|j| W::dyadic_power(j, s)).collect();
    let mut full: Vec<W> = vec![W::zero(); b as usize + 1];
    full[b as usize] = unit[b as usize].clone();
    for k in (a..b).rev() {
        full[k as usize] = unit[k as usize].clone().min_of(full[k as usize + 1].times(arity));
    }
    let mut below: Vec<W> = vec![unit[b as usize].clone(); tree.explicit_count(b)];
    for j in (a..b).rev() {
        let lv = &tree.levels[j as usize];
        let w = &unit[j as usize];
        let f = &full[j as usize];
        let cost = |i: usize| -> W {
            if lv.full[i] {
                return f.clone();
            }
            let span = lv.child_start[i] as usize..lv.child_start[i + 1] as usize;
            let sum = below[span].iter().fold(W::zero(), |acc, c| acc.add(c));
            w.clone().min_of(sum)
        };
        below = if lv.codes.len() > PAR_THRESHOLD {
            (0..lv.codes.len()).into_par_iter().map(cost).collect()
        } else {
            (0..lv.codes.len()).map(cost).collect()
        };
    }
    let explicit = below.iter().fold(W::zero(), |acc, c| acc.add(c));
    explicit.add(&full[a as usize].times(tree.interior_count(a)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleEstimate {
    pub theta: f64,
    pub delta: f64,
    pub a: u32,
    pub b: u32,
    /// The exponent where the optimal restricted cover costs 1.
    pub s: f64,
    /// Bisection bracket and the cover costs at its ends.
    pub s_lo: f64,
    pub s_hi: f64,
    pub cost_lo: f64,
    pub cost_hi: f64,
}

/// Rounds a level, breaking exact halves upward regardless of float noise.
fn round_level(x: f64) -> i64 {
    (x + 1e-9).round() as i64
}

/// Cover levels for scale `delta` and `theta`: `a` matches diameter `delta`,
/// `b` matches `delta^(1/theta)`.
pub fn scale_levels(dim: usize, theta: f64, delta: f64) -> (i64, i64) {
    let half_log_d = 0.5 * (dim as f64).log2();
    let a = round_level(half_log_d - delta.log2());
    let b = round_level(half_log_d - delta.log2() / theta);
    (a, b)
}

fn check_theta_delta(theta: f64, delta: f64) -> Result<(), EstimateError> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(EstimateError::Parameter(format!("theta = {theta} must lie in (0,1]")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(EstimateError::Parameter(format!("delta = {delta} must lie in (0,1)")));
    }
    Ok(())
}

pub fn intermediate_dim_at_scale(tree: &OccupancyTree, theta: f64, delta: f64) -> Result<ScaleEstimate, EstimateError> {
    check_theta_delta(theta, delta)?;
    let (a, b) = scale_levels(tree.dim(), theta, delta);
    if a < 0 || b > tree.max_level() as i64 {
        return Err(EstimateError::Infeasible { theta, delta, a, b, max_level: tree.max_level() });
    }
    let (a, b) = (a as u32, b as u32);
    let cost = |s: f64| cover_cost(tree, s, a, b).expect("range checked");
    let d = tree.dim() as f64;
    let done = |s, s_lo, s_hi, cost_lo, cost_hi| ScaleEstimate { theta, delta, a, b, s, s_lo, s_hi, cost_lo, cost_hi };
    let c0 = cost(0.0);
    if c0 <= 1.0 {
        return Ok(done(0.0, 0.0, 0.0, c0, c0));
    }
    let cd = cost(d);
    if cd >= 1.0 {
        return Ok(done(d, d, d, cd, cd));
    }
    let (mut lo, mut hi, mut clo, mut chi) = (0.0, d, c0, cd);
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        let c = cost(mid);
        if c > 1.0 {
            lo = mid;
            clo = c;
        } else {
            hi = mid;
            chi = c;
        }
    }
    Ok(done(0.5 * (lo + hi), lo, hi, clo, chi))
}

/// Smallest `delta` (finest scale) whose cover range still fits in the tree
/// for this `theta`.
pub fn finest_feasible_delta(dim: usize, max_level: u32, theta: f64) -> f64 {
    let diam = crate::cube::diameter(dim, max_level);
    let mut delta = diam.powf(theta);
    while scale_levels(dim, theta, delta).1 > max_level as i64 {
        delta *= 1.0 + 1e-12;
    }
    delta
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaSummary {
    pub theta: f64,
    /// Minimum over the finest half of the delta grid.
    pub lower: f64,
    /// Maximum over the finest half of the delta grid.
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimensionProfile {
    /// Row-major over `(theta, delta)` in input order.
    pub entries: Vec<ScaleEstimate>,
    pub summaries: Vec<ThetaSummary>,
}

pub fn intermediate_profile(tree: &OccupancyTree, thetas: &[f64], deltas: &[f64]) -> Result<DimensionProfile, EstimateError> {
    if thetas.is_empty() || deltas.is_empty() {
        return Err(EstimateError::Parameter("theta and delta grids must be nonempty".into()));
    }
    let jobs: Vec<(f64, f64)> = thetas.iter().flat_map(|&t| deltas.iter().map(move |&d| (t, d))).collect();
    let entries: Vec<ScaleEstimate> = jobs
        .par_iter()
        .map(|&(t, d)| intermediate_dim_at_scale(tree, t, d))
        .collect::<Result<_, _>>()?;
    let mut order: Vec<usize> = (0..deltas.len()).collect();
    order.sort_by(|&i, &j| deltas[i].total_cmp(&deltas[j]));
    let finest = &order[..deltas.len().div_ceil(2)];
    let summaries = thetas
        .iter()
        .enumerate()
        .map(|(ti, &theta)| {
            let row = &entries[ti * deltas.len()..(ti + 1) * deltas.len()];
            let vals = finest.iter().map(|&j| row[j].s);
            ThetaSummary {
                theta,
                lower: vals.clone().fold(f64::INFINITY, f64::min),
                upper: vals.fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();
    Ok(DimensionProfile { entries, summaries })
}
