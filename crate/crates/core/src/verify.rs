//! Empirical decay constants of dyadic measures.
//!
//! Ball masses come from dyadic covers: `B(x, r)` is replaced by the
//! occupied cubes of side `2^-n'` (with `2^(-n'-1) < r <= 2^-n'`) that meet it,
//! at most `3^d` of them. Reported constants therefore absorb the covering
//! multiplicity; for the uniform measure on an interval the ratio
//! `mass / r` reaches up to `3 * 2^-n' / r < 6`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::cube::DyadicCube;
use crate::frostman::{construct, EqualityCover, FrostmanError, FrostmanParams};
use crate::measure::DyadicMeasure;
use crate::tree::OccupancyTree;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("radius {r} is below the grid resolution; the smallest admissible radius is {min}")]
    Radius { r: f64, min: f64 },
    #[error("point {0:?} lies outside the unit cube")]
    Point(Vec<f64>),
    #[error("{0}")]
    Sampling(String),
    #[error("parameters do not match the measure: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Frostman(#[from] FrostmanError),
}

/// Level whose cubes stand in for balls of radius `r`.
pub fn ball_level(r: f64) -> i64 {
    (-r.log2()).floor().max(0.0) as i64
}

/// Mass of the occupied level-`n'` cubes meeting the open ball `B(x, r)`.
pub fn ball_mass(measure: &dyn DyadicMeasure, x: &[f64], r: f64) -> Result<f64, VerifyError> {
    let tree = measure.tree();
    let min = (-(tree.max_level() as f64)).exp2();
    if r.is_nan() || r < min {
        return Err(VerifyError::Radius { r, min });
    }
    let dim = tree.dim();
    if x.len() != dim || x.iter().any(|c| !(0.0..=1.0).contains(c)) {
        return Err(VerifyError::Point(x.to_vec()));
    }
    let level = ball_level(r) as u32;
    let side = (-(level as f64)).exp2();
    let top = (1u64 << level) - 1;
    let center: Vec<u64> = x.iter().map(|&c| ((c / side).floor() as u64).min(top)).collect();
    let mut total = 0.0;
    let mut index = vec![0u64; dim];
    'offsets: for combo in 0..3usize.pow(dim as u32) {
        let mut rest = combo;
        let mut dist2 = 0.0;
        for axis in 0..dim {
            let k = center[axis] as i64 + (rest % 3) as i64 - 1;
            rest /= 3;
            if k < 0 || k > top as i64 {
                continue 'offsets;
            }
            index[axis] = k as u64;
            let lo = k as f64 * side;
            let hi = lo + side;
            let gap = (lo - x[axis]).max(x[axis] - hi).max(0.0);
            dist2 += gap * gap;
        }
        if dist2 < r * r {
            let q = DyadicCube::from_index(level, &index).expect("index in range");
            total += measure.mass(&q);
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `r < delta^(1/theta)`, bound shape `(delta^(1/theta))^(t-s) r^s`.
    Fine,
    /// `delta^(1/theta) <= r <= delta`, bound shape `r^t`.
    Mid,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Fine => "fine",
            Regime::Mid => "mid",
        }
    }

    pub fn shape(&self, params: &FrostmanParams, r: f64) -> f64 {
        match self {
            Regime::Fine => params.fine_scale().powf(params.t - params.s) * r.powf(params.s),
            Regime::Mid => r.powf(params.t),
        }
    }

    /// Sampled radii: log-spaced over `[fine, delta]` for the middle regime
    /// and over `[2^(1-n_max), fine)` below it.
    pub fn radii(&self, params: &FrostmanParams, max_level: u32, count: usize) -> Vec<f64> {
        let fine = params.fine_scale();
        match self {
            Regime::Mid => log_grid(fine, params.delta, count, true),
            Regime::Fine => {
                let lo = (1.0 - max_level as f64).exp2();
                if lo >= fine {
                    Vec::new()
                } else {
                    log_grid(lo, fine, count, false)
                }
            }
        }
    }
}

fn log_grid(lo: f64, hi: f64, count: usize, inclusive: bool) -> Vec<f64> {
    if count == 0 {
        return Vec::new();
    }
    if count == 1 || lo >= hi {
        return vec![lo];
    }
    let steps = if inclusive { count - 1 } else { count } as f64;
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| if inclusive && i == count - 1 { hi } else { (a + (b - a) * i as f64 / steps).exp() })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub x: Vec<f64>,
    pub r: f64,
    pub mass: f64,
    pub bound: f64,
}

impl Witness {
    pub fn ratio(&self) -> f64 {
        self.mass / self.bound
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeReport {
    pub regime: Regime,
    pub samples: usize,
    /// Largest `mass / shape(r)` over the samples; 0 without samples.
    pub constant: f64,
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    pub params: FrostmanParams,
    pub total: f64,
    pub fine: RegimeReport,
    pub mid: RegimeReport,
}

impl DecayReport {
    /// Both empirical constants are at most `c`.
    pub fn passes(&self, c: f64) -> bool {
        self.fine.constant <= c && self.mid.constant <= c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sampling {
    /// Radii per regime.
    pub radii: usize,
    /// Random occupied leaves added to the cover-cube centers.
    pub random_centers: usize,
    /// Cover cubes used as centers, spread evenly over the cover.
    pub max_cover_centers: usize,
    pub seed: u64,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling { radii: 16, random_centers: 64, max_cover_centers: 4096, seed: 0 }
    }
}

/// Centers of sample balls: the centers of the first occupied leaf under each
/// (sampled) cover cube, then of random leaves reached by uniform descent
/// through occupied children.
pub fn sample_centers(tree: &OccupancyTree, cover: &EqualityCover, sampling: &Sampling) -> Vec<Vec<f64>> {
    let mut leaves = Vec::new();
    let total = cover.len();
    let take = (sampling.max_cover_centers as u128).min(total);
    if let Some(stride) = total.checked_div(take) {
        let mut picked = 0u128;
        let mut index = 0u128;
        for block in &cover.blocks {
            let end = index + block.count;
            while picked < take && picked * stride < end {
                let offset = (picked * stride - index) as u64;
                let shift = block.root.dim() as u32 * (block.level - block.root.level());
                let code = (block.root.code() << shift) + offset;
                let q = DyadicCube::from_code(block.root.dim(), block.level, code);
                leaves.push(tree.first_leaf(&q).expect("cover cubes are occupied"));
                picked += 1;
            }
            index = end;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    for _ in 0..sampling.random_centers {
        let mut q = tree.root();
        while q.level() < tree.max_level() {
            let kids = tree.occupied_children(&q).expect("occupied above max level");
            q = kids[rng.gen_range(0..kids.len())];
        }
        leaves.push(q);
    }
    leaves.iter().map(DyadicCube::center).collect()
}

fn regime_report(
    measure: &dyn DyadicMeasure,
    params: &FrostmanParams,
    regime: Regime,
    centers: &[Vec<f64>],
    radii: &[f64],
) -> Result<RegimeReport, VerifyError> {
    let jobs: Vec<(usize, f64)> = (0..centers.len()).flat_map(|c| radii.iter().map(move |&r| (c, r))).collect();
    let evaluated: Vec<(usize, f64, f64, f64)> = jobs
        .par_iter()
        .map(|&(c, r)| {
            let mass = ball_mass(measure, &centers[c], r)?;
            Ok((c, r, mass, regime.shape(params, r)))
        })
        .collect::<Result<_, VerifyError>>()?;
    let mut best: Option<&(usize, f64, f64, f64)> = None;
    for e in &evaluated {
        if best.is_none_or(|b| e.2 / e.3 > b.2 / b.3) {
            best = Some(e);
        }
    }
    let witness = best.map(|&(c, r, mass, bound)| Witness { x: centers[c].clone(), r, mass, bound });
    Ok(RegimeReport {
        regime,
        samples: evaluated.len(),
        constant: witness.as_ref().map_or(0.0, Witness::ratio),
        witness,
    })
}

/// Empirical constants of `measure` in the fine and middle regimes.
pub fn decay_report(
    measure: &dyn DyadicMeasure,
    params: &FrostmanParams,
    cover: &EqualityCover,
    total: f64,
    sampling: &Sampling,
) -> Result<DecayReport, VerifyError> {
    let tree = measure.tree();
    if params.dim != tree.dim() || params.m > tree.max_level() {
        return Err(VerifyError::Mismatch(format!(
            "params for d = {}, m = {} against a d = {} tree of depth {}",
            params.dim,
            params.m,
            tree.dim(),
            tree.max_level()
        )));
    }
    let centers = sample_centers(tree, cover, sampling);
    if centers.is_empty() || sampling.radii == 0 {
        return Err(VerifyError::Sampling("no sample balls: need centers and radii".into()));
    }
    let fine_r = Regime::Fine.radii(params, tree.max_level(), sampling.radii);
    let mid_r = Regime::Mid.radii(params, tree.max_level(), sampling.radii);
    Ok(DecayReport {
        params: params.clone(),
        total,
        fine: regime_report(measure, params, Regime::Fine, &centers, &fine_r)?,
        mid: regime_report(measure, params, Regime::Mid, &centers, &mid_r)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRow {
    pub delta: f64,
    pub m: u32,
    pub top: u32,
    pub total: f64,
    pub cover_size: u128,
    pub fine: f64,
    pub mid: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub theta: f64,
    pub s: f64,
    pub t: f64,
    pub rows: Vec<StabilityRow>,
    /// Max over min of the constants across the grid (rows with samples).
    pub fine_ratio: f64,
    pub mid_ratio: f64,
    /// Least-squares slope of `ln constant` against `ln(1/delta)`.
    pub fine_trend: f64,
    pub mid_trend: f64,
    pub min_total: f64,
    /// `T` at the coarsest delta over `T` at the finest.
    pub total_drop: f64,
    /// `T` fell by a factor of at least 10 across the grid: the covers' mass
    /// is vanishing, so `t` exceeds the set's dimension at these scales.
    pub premise_failed: bool,
    /// `mid constant * T` relative to its value at the first delta.
    pub scaled_mid_ratio: f64,
}

fn ratio(values: &[f64]) -> f64 {
    let v: Vec<f64> = values.iter().copied().filter(|&x| x > 0.0).collect();
    if v.is_empty() {
        return 1.0;
    }
    v.iter().copied().fold(0.0, f64::max) / v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn trend(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).filter(|p| *p.1 > 0.0).map(|(&x, &y)| (x, y.ln())).collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let k = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (k * sxy - sx * sy) / (k * sxx - sx * sx)
}

/// Constructs the measure for each `delta` and collects both constants.
pub fn constant_stability(
    tree: Arc<OccupancyTree>,
    theta: f64,
    s: f64,
    t: f64,
    deltas: &[f64],
    sampling: &Sampling,
) -> Result<StabilityReport, VerifyError> {
    if deltas.len() < 4 {
        return Err(VerifyError::Sampling(format!("stability needs at least 4 delta values, got {}", deltas.len())));
    }
    let mut rows = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let c = construct(tree.clone(), theta, delta, s, t)?;
        let report = decay_report(&c.measure, &c.params, &c.cover, c.total, sampling)?;
        rows.push(StabilityRow {
            delta,
            m: c.params.m,
            top: c.params.top,
            total: c.total,
            cover_size: c.cover.len(),
            fine: report.fine.constant,
            mid: report.mid.constant,
        });
    }
    let fine: Vec<f64> = rows.iter().map(|r| r.fine).collect();
    let mid: Vec<f64> = rows.iter().map(|r| r.mid).collect();
    let logs: Vec<f64> = rows.iter().map(|r| (1.0 / r.delta).ln()).collect();
    let totals: Vec<f64> = rows.iter().map(|r| r.total).collect();
    let coarsest = rows.iter().max_by(|a, b| a.delta.total_cmp(&b.delta)).unwrap();
    let finest = rows.iter().min_by(|a, b| a.delta.total_cmp(&b.delta)).unwrap();
    let total_drop = coarsest.total / finest.total;
    let scaled: Vec<f64> = rows.iter().map(|r| r.mid * r.total).collect();
    Ok(StabilityReport {
        theta,
        s,
        t,
        fine_ratio: ratio(&fine),
        mid_ratio: ratio(&mid),
        fine_trend: trend(&logs, &fine),
        mid_trend: trend(&logs, &mid),
        min_total: totals.iter().copied().fold(f64::INFINITY, f64::min),
        total_drop,
        premise_failed: total_drop >= 10.0,
        scaled_mid_ratio: scaled.iter().copied().fold(0.0, f64::max) / scaled[0],
        rows,
    })
}
