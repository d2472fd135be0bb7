//! Constructive `(delta, s, t)`-Frostman measures by the dyadic mass cascade.
//!
//! Starting from mass `2^-mt` on every occupied level-`m` cube, the cascade
//! walks towards the coarse level `L`. A cube whose aggregated mass exceeds
//! its cap `2^-jt` is capped, and the cap is redistributed below it by
//! uniform splitting among occupied children. Capped or not, every level
//! satisfies `f_j(A) = min(sum of children, 2^-jt)`. The saturated cubes
//! (aggregate at least the cap) that are maximal form the equality cover.

pub mod dump;

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

pub use dump::{read_dump, write_dump_binary, write_dump_text, DumpFormat, DumpHeader, MeasureDump};

use crate::cube::DyadicCube;
use crate::measure::DyadicMeasure;
use crate::tree::{Node, OccupancyTree};
use crate::weight::Weight;

const PAR_THRESHOLD: usize = 4096;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrostmanError {
    #[error("{0}")]
    Parameter(String),
    #[error("s = {s} exceeds t = {t}")]
    SExceedsT { s: f64, t: f64 },
    #[error("theta = {theta}, delta = {delta} needs fine level m = {m}, beyond max level {max_level}; realize the set with n_max >= {m}")]
    TooShallow { theta: f64, delta: f64, m: u32, max_level: u32 },
    #[error("top level L = {top} exceeds fine level m = {m}: delta = {delta} is below the diameter of a level-{m} cube")]
    EmptyRange { top: u32, m: u32, delta: f64 },
    #[error("cube {cube} is below the tree resolution {max_level}")]
    TooDeep { cube: DyadicCube, max_level: u32 },
    #[error("cube has dimension {got}, measure has dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrostmanParams {
    pub theta: f64,
    pub delta: f64,
    pub s: f64,
    pub t: f64,
    pub dim: usize,
    /// Fine level: `2^(-m-1) < delta^(1/theta) <= 2^-m`.
    pub m: u32,
    /// Number of cascade steps, `m - top`.
    pub ell: u32,
    /// Coarse level `L`: smallest with `sqrt(d) 2^-L <= delta`.
    pub top: u32,
}

impl FrostmanParams {
    /// `delta^(1/theta)`.
    pub fn fine_scale(&self) -> f64 {
        self.delta.powf(1.0 / self.theta)
    }

    pub fn cap(&self, level: u32) -> f64 {
        (-(level as f64) * self.t).exp2()
    }
}

pub fn derive_params(theta: f64, delta: f64, s: f64, t: f64, tree: &OccupancyTree) -> Result<FrostmanParams, FrostmanError> {
    let bad = |m: String| Err(FrostmanError::Parameter(m));
    if !(theta > 0.0 && theta <= 1.0) {
        return bad(format!("theta = {theta} must lie in (0,1]"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return bad(format!("delta = {delta} must lie in (0,1)"));
    }
    if !(s > 0.0 && t > 0.0) || !s.is_finite() || !t.is_finite() {
        return bad(format!("s = {s} and t = {t} must be positive"));
    }
    if s > t {
        return Err(FrostmanError::SExceedsT { s, t });
    }
    let dim = tree.dim();
    // The nudges absorb rounding when the defining inequalities hold with
    // equality, as they do for dyadic delta.
    let m = (-delta.log2() / theta + 1e-9).floor();
    if m > tree.max_level() as f64 || m < 0.0 {
        return Err(FrostmanError::TooShallow { theta, delta, m: m.max(0.0) as u32, max_level: tree.max_level() });
    }
    let m = m as u32;
    let top = ((0.5 * (dim as f64).log2() - delta.log2()) - 1e-9).ceil().max(0.0) as u32;
    if top > m {
        return Err(FrostmanError::EmptyRange { top, m, delta });
    }
    Ok(FrostmanParams { theta, delta, s, t, dim, m, ell: m - top, top })
}

#[derive(Debug, Clone)]
struct CascadeLevel<W> {
    f: Vec<W>,
    sat: Vec<bool>,
    capped: Vec<bool>,
}

/// Final value of one cube in the cascade.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeValue<W> {
    /// `f_j`: the capped aggregate at the cube's own level (a plain sum
    /// above level `L`).
    pub f: W,
    /// Aggregate at least the cap (always true at level `m`).
    pub saturated: bool,
    /// Aggregate strictly above the cap: the cap was applied and the mass
    /// below was redistributed.
    pub capped: bool,
}

/// The cascade measure `mu_{m-ell}` over an occupancy tree.
///
/// Values are stored for explicitly stored cubes at levels `0..=m`; cubes
/// inside full regions share per-level values.
#[derive(Debug, Clone)]
pub struct CascadeMeasure<W = f64> {
    tree: Arc<OccupancyTree>,
    params: FrostmanParams,
    levels: Vec<CascadeLevel<W>>,
    full: Vec<CascadeValue<W>>,
    total: W,
}

/// Runs the cascade from level `m` up to level `L`, and continues with plain
/// sums above `L` so that coarse cubes can be queried.
pub fn run_cascade<W: Weight>(tree: Arc<OccupancyTree>, params: &FrostmanParams) -> CascadeMeasure<W> {
    let m = params.m;
    let top = params.top;
    let arity = tree.arity() as u128;
    let caps: Vec<W> = (0..=m).map(|j| W::dyadic_power(j, params.t)).collect();
    let step = |j: u32, agg: W| -> CascadeValue<W> {
        if j >= top {
            let cap = &caps[j as usize];
            let saturated = agg >= *cap;
            let capped = agg > *cap;
            CascadeValue { f: if capped { cap.clone() } else { agg }, saturated, capped }
        } else {
            CascadeValue { f: agg, saturated: false, capped: false }
        }
    };

    let mut full: Vec<CascadeValue<W>> = vec![CascadeValue { f: W::zero(), saturated: false, capped: false }; m as usize + 1];
    full[m as usize] = CascadeValue { f: caps[m as usize].clone(), saturated: true, capped: false };
    for j in (0..m).rev() {
        full[j as usize] = step(j, full[j as usize + 1].f.times(arity));
    }

    let mut levels: Vec<CascadeLevel<W>> = Vec::with_capacity(m as usize + 1);
    let n_m = tree.explicit_count(m);
    levels.push(CascadeLevel { f: vec![caps[m as usize].clone(); n_m], sat: vec![true; n_m], capped: vec![false; n_m] });
    for j in (0..m).rev() {
        let lv = &tree.levels[j as usize];
        let below = levels.last().unwrap();
        let value = |i: usize| -> CascadeValue<W> {
            if lv.full[i] {
                return full[j as usize].clone();
            }
            let span = lv.child_start[i] as usize..lv.child_start[i + 1] as usize;
            let agg = below.f[span].iter().fold(W::zero(), |acc, c| acc.add(c));
            step(j, agg)
        };
        let values: Vec<CascadeValue<W>> = if lv.codes.len() > PAR_THRESHOLD {
            (0..lv.codes.len()).into_par_iter().map(value).collect()
        } else {
            (0..lv.codes.len()).map(value).collect()
        };
        let mut level = CascadeLevel {
            f: Vec::with_capacity(values.len()),
            sat: Vec::with_capacity(values.len()),
            capped: Vec::with_capacity(values.len()),
        };
        for v in values {
            level.f.push(v.f);
            level.sat.push(v.saturated);
            level.capped.push(v.capped);
        }
        levels.push(level);
    }
    levels.reverse();

    let top_level = &levels[top as usize];
    let total = top_level
        .f
        .iter()
        .fold(W::zero(), |acc, f| acc.add(f))
        .add(&full[top as usize].f.times(tree.interior_count(top)));
    CascadeMeasure { tree, params: params.clone(), levels, full, total }
}

/// A cover element: every occupied level-`level` descendant of `root`. For
/// explicitly stored cubes `level == root.level()` and the block is the
/// single cube `root`; blocks inside full regions can hold many cubes.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverBlock {
    pub root: DyadicCube,
    pub level: u32,
    pub count: u128,
    /// Cascade value `f` of each cube of the block.
    pub mass: f64,
}

impl CoverBlock {
    pub fn cubes(&self) -> impl Iterator<Item = DyadicCube> + '_ {
        let shift = self.root.dim() as u32 * (self.level - self.root.level());
        let start = (self.root.code() as u128) << shift;
        (start..start + self.count).map(move |c| DyadicCube::from_code(self.root.dim(), self.level, c as u64))
    }

    pub fn diameter(&self) -> f64 {
        crate::cube::diameter(self.root.dim(), self.level)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EqualityCover {
    pub blocks: Vec<CoverBlock>,
}

impl EqualityCover {
    pub fn len(&self) -> u128 {
        self.blocks.iter().map(|b| b.count).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn cubes(&self) -> impl Iterator<Item = DyadicCube> + '_ {
        self.blocks.iter().flat_map(CoverBlock::cubes)
    }

    /// `sum f(Q_i)` over the cover.
    pub fn total_mass(&self) -> f64 {
        self.blocks.iter().map(|b| b.mass * b.count as f64).sum()
    }
}

/// Mass increase between consecutive literal cascade stages.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityFinding {
    /// Level whose caps produced the later stage.
    pub step_level: u32,
    pub cube: DyadicCube,
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityAudit {
    pub steps: u32,
    pub cubes_checked: u64,
    /// Total number of violations found.
    pub violations: u64,
    /// The first violations, up to the audit's record limit.
    pub findings: Vec<MonotonicityFinding>,
}

impl MonotonicityAudit {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchingBound {
    pub s: f64,
    /// `s <= log2 N_n` for all `n` in `m..max_level`, so the bound must hold.
    pub premise: bool,
    pub holds: bool,
    /// Cube with the smallest margin `log2 Phi - s (n - m)`, and that margin.
    pub worst: Option<(DyadicCube, f64)>,
}

impl<W: Weight> CascadeMeasure<W> {
    pub fn params(&self) -> &FrostmanParams {
        &self.params
    }

    pub fn tree(&self) -> &OccupancyTree {
        &self.tree
    }

    pub fn tree_arc(&self) -> &Arc<OccupancyTree> {
        &self.tree
    }

    /// `T`, the total mass of the level-`L` layer.
    pub fn total(&self) -> &W {
        &self.total
    }

    fn value_at(&self, level: u32, node: Node) -> CascadeValue<W> {
        match node {
            Node::Explicit(i) => {
                let lv = &self.levels[level as usize];
                CascadeValue { f: lv.f[i].clone(), saturated: lv.sat[i], capped: lv.capped[i] }
            }
            Node::Interior => self.full[level as usize].clone(),
        }
    }

    fn branching_at(&self, level: u32, node: Node) -> u128 {
        match node {
            Node::Explicit(i) => self.tree.levels[level as usize].branching[i] as u128,
            Node::Interior => self.tree.arity() as u128,
        }
    }

    fn check_cube(&self, q: &DyadicCube) -> Result<(), FrostmanError> {
        if q.dim() != self.tree.dim() {
            return Err(FrostmanError::DimensionMismatch { expected: self.tree.dim(), got: q.dim() });
        }
        if q.level() > self.tree.max_level() {
            return Err(FrostmanError::TooDeep { cube: *q, max_level: self.tree.max_level() });
        }
        Ok(())
    }

    /// Cascade value of an occupied cube at level `<= m`; `None` when the
    /// cube is unoccupied or finer than `m`.
    pub fn value(&self, q: &DyadicCube) -> Option<CascadeValue<W>> {
        if q.dim() != self.tree.dim() || q.level() > self.params.m {
            return None;
        }
        let mut last = None;
        self.tree.walk(q, |_, node| last = Some(node)).then(|| self.value_at(q.level(), last.unwrap()))
    }

    /// Unnormalized mass of `q` under `mu_{m-ell}`.
    ///
    /// With `j*` the coarsest level in `L..=min(level q, m - 1)` where the
    /// ancestor of `q` was capped (or `min(level q, m)` when there is none),
    /// the mass is `f_{j*}` of that ancestor divided by the occupied-children
    /// counts along the chain from `j*` down to `q`. Above `L` it is the
    /// plain aggregate.
    pub fn leaf_mass(&self, q: &DyadicCube) -> Result<W, FrostmanError> {
        self.check_cube(q)?;
        let mut chain: Vec<Node> = Vec::with_capacity(q.level() as usize + 1);
        if !self.tree.walk(q, |_, node| chain.push(node)) {
            return Ok(W::zero());
        }
        let m = self.params.m;
        let last_cap = q.level().min(m.saturating_sub(1));
        let capped = (self.params.top..=last_cap)
            .find(|&j| j < m && self.value_at(j, chain[j as usize]).capped);
        let j_star = capped.unwrap_or(q.level().min(m));
        let mut mass = self.value_at(j_star, chain[j_star as usize]).f;
        let mut phi: u128 = 1;
        for j in j_star..q.level() {
            let b = self.branching_at(j, chain[j as usize]);
            match phi.checked_mul(b) {
                Some(p) => phi = p,
                None => {
                    mass = mass.divide(phi);
                    phi = b;
                }
            }
        }
        Ok(mass.divide(phi))
    }

    /// Normalized mass `leaf_mass / T`.
    pub fn normalized_mass(&self, q: &DyadicCube) -> Result<f64, FrostmanError> {
        Ok(self.leaf_mass(q)?.to_f64() / self.total.to_f64())
    }

    /// Maximal saturated cubes, found by a top-down walk from the occupied
    /// level-`L` cubes that stops at the first saturated cube.
    pub fn equality_cover(&self) -> EqualityCover {
        let mut blocks = Vec::new();
        let top = self.params.top;
        let dim = self.tree.dim();
        let d = dim as u32;
        // First saturated level for a cube inside a full region at `level`.
        let first_full_sat = |level: u32| (level.max(top)..=self.params.m).find(|&i| self.full[i as usize].saturated).unwrap();
        let mut stack: Vec<(u32, usize)> = vec![(0, 0)];
        while let Some((level, i)) = stack.pop() {
            let lv = &self.tree.levels[level as usize];
            let cube = DyadicCube::from_code(dim, level, lv.codes[i]);
            if lv.full[i] {
                let at = first_full_sat(level);
                blocks.push(CoverBlock {
                    root: cube,
                    level: at,
                    count: 1u128 << (d * (at - level)),
                    mass: self.full[at as usize].f.to_f64(),
                });
                continue;
            }
            if level >= top && self.levels[level as usize].sat[i] {
                blocks.push(CoverBlock { root: cube, level, count: 1, mass: self.levels[level as usize].f[i].to_f64() });
                continue;
            }
            let span = lv.child_start[i] as usize..lv.child_start[i + 1] as usize;
            for c in span.rev() {
                stack.push((level + 1, c));
            }
        }
        EqualityCover { blocks }
    }

    /// Literal stage-by-stage simulation of `mu_m, mu_{m-1}, ..., mu_{m-ell}`
    /// on the occupied level-`m` cubes (finer masses are uniform splits of
    /// these at every stage), checking that no cube at levels `L..=m` gains
    /// mass from one stage to the next. Reports at most `max_findings`
    /// violations in full.
    pub fn audit_monotonicity(&self, max_findings: usize) -> MonotonicityAudit {
        let tree = &self.tree;
        let p = &self.params;
        let (m, top) = (p.m, p.top);
        let d = tree.dim() as u32;
        let dim = tree.dim();
        let cubes: Vec<DyadicCube> = tree.occupied_cubes(m).collect();
        // Branching counts along each chain, coarse to fine, over levels top..m.
        let chains: Vec<Vec<u128>> = cubes
            .par_iter()
            .map(|q| {
                let mut bs = Vec::with_capacity((m - top) as usize);
                tree.walk(q, |level, node| {
                    if level >= top && level < m {
                        bs.push(self.branching_at(level, node));
                    }
                });
                bs
            })
            .collect();
        let cap = |j: u32| W::dyadic_power(j, p.t);
        let mut mass: Vec<W> = vec![cap(m); cubes.len()];
        let sums = |mass: &[W], j: u32| -> Vec<(u64, W)> {
            let shift = d * (m - j);
            let mut out: Vec<(u64, W)> = Vec::new();
            for (q, w) in cubes.iter().zip(mass) {
                let code = if shift >= 64 { 0 } else { q.code() >> shift };
                match out.last_mut() {
                    Some((c, acc)) if *c == code => *acc = acc.add(w),
                    _ => out.push((code, w.clone())),
                }
            }
            out
        };
        let mut audit = MonotonicityAudit { steps: 0, cubes_checked: 0, violations: 0, findings: Vec::new() };
        let mut before_levels: Vec<Vec<(u64, W)>> = (top..=m).map(|j| sums(&mass, j)).collect();
        for j in (top..m).rev() {
            let shift = d * (m - j);
            let capj = cap(j);
            let parents = &before_levels[(j - top) as usize];
            let mut pi = 0usize;
            for (k, q) in cubes.iter().enumerate() {
                let code = if shift >= 64 { 0 } else { q.code() >> shift };
                while parents[pi].0 != code {
                    pi += 1;
                }
                if parents[pi].1 > capj {
                    let phi = chains[k][(j - top) as usize..].iter().product::<u128>();
                    mass[k] = capj.divide(phi);
                }
            }
            let after_levels: Vec<Vec<(u64, W)>> = (top..=m).map(|i| sums(&mass, i)).collect();
            for (li, (b_lv, a_lv)) in before_levels.iter().zip(&after_levels).enumerate() {
                for ((code, b), (_, a)) in b_lv.iter().zip(a_lv) {
                    audit.cubes_checked += 1;
                    let (bf, af) = (b.to_f64(), a.to_f64());
                    if af > bf * (1.0 + 1e-12) {
                        audit.violations += 1;
                        if audit.findings.len() < max_findings {
                            audit.findings.push(MonotonicityFinding {
                                step_level: j,
                                cube: DyadicCube::from_code(dim, top + li as u32, *code),
                                before: bf,
                                after: af,
                            });
                        }
                    }
                }
            }
            audit.steps += 1;
            before_levels = after_levels;
        }
        audit
    }

    /// Checks `2^(s (n - m)) <= Phi_{m+1}(Q)` for every occupied cube `Q` at
    /// levels `m+1..=max_level`, where `Phi_{m+1}(Q)` multiplies the
    /// occupied-children counts of the ancestors of `Q` at levels
    /// `m..level Q`.
    pub fn branching_bound(&self, s: f64) -> BranchingBound {
        let tree = &self.tree;
        let m = self.params.m;
        let n_max = tree.max_level();
        let d = tree.dim() as f64;
        let dim = tree.dim();
        let premise = (m..n_max).all(|n| {
            let lv = &tree.levels[n as usize];
            let nmin = lv.branching.iter().map(|&b| b as u32).min().unwrap_or(tree.arity()).min(tree.arity());
            s <= (nmin as f64).log2()
        });
        // Minimum of log2 Phi per level, with a witness.
        let mut best: Vec<Option<(f64, DyadicCube)>> = vec![None; n_max as usize + 1];
        let mut offer = |n: u32, v: f64, q: &dyn Fn() -> DyadicCube| {
            let slot = &mut best[n as usize];
            if slot.as_ref().is_none_or(|x| v < x.0) {
                *slot = Some((v, q()));
            }
        };
        if tree.interior_count(m) > 0 {
            let q = tree.occupied_cubes(m).find(|q| matches!(self.node_of(q), Some(Node::Interior))).unwrap();
            for n in m + 1..=n_max {
                offer(n, d * (n - m) as f64, &|| first_descendant(&q, n));
            }
        }
        let mut logphi: Vec<f64> = vec![0.0; tree.explicit_count(m)];
        for n in m..=n_max {
            let lv = &tree.levels[n as usize];
            let mut next = Vec::new();
            for (i, &lp) in logphi.iter().enumerate() {
                let q = DyadicCube::from_code(dim, n, lv.codes[i]);
                if n > m {
                    offer(n, lp, &|| q);
                }
                if n == n_max {
                    continue;
                }
                if lv.full[i] {
                    for k in n + 1..=n_max {
                        offer(k, lp + d * (k - n) as f64, &|| first_descendant(&q, k));
                    }
                } else {
                    let b = (lv.branching[i] as f64).log2();
                    let span = lv.child_start[i] as usize..lv.child_start[i + 1] as usize;
                    next.extend(span.map(|_| lp + b));
                }
            }
            logphi = next;
        }
        let mut worst: Option<(DyadicCube, f64)> = None;
        for n in m + 1..=n_max {
            if let Some((lp, q)) = &best[n as usize] {
                let margin = lp - s * (n - m) as f64;
                if worst.as_ref().is_none_or(|w| margin < w.1) {
                    worst = Some((*q, margin));
                }
            }
        }
        let holds = worst.as_ref().is_none_or(|w| w.1 >= -1e-12);
        BranchingBound { s, premise, holds, worst }
    }

    fn node_of(&self, q: &DyadicCube) -> Option<Node> {
        let mut last = None;
        self.tree.walk(q, |_, node| last = Some(node)).then_some(last).flatten()
    }

    /// Explicitly stored cubes at `level <= m` with their values.
    pub fn explicit_values(&self, level: u32) -> impl Iterator<Item = (DyadicCube, CascadeValue<W>)> + '_ {
        let lv = &self.tree.levels[level as usize];
        let cv = &self.levels[level as usize];
        let dim = self.tree.dim();
        (0..lv.codes.len()).map(move |i| {
            (
                DyadicCube::from_code(dim, level, lv.codes[i]),
                CascadeValue { f: cv.f[i].clone(), saturated: cv.sat[i], capped: cv.capped[i] },
            )
        })
    }

    /// Value shared by all cubes at `level` inside full regions.
    pub fn full_value(&self, level: u32) -> &CascadeValue<W> {
        &self.full[level as usize]
    }
}

fn first_descendant(q: &DyadicCube, level: u32) -> DyadicCube {
    let shift = q.dim() as u32 * (level - q.level());
    DyadicCube::from_code(q.dim(), level, q.code() << shift)
}

impl DyadicMeasure for CascadeMeasure<f64> {
    fn tree(&self) -> &OccupancyTree {
        &self.tree
    }

    fn mass(&self, cube: &DyadicCube) -> f64 {
        self.normalized_mass(cube).unwrap_or(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct Construction {
    pub params: FrostmanParams,
    pub measure: CascadeMeasure<f64>,
    pub cover: EqualityCover,
    /// `T`; normalized masses are `leaf_mass / T`.
    pub total: f64,
}

/// Parameters, cascade, equality cover, and normalization in one step.
pub fn construct(tree: Arc<OccupancyTree>, theta: f64, delta: f64, s: f64, t: f64) -> Result<Construction, FrostmanError> {
    let params = derive_params(theta, delta, s, t, &tree)?;
    let measure = run_cascade::<f64>(tree, &params);
    let cover = measure.equality_cover();
    let total = *measure.total();
    Ok(Construction { params, measure, cover, total })
}
