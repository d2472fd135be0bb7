//! Occupancy oracles for the structured set models.

use std::cell::Cell;

use super::number::{cmp, Scalar};
use super::spec::tuple_index;
use crate::cube::DyadicCube;
use crate::tree::OccupancyOracle;

/// Exact oracle for digit-restricted sets in a base `2^k`.
///
/// A cube is occupied when its binary prefix can be extended to an allowed
/// digit sequence. Points with two expansions (such as `0.0333...` and
/// `0.1` in base 4) are attributed to their allowed expansion, so a level-`n`
/// cube is occupied exactly when some allowed sequence has it as its first
/// `n` bits on every axis.
pub struct DigitOracle {
    dim: usize,
    bits: u32,
    /// Per pattern entry: membership of full digit tuples.
    rules: Vec<Vec<bool>>,
    /// Per pattern entry and prefix length `r` in `1..bits`: membership of
    /// `r`-bit prefix tuples.
    prefixes: Vec<Vec<Vec<bool>>>,
    all_allowed: Vec<bool>,
}

impl DigitOracle {
    /// `base` must be a power of two; `rules` are membership tables from
    /// [`super::spec::DigitRule::allowed`].
    pub fn new(base: u32, dim: usize, rules: Vec<Vec<bool>>) -> Self {
        debug_assert!(base.is_power_of_two() && base >= 2);
        let bits = base.trailing_zeros();
        let mut prefixes = Vec::with_capacity(rules.len());
        for table in &rules {
            let mut per_r = vec![Vec::new()];
            for r in 1..bits {
                let pbase = 1u32 << r;
                let mut pt = vec![false; (pbase as usize).pow(dim as u32)];
                let mut digits = vec![0u32; dim];
                for (idx, &ok) in table.iter().enumerate() {
                    if !ok {
                        continue;
                    }
                    let mut rest = idx;
                    for g in digits.iter_mut() {
                        *g = (rest % base as usize) as u32 >> (bits - r);
                        rest /= base as usize;
                    }
                    pt[tuple_index(&digits, pbase)] = true;
                }
                per_r.push(pt);
            }
            prefixes.push(per_r);
        }
        let all_allowed = rules.iter().map(|t| t.iter().all(|&b| b)).collect();
        DigitOracle { dim, bits, rules, prefixes, all_allowed }
    }
}

impl OccupancyOracle for DigitOracle {
    fn dim(&self) -> usize {
        self.dim
    }

    fn occupied(&self, cube: &DyadicCube) -> bool {
        let n = cube.level();
        let idx = cube.index();
        let base = 1u32 << self.bits;
        let mut digits = vec![0u32; self.dim];
        let whole = n / self.bits;
        for p in 0..whole {
            let shift = n - (p + 1) * self.bits;
            for (g, k) in digits.iter_mut().zip(&idx) {
                *g = ((k >> shift) & (base as u64 - 1)) as u32;
            }
            if !self.rules[p as usize % self.rules.len()][tuple_index(&digits, base)] {
                return false;
            }
        }
        let r = n % self.bits;
        if r > 0 {
            for (g, k) in digits.iter_mut().zip(&idx) {
                *g = (k & ((1u64 << r) - 1)) as u32;
            }
            let rule = whole as usize % self.rules.len();
            return self.prefixes[rule][r as usize][tuple_index(&digits, 1 << r)];
        }
        true
    }

    fn full(&self, cube: &DyadicCube, max_level: u32) -> bool {
        let first = cube.level() / self.bits;
        let last = max_level.div_ceil(self.bits);
        let len = self.rules.len() as u32;
        (first..last.min(first + len)).all(|p| self.all_allowed[(p % len) as usize])
    }
}

/// Affine map `x -> scale * x + offset`, diagonal with signed entries.
#[derive(Debug, Clone)]
pub struct Piece<S> {
    pub scale: Vec<S>,
    pub offset: Vec<S>,
}

/// Conservative oracle for attractors of (stage-dependent) similarity
/// systems: a cube is occupied when it meets some closed construction piece
/// at depth `depth`, i.e. the image of `[0,1]^d` under a composition of
/// `depth` maps, with stage `i` drawing its map from `stages[i % len]`.
///
/// Cells are half-open except that the last cell on each axis is closed at 1,
/// so set points with coordinate 1 are kept.
pub struct PieceOracle<S> {
    dim: usize,
    stages: Vec<Vec<Piece<S>>>,
    depth: u32,
    covers_unit_cube: bool,
    overflowed: Cell<bool>,
}

impl<S: Scalar> PieceOracle<S> {
    pub fn new(dim: usize, stages: Vec<Vec<Piece<S>>>, depth: u32) -> Self {
        let covers = stages.iter().all(|maps| covers_unit_cube(dim, maps).unwrap_or(false));
        PieceOracle { dim, stages, depth, covers_unit_cube: covers, overflowed: Cell::new(false) }
    }

    /// Whether exact arithmetic overflowed during any query; the answers
    /// given after an overflow are not trustworthy.
    pub fn overflowed(&self) -> bool {
        self.overflowed.get()
    }

    fn search(&self, piece: &Piece<S>, level: u32, lo: &[S], hi: &[S], last: &[bool]) -> Option<bool> {
        for axis in 0..self.dim {
            let a = &piece.offset[axis];
            let b = a.add(&piece.scale[axis])?;
            let (pmin, pmax) = if cmp(a, &b).is_le() { (a, &b) } else { (&b, a) };
            let below_hi = if last[axis] { true } else { cmp(pmin, &hi[axis]).is_lt() };
            if !below_hi || cmp(pmax, &lo[axis]).is_lt() {
                return Some(false);
            }
        }
        if level == self.depth {
            return Some(true);
        }
        let stage = &self.stages[level as usize % self.stages.len()];
        for g in stage {
            let mut next = Piece { scale: Vec::with_capacity(self.dim), offset: Vec::with_capacity(self.dim) };
            for axis in 0..self.dim {
                next.scale.push(piece.scale[axis].mul(&g.scale[axis])?);
                next.offset.push(piece.scale[axis].mul(&g.offset[axis])?.add(&piece.offset[axis])?);
            }
            if self.search(&next, level + 1, lo, hi, last)? {
                return Some(true);
            }
        }
        Some(false)
    }
}

impl<S: Scalar> OccupancyOracle for PieceOracle<S> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn occupied(&self, cube: &DyadicCube) -> bool {
        let n = cube.level();
        let idx = cube.index();
        let bounds = || -> Option<(Vec<S>, Vec<S>)> {
            let lo = idx.iter().map(|&k| S::dyadic(k as u128, n)).collect::<Option<Vec<_>>>()?;
            let hi = idx.iter().map(|&k| S::dyadic(k as u128 + 1, n)).collect::<Option<Vec<_>>>()?;
            Some((lo, hi))
        };
        let last: Vec<bool> = idx.iter().map(|&k| k as u128 + 1 == 1u128 << n).collect();
        let identity = Piece { scale: vec![S::one(); self.dim], offset: vec![S::zero(); self.dim] };
        match bounds().and_then(|(lo, hi)| self.search(&identity, 0, &lo, &hi, &last)) {
            Some(hit) => hit,
            None => {
                self.overflowed.set(true);
                true
            }
        }
    }

    fn full(&self, _cube: &DyadicCube, _max_level: u32) -> bool {
        self.covers_unit_cube
    }
}

/// Whether the closed images of `[0,1]^d` under `maps` cover `[0,1]^d`; then
/// the attractor is the whole cube. Checks the midpoint of every cell of the
/// grid spanned by the image boundaries.
fn covers_unit_cube<S: Scalar>(dim: usize, maps: &[Piece<S>]) -> Option<bool> {
    let mut boxes = Vec::with_capacity(maps.len());
    for m in maps {
        let mut b = Vec::with_capacity(dim);
        for axis in 0..dim {
            let a = m.offset[axis].clone();
            let c = a.add(&m.scale[axis])?;
            b.push(if cmp(&a, &c).is_le() { (a, c) } else { (c, a) });
        }
        boxes.push(b);
    }
    let half = S::dyadic(1, 1)?;
    let mut mids: Vec<Vec<S>> = Vec::with_capacity(dim);
    for axis in 0..dim {
        let mut cuts = vec![S::zero(), S::one()];
        for b in &boxes {
            cuts.push(b[axis].0.clone());
            cuts.push(b[axis].1.clone());
        }
        cuts.sort_by(cmp);
        cuts.dedup_by(|a, b| cmp(a, b).is_eq());
        let mut m = Vec::new();
        for w in cuts.windows(2) {
            m.push(w[0].add(&w[1])?.mul(&half)?);
        }
        mids.push(m);
    }
    let total: usize = mids.iter().map(Vec::len).product();
    if total > 1 << 20 {
        return None;
    }
    let mut point = Vec::with_capacity(dim);
    for mut cell in 0..total {
        point.clear();
        for m in &mids {
            point.push(&m[cell % m.len()]);
            cell /= m.len();
        }
        let inside = boxes.iter().any(|b| {
            b.iter().zip(&point).all(|((lo, hi), x)| cmp(lo, x).is_le() && cmp(*x, hi).is_le())
        });
        if !inside {
            return Some(false);
        }
    }
    Some(true)
}

/// Oracle for `{j^-p : j >= 1} ∪ {0}` in `[0,1]`. Exact in integer arithmetic
/// for integer `p`; otherwise in binary floating point.
pub struct SequenceOracle {
    p: f64,
    integer_p: Option<u32>,
}

impl SequenceOracle {
    pub fn new(p: f64, integer_p: Option<u32>) -> Self {
        SequenceOracle { p, integer_p }
    }
}

fn checked_pow(x: u128, p: u32) -> Option<u128> {
    x.checked_pow(p)
}

/// Largest `x` with `x^p <= u`.
fn integer_root(u: u128, p: u32) -> u128 {
    let mut x = (u as f64).powf(1.0 / p as f64).floor() as u128;
    while checked_pow(x + 1, p).is_some_and(|v| v <= u) {
        x += 1;
    }
    while x > 0 && checked_pow(x, p).is_none_or(|v| v > u) {
        x -= 1;
    }
    x
}

impl OccupancyOracle for SequenceOracle {
    fn dim(&self) -> usize {
        1
    }

    fn occupied(&self, cube: &DyadicCube) -> bool {
        let n = cube.level();
        let k = cube.code() as u128;
        let scale = 1u128 << n;
        if k == 0 || k + 1 == scale {
            // 0 lies in the first cell, 1 in the closed last cell.
            return true;
        }
        match self.integer_p {
            Some(p) => {
                // Some j has k/2^n <= j^-p < (k+1)/2^n, i.e. 2^n/(k+1) < j^p <= 2^n/k.
                let j = integer_root(scale / k, p);
                j >= 1 && checked_pow(j, p).is_none_or(|v| v.checked_mul(k + 1).is_none_or(|w| w > scale))
            }
            None => {
                let lo = k as f64 / scale as f64;
                let hi = (k + 1) as f64 / scale as f64;
                let j = (1.0 / lo).powf(1.0 / self.p).floor();
                [j - 1.0, j, j + 1.0].iter().filter(|&&c| c >= 1.0).any(|&c| {
                    let y = c.powf(-self.p);
                    lo <= y && y < hi
                })
            }
        }
    }
}
