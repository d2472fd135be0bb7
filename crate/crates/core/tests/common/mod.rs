//! Reference computations that share no code with the library: occupancy
//! straight from points, exhaustive covers, the literal stage-by-stage
//! cascade, and ternary enumeration of the Cantor set.

#![allow(dead_code)]

pub mod suites;

use std::collections::{BTreeMap, BTreeSet};

use frostman::weight::Weight;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;

/// Exact rational weights. `dyadic_power` requires an integer exponent.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct BigQ(pub BigRational);

impl BigQ {
    pub fn int(n: i64) -> Self {
        BigQ(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn ratio(n: i64, d: i64) -> Self {
        BigQ(BigRational::new(BigInt::from(n), BigInt::from(d)))
    }
}

impl Weight for BigQ {
    fn zero() -> Self {
        BigQ(BigRational::zero())
    }

    fn add(&self, other: &Self) -> Self {
        BigQ(&self.0 + &other.0)
    }

    fn times(&self, n: u128) -> Self {
        BigQ(&self.0 * BigRational::from_integer(BigInt::from(n)))
    }

    fn divide(&self, n: u128) -> Self {
        BigQ(&self.0 / BigRational::from_integer(BigInt::from(n)))
    }

    fn dyadic_power(level: u32, exponent: f64) -> Self {
        assert!(exponent.fract() == 0.0 && exponent >= 0.0, "exact weights need a non-negative integer exponent");
        let k = level as usize * exponent as usize;
        BigQ(BigRational::new(BigInt::one(), BigInt::one() << k))
    }

    fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap()
    }
}

pub type Index = Vec<u64>;

/// Occupied cells per level `0..=depth`, computed directly from the points
/// (cells half-open, coordinate 1 counted in the last cell).
pub struct Occupancy {
    pub dim: usize,
    pub depth: u32,
    pub levels: Vec<BTreeSet<Index>>,
}

impl Occupancy {
    pub fn from_points(points: &[Vec<f64>], dim: usize, depth: u32) -> Self {
        let levels = (0..=depth)
            .map(|n| {
                let side = (1u64 << n) as f64;
                points
                    .iter()
                    .map(|p| p.iter().map(|&x| ((x * side).floor() as u64).min((1u64 << n) - 1)).collect())
                    .collect()
            })
            .collect();
        Occupancy { dim, depth, levels }
    }

    pub fn ancestor(idx: &Index, from: u32, to: u32) -> Index {
        idx.iter().map(|&k| k >> (from - to)).collect()
    }

    pub fn occupied(&self, level: u32, idx: &Index) -> bool {
        self.levels[level as usize].contains(idx)
    }

    /// Occupied children of an occupied cell.
    pub fn branching(&self, level: u32, idx: &Index) -> u128 {
        let mut n = 0;
        for c in 0..(1u64 << self.dim) {
            let child: Index = idx.iter().enumerate().map(|(i, &k)| 2 * k + ((c >> i) & 1)).collect();
            if self.occupied(level + 1, &child) {
                n += 1;
            }
        }
        n
    }
}

/// Random points, either uniform or clustered so trees have varied branching.
pub fn random_points<R: Rng>(rng: &mut R, dim: usize, count: usize) -> Vec<Vec<f64>> {
    let clustered = rng.gen_bool(0.5);
    let center: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
    (0..count)
        .map(|_| {
            (0..dim)
                .map(|i| {
                    if clustered {
                        (center[i] + rng.gen_range(-0.05..0.05)).clamp(0.0, 0.999_999)
                    } else {
                        rng.gen::<f64>()
                    }
                })
                .collect()
        })
        .collect()
}

/// Minimum of `sum 2^(-level s)` over all covers of the occupied level-`b`
/// cells obtained by assigning every such cell a covering level in `a..=b`
/// (the union of the chosen ancestors). Exponential; tiny inputs only.
pub fn brute_cover_cost<W: Weight>(occ: &Occupancy, s: f64, a: u32, b: u32) -> W {
    let leaves: Vec<&Index> = occ.levels[b as usize].iter().collect();
    let choices = (b - a + 1) as usize;
    let combos = choices.checked_pow(leaves.len() as u32).expect("too many covers to enumerate");
    let mut best: Option<W> = None;
    let mut pick = vec![0usize; leaves.len()];
    for mut code in 0..combos {
        for p in pick.iter_mut() {
            *p = code % choices;
            code /= choices;
        }
        let cubes: BTreeSet<(u32, Index)> = leaves
            .iter()
            .zip(&pick)
            .map(|(leaf, &p)| {
                let level = a + p as u32;
                (level, Occupancy::ancestor(leaf, b, level))
            })
            .collect();
        let cost = cubes.iter().fold(W::zero(), |acc, (level, _)| acc.add(&W::dyadic_power(*level, s)));
        if best.as_ref().is_none_or(|bst| cost < *bst) {
            best = Some(cost);
        }
    }
    best.expect("at least one leaf")
}

/// The literal sequence `mu_m, mu_{m-1}, ..., mu_top`: start with `2^(-m t)`
/// on every occupied level-`m` cell; at stage `j = m-1, ..., top`, every
/// level-`m` cell whose level-`j` ancestor carries more than `2^(-j t)`
/// (under the previous stage) is reset to `2^(-j t) / Phi`, with `Phi` the
/// product of branching counts from level `j` down to the cell.
pub struct LiteralCascade<W> {
    pub m: u32,
    pub top: u32,
    /// Final masses of the occupied level-`m` cells.
    pub cells: BTreeMap<Index, W>,
}

impl<W: Weight> LiteralCascade<W> {
    pub fn run(occ: &Occupancy, m: u32, top: u32, t: f64) -> Self {
        let cap = |j: u32| W::dyadic_power(j, t);
        let mut cells: BTreeMap<Index, W> = occ.levels[m as usize].iter().map(|q| (q.clone(), cap(m))).collect();
        for j in (top..m).rev() {
            let mut agg: BTreeMap<Index, W> = BTreeMap::new();
            for (q, w) in &cells {
                let a = Occupancy::ancestor(q, m, j);
                let e = agg.entry(a).or_insert_with(W::zero);
                *e = e.add(w);
            }
            let capj = cap(j);
            for (q, w) in cells.iter_mut() {
                let a = Occupancy::ancestor(q, m, j);
                if agg[&a] > capj {
                    let mut phi = 1u128;
                    for i in j..m {
                        phi *= occ.branching(i, &Occupancy::ancestor(q, m, i));
                    }
                    *w = capj.divide(phi);
                }
            }
        }
        LiteralCascade { m, top, cells }
    }

    /// Mass of the cell `idx` at `level >= top`: sums of level-`m` cells for
    /// coarser cells, uniform splitting below level `m`.
    pub fn mass(&self, occ: &Occupancy, level: u32, idx: &Index) -> W {
        if !occ.occupied(level, idx) {
            return W::zero();
        }
        if level <= self.m {
            return self
                .cells
                .iter()
                .filter(|(q, _)| Occupancy::ancestor(q, self.m, level) == *idx)
                .fold(W::zero(), |acc, (_, w)| acc.add(w));
        }
        let top = Occupancy::ancestor(idx, level, self.m);
        let mut w = self.cells[&top].clone();
        for i in self.m..level {
            w = w.divide(occ.branching(i, &Occupancy::ancestor(idx, level, i)));
        }
        w
    }

    pub fn total(&self) -> W {
        self.cells.values().fold(W::zero(), |acc, w| acc.add(w))
    }
}

/// Number of dyadic cells of each level `0..=n_max` meeting the
/// middle-thirds Cantor set, by enumerating ternary intervals shorter than
/// the finest cell: each such interval has both endpoints in the set and
/// meets exactly the cells containing its endpoints.
pub fn cantor_counts(n_max: u32) -> Vec<u128> {
    let mut k = 0u32;
    while 3u128.pow(k) <= 1u128 << n_max {
        k += 1;
    }
    let scale = 3u128.pow(k);
    let mut lefts: Vec<u128> = vec![0];
    for level in 0..k {
        let width = 3u128.pow(k - level - 1);
        lefts = lefts.iter().flat_map(|&l| [l, l + 2 * width]).collect();
    }
    (0..=n_max)
        .map(|n| {
            let cells = 1u128 << n;
            let cell = |num: u128| (num * cells / scale).min(cells - 1);
            let mut set = BTreeSet::new();
            for &l in &lefts {
                set.insert(cell(l));
                set.insert(cell(l + 1));
            }
            set.len() as u128
        })
        .collect()
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Checks a construction against the cover and cascade invariants: cap
/// bound on every stored value, cover disjoint, saturated, ancestor-maximal,
/// covering every occupied level-`m` cube with levels in `L..=m`, normalized
/// total 1, and a monotonicity audit that either holds or reports findings.
pub fn check_construction(c: &frostman::frostman::Construction) -> Result<(), String> {
    use std::collections::HashSet;
    let p = &c.params;
    let tree = c.measure.tree();
    for j in p.top..=p.m {
        let cap = p.cap(j);
        let bound = cap * (1.0 + 1e-12);
        for (q, v) in c.measure.explicit_values(j) {
            if v.f > bound {
                return Err(format!("cap bound fails at {q}: {} > {cap}", v.f));
            }
        }
        if tree.interior_count(j) > 0 && c.measure.full_value(j).f > bound {
            return Err(format!("cap bound fails in full regions of level {j}"));
        }
    }
    let cubes: Vec<_> = c.cover.cubes().collect();
    let set: HashSet<(u32, u64)> = cubes.iter().map(|q| (q.level(), q.code())).collect();
    if set.len() != cubes.len() {
        return Err("cover lists a cube twice".into());
    }
    for q in &cubes {
        if q.level() < p.top || q.level() > p.m {
            return Err(format!("cover cube {q} outside levels {}..={}", p.top, p.m));
        }
        let v = c.measure.value(q).ok_or(format!("cover cube {q} is unoccupied"))?;
        if !v.saturated {
            return Err(format!("cover cube {q} is not saturated"));
        }
        for j in p.top..q.level() {
            let a = q.ancestor_at(j);
            if c.measure.value(&a).unwrap().saturated {
                return Err(format!("cover cube {q} has saturated ancestor {a}"));
            }
        }
    }
    for q in tree.occupied_cubes(p.m) {
        let hits = (p.top..=p.m).filter(|&j| set.contains(&(j, q.ancestor_at(j).code()))).count();
        if hits != 1 {
            return Err(format!("occupied cube {q} lies in {hits} cover cubes"));
        }
    }
    let normalized: f64 = c.cover.total_mass() / c.total;
    if (normalized - 1.0).abs() > 1e-12 {
        return Err(format!("normalized cover mass {normalized}"));
    }
    let layer: f64 = tree.occupied_cubes(p.top).map(|q| c.measure.normalized_mass(&q).unwrap()).sum();
    if (layer - 1.0).abs() > 1e-12 {
        return Err(format!("normalized level-L mass {layer}"));
    }
    let audit = c.measure.audit_monotonicity(8);
    if !audit.holds() && (audit.findings.is_empty() || audit.findings.iter().any(|f| f.after <= f.before)) {
        return Err("monotonicity violations without structured findings".into());
    }
    Ok(())
}

/// Cells of level `n` meeting the digit set `{sum d_i base^-i}` with `d_i`
/// drawn from `pattern[(i - 1) % period]` (one axis). Enumerates cylinders
/// of length below `2^-n`; the hull of the set inside each cylinder has both
/// endpoints in the set and meets exactly the cells containing them.
pub fn digit_cells(base: u32, pattern: &[Vec<u32>], n: u32) -> BTreeSet<u64> {
    use num_rational::Ratio;
    let b = base as i128;
    let period = pattern.len();
    let mut depth = 0usize;
    while b.pow(depth as u32) <= 1i128 << n {
        depth += 1;
    }
    // Tail sum_{j >= 1} d_{depth + j} base^-j for the extreme digit choices.
    let tail = |pick: fn(&Vec<u32>) -> u32| -> Ratio<i128> {
        let mut s = Ratio::from_integer(0);
        for j in 1..=period {
            let d = pick(&pattern[(depth + j - 1) % period]) as i128;
            s += Ratio::new(d, b.pow(j as u32));
        }
        s / (Ratio::from_integer(1) - Ratio::new(1, b.pow(period as u32)))
    };
    let lo_tail = tail(|ds| *ds.iter().min().unwrap());
    let hi_tail = tail(|ds| *ds.iter().max().unwrap());
    let mut prefixes: Vec<i128> = vec![0];
    for i in 0..depth {
        prefixes = prefixes.iter().flat_map(|&p| pattern[i % period].iter().map(move |&d| p * b + d as i128)).collect();
    }
    let scale = Ratio::new(1, b.pow(depth as u32));
    let cells = 1i128 << n;
    let cell = |x: Ratio<i128>| ((x * cells).floor().to_integer().min(cells - 1)) as u64;
    let mut out = BTreeSet::new();
    for p in prefixes {
        let a = Ratio::from_integer(p) * scale;
        out.insert(cell(a + lo_tail * scale));
        out.insert(cell(a + hi_tail * scale));
    }
    out
}

/// Level-`n` cells meeting `{j^-p : j >= 1} ∪ {0}` for integer `p`, by exact
/// integer comparison.
pub fn sequence_cells(p: u32, n: u32) -> BTreeSet<u64> {
    let cells = 1u128 << n;
    let mut out = BTreeSet::from([0u64]);
    let mut j = 1u128;
    loop {
        let k = (cells / j.pow(p)).min(cells - 1);
        out.insert(k as u64);
        if k == 0 {
            break;
        }
        j += 1;
    }
    out
}

/// Cells of level `n` under the digit-prefix model for `base = 2^k`: a cell
/// is occupied iff some allowed digit string starts with its `n` bits.
pub fn prefix_cells(base: u32, pattern: &[Vec<u32>], n: u32) -> BTreeSet<u64> {
    let k = base.trailing_zeros();
    assert_eq!(1 << k, base);
    let digits = n.div_ceil(k) as usize;
    let mut strings: Vec<u128> = vec![0];
    for i in 0..digits {
        strings = strings.iter().flat_map(|&s| pattern[i % pattern.len()].iter().map(move |&d| (s << k) | d as u128)).collect();
    }
    let extra = digits as u32 * k - n;
    strings.iter().map(|&s| (s >> extra) as u64).collect()
}
