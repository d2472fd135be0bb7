//! Randomized oracle suites shared by the test files and the acceptance
//! harness. Each returns the number of cases checked or the first mismatch.

use std::sync::Arc;

use frostman::cube::DyadicCube;
use frostman::estimate::{cover_cost, cover_cost_unscaled};
use frostman::frostman::{construct, run_cascade, FrostmanParams};
use frostman::sets::{realize, SetSpec};
use frostman::tree::{build_from_points, full_cube, OccupancyTree};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{brute_cover_cost, check_construction, close, random_points, BigQ, LiteralCascade, Occupancy};

pub const CANTOR: &str = "kind = \"ifs\"\nmaps = [{ ratio = \"1/3\", offset = [\"0\"] }, { ratio = \"1/3\", offset = [\"2/3\"] }]\n";
pub const DIGIT: &str = "kind = \"digits\"\nbase = 4\npattern = [[0, 3]]\n";

pub fn cell(level: u32, idx: &[u64]) -> DyadicCube {
    DyadicCube::from_index(level, idx).unwrap()
}

pub fn set(text: &str, depth: u32) -> Arc<OccupancyTree> {
    Arc::new(realize(&SetSpec::from_toml(text).unwrap(), depth).unwrap())
}

pub fn cascade_params(dim: usize, m: u32, top: u32, t: f64) -> FrostmanParams {
    FrostmanParams { theta: 1.0, delta: 0.5, s: t, t, dim, m, ell: m - top, top }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Cover DP against exhaustive search on random trees with `d <= 2` and
/// depth `<= 8`: exact for integer `s`, `1e-12` relative for real `s`.
pub fn cover_dp_vs_brute_force(seed: u64, cases: usize) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..cases {
        let dim = rng.gen_range(1..=2);
        let depth = rng.gen_range(1..=8);
        let count = rng.gen_range(1..=5);
        let pts = random_points(&mut rng, dim, count);
        let tree = build_from_points(&pts, dim, depth).unwrap();
        let occ = Occupancy::from_points(&pts, dim, depth);
        let b = rng.gen_range(0..=depth);
        let a = rng.gen_range(0..=b);
        let s_int = rng.gen_range(0..=2) as f64;
        let exact: BigQ = cover_cost_unscaled(&tree, s_int, a, b);
        let brute = brute_cover_cost::<BigQ>(&occ, s_int, a, b);
        ensure(exact == brute, || format!("case {case}: s = {s_int}, levels {a}..={b}: {exact:?} vs {brute:?}"))?;
        let s = rng.gen_range(0.0..=dim as f64);
        let dp = cover_cost(&tree, s, a, b).unwrap();
        let brute = (dim as f64).powf(s / 2.0) * brute_cover_cost::<f64>(&occ, s, a, b);
        ensure(close(dp, brute, 1e-12), || format!("case {case}: s = {s}, {dp} vs {brute}"))?;
    }
    Ok(cases)
}

/// Every occupied cube of levels `top..=depth`, plus the all-zero-index cube
/// of each level when it is unoccupied.
fn probe_cubes(occ: &Occupancy, tree: &OccupancyTree, top: u32) -> Vec<(u32, Vec<u64>)> {
    let mut out = Vec::new();
    for level in top..=occ.depth {
        out.extend(occ.levels[level as usize].iter().map(|idx| (level, idx.clone())));
        let zero = vec![0; occ.dim];
        if !tree.is_occupied(&cell(level, &zero)) {
            out.push((level, zero));
        }
    }
    out
}

/// Cascade against the literal stage-by-stage simulation on random trees
/// with depth `<= 10`: exact in rationals for integer `t`, and `1e-12`
/// relative in floating point for real `t`.
pub fn cascade_vs_literal(seed: u64, cases: usize) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..cases {
        let dim = rng.gen_range(1..=2);
        let depth = rng.gen_range(1..=10);
        let count = rng.gen_range(1..=40);
        let pts = random_points(&mut rng, dim, count);
        let tree = Arc::new(build_from_points(&pts, dim, depth).unwrap());
        let occ = Occupancy::from_points(&pts, dim, depth);
        let m = rng.gen_range(0..=depth);
        let top = rng.gen_range(0..=m);
        let t = rng.gen_range(1..=2) as f64;
        let measure = run_cascade::<BigQ>(tree.clone(), &cascade_params(dim, m, top, t));
        let literal = LiteralCascade::<BigQ>::run(&occ, m, top, t);
        ensure(*measure.total() == literal.total(), || format!("case {case}: totals differ"))?;
        for (level, idx) in probe_cubes(&occ, &tree, top) {
            let q = cell(level, &idx);
            let (a, b) = (measure.leaf_mass(&q).unwrap(), literal.mass(&occ, level, &idx));
            ensure(a == b, || format!("case {case}: m = {m}, L = {top}, t = {t}, cube {q}: {a:?} vs {b:?}"))?;
        }
        let t = rng.gen_range(0.05..=dim as f64);
        let measure = run_cascade::<f64>(tree.clone(), &cascade_params(dim, m, top, t));
        let literal = LiteralCascade::<f64>::run(&occ, m, top, t);
        for (level, idx) in probe_cubes(&occ, &tree, top) {
            let q = cell(level, &idx);
            let (a, b) = (measure.leaf_mass(&q).unwrap(), literal.mass(&occ, level, &idx));
            ensure(close(a, b, 1e-12), || format!("case {case}: t = {t}, cube {q}: {a} vs {b}"))?;
        }
    }
    Ok(cases)
}

/// Cascade against the literal simulation on full regions, which the tree
/// stores implicitly.
pub fn cascade_on_full_regions() -> Result<usize, String> {
    let cases = [(1, 6, 4, 2, 1.0), (1, 7, 5, 0, 2.0), (2, 4, 3, 1, 1.0), (2, 4, 4, 2, 2.0)];
    for (dim, depth, m, top, t) in cases {
        let tree = Arc::new(full_cube(dim, depth).unwrap());
        let pts: Vec<Vec<f64>> =
            (0..1u64 << (dim as u32 * depth)).map(|c| DyadicCube::from_code(dim, depth, c).center()).collect();
        let occ = Occupancy::from_points(&pts, dim, depth);
        let measure = run_cascade::<BigQ>(tree.clone(), &cascade_params(dim, m, top, t));
        let literal = LiteralCascade::<BigQ>::run(&occ, m, top, t);
        for (level, idx) in probe_cubes(&occ, &tree, top) {
            let q = cell(level, &idx);
            ensure(measure.leaf_mass(&q).unwrap() == literal.mass(&occ, level, &idx), || format!("cube {q}"))?;
        }
    }
    Ok(cases.len())
}

/// Construction invariants on the full interval, the Cantor set and the
/// base-4 digit set over a `(theta, delta, s, t)` grid with
/// `s <= t` below each set's dimension.
pub fn invariant_suite(depth: u32) -> Result<usize, String> {
    let sets = [
        ("full interval", Arc::new(full_cube(1, depth).unwrap()), [0.5, 0.9]),
        ("cantor", set(CANTOR, depth), [0.3, 0.6]),
        ("digit {0,3}", set(DIGIT, depth), [0.25, 0.45]),
    ];
    let mut count = 0;
    for (name, tree, ts) in &sets {
        for (theta, delta) in [(1.0, 2f64.powi(-6)), (0.5, 2f64.powi(-4)), (0.25, 2f64.powi(-2)), (0.75, 0.1)] {
            for &t in ts {
                for s in [t / 2.0, t] {
                    let c = construct(tree.clone(), theta, delta, s, t).map_err(|e| e.to_string())?;
                    check_construction(&c).map_err(|e| format!("{name} theta {theta} delta {delta} s {s} t {t}: {e}"))?;
                    count += 1;
                }
            }
        }
    }
    Ok(count)
}
