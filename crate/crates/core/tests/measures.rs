mod common;

use std::sync::Arc;

use common::suites::invariant_suite;
use common::{check_construction, random_points};
use frostman::cube::DyadicCube;
use frostman::frostman::{construct, derive_params, FrostmanError};
use frostman::sets::{realize, SetSpec};
use frostman::tree::{build_from_points, full_cube, OccupancyTree};
use frostman::verify::{ball_mass, constant_stability, decay_report, Regime, Sampling};
use proptest::prelude::*;

fn set(text: &str, depth: u32) -> Arc<OccupancyTree> {
    Arc::new(realize(&SetSpec::from_toml(text).unwrap(), depth).unwrap())
}

const CANTOR: &str = "kind = \"ifs\"\nmaps = [{ ratio = \"1/3\", offset = [\"0\"] }, { ratio = \"1/3\", offset = [\"2/3\"] }]\n";
const DIGIT: &str = "kind = \"digits\"\nbase = 4\npattern = [[0, 3]]\n";

fn cell(level: u32, k: u64) -> DyadicCube {
    DyadicCube::from_index(level, &[k]).unwrap()
}

#[test]
fn invariant_suite_on_model_sets() {
    assert_eq!(invariant_suite(16), Ok(48));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn invariants_on_random_trees(seed in any::<u64>(), dim in 1usize..=2, depth in 4u32..=10, theta_pick in 0usize..4, t in 0.1f64..1.5) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let count = rng.gen_range(1..=60);
        let pts = random_points(&mut rng, dim, count);
        let tree = Arc::new(build_from_points(&pts, dim, depth).unwrap());
        let theta = [0.25, 0.5, 0.75, 1.0][theta_pick];
        // Finest delta whose fine level still fits.
        let delta = 2f64.powf(-(depth as f64) * theta) * 1.0001;
        match construct(tree.clone(), theta, delta, t / 2.0, t) {
            Ok(c) => {
                prop_assert!(check_construction(&c).is_ok(), "{:?}", check_construction(&c));
                for level in c.params.top..=depth {
                    for k in 0..(1u64 << level).min(64) {
                        let mut idx = vec![k; dim];
                        idx[0] = k;
                        let q = DyadicCube::from_index(level, &idx).unwrap();
                        let mass = c.measure.leaf_mass(&q).unwrap();
                        prop_assert_eq!(mass > 0.0, tree.is_occupied(&q));
                    }
                }
            }
            Err(FrostmanError::EmptyRange { .. }) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }
}

#[test]
fn skewed_tree_ratios_by_hand() {
    // Three occupied level-4 cubes [0,1/16), [1/16,1/8), [1/8,3/16), each
    // with normalized mass 1/3.
    let tree = Arc::new(build_from_points(&[[0.01], [0.07], [0.13]], 1, 6).unwrap());
    let c = construct(tree, 0.5, 0.25, 1.0, 1.0).unwrap();
    assert_eq!(c.total, 3.0 / 16.0);
    let x = cell(6, 8).center();
    // r = 1/8: level-3 cubes [0,1/8) (2/3) and [1/8,1/4) (1/3).
    let m = ball_mass(&c.measure, &x, 0.125).unwrap();
    assert!((m - 1.0).abs() < 1e-15);
    assert!((m / Regime::Mid.shape(&c.params, 0.125) - 8.0).abs() < 1e-12);
    // r = 1/16: level-4 cubes [1/16,1/8) and [1/8,3/16), 1/3 each.
    let m = ball_mass(&c.measure, &x, 0.0625).unwrap();
    assert!((m - 2.0 / 3.0).abs() < 1e-15);
    assert!((m / Regime::Mid.shape(&c.params, 0.0625) - 32.0 / 3.0).abs() < 1e-12);
    let report = decay_report(&c.measure, &c.params, &c.cover, c.total, &Sampling::default()).unwrap();
    assert!(report.mid.constant >= 32.0 / 3.0 - 1e-12);
}

#[test]
fn equal_exponents_join_the_regimes() {
    let tree = set(CANTOR, 16);
    let c = construct(tree, 0.5, 2f64.powi(-4), 0.6, 0.6).unwrap();
    let r = c.params.fine_scale();
    let (fine, mid) = (Regime::Fine.shape(&c.params, r), Regime::Mid.shape(&c.params, r));
    assert!((fine / mid - 1.0).abs() < 1e-12 && fine / mid <= 2f64.powf(0.6));
    for r in [1e-4, 1e-3, 1e-2] {
        assert!((Regime::Fine.shape(&c.params, r) - r.powf(0.6)).abs() < 1e-15);
    }
}

#[test]
fn witnesses_reproduce_constants() {
    let tree = set(DIGIT, 18);
    let c = construct(tree, 0.5, 2f64.powi(-4), 0.3, 0.4).unwrap();
    let sampling = Sampling { seed: 9, ..Sampling::default() };
    let report = decay_report(&c.measure, &c.params, &c.cover, c.total, &sampling).unwrap();
    for regime in [&report.fine, &report.mid] {
        let w = regime.witness.as_ref().unwrap();
        assert!(c.measure.tree().is_occupied(&DyadicCube::containing(&w.x, c.measure.tree().max_level()).unwrap()));
        let again = ball_mass(&c.measure, &w.x, w.r).unwrap() / regime.regime.shape(&c.params, w.r);
        assert_eq!(again, regime.constant);
    }
    assert_eq!(report, decay_report(&c.measure, &c.params, &c.cover, c.total, &sampling).unwrap());
}

#[test]
fn digit_set_stability() {
    let tree = set(DIGIT, 24);
    let deltas: Vec<f64> = (2..=8).map(|k| 2f64.powi(-k)).collect();
    let r = constant_stability(tree.clone(), 0.5, 0.3, 0.4, &deltas, &Sampling::default()).unwrap();
    assert!(r.mid_ratio <= 8.0 && r.fine_ratio <= 8.0, "{r:?}");
    assert!(r.min_total >= 0.1 && !r.premise_failed);
    assert!(r.scaled_mid_ratio <= 8.0);
    let r = constant_stability(tree, 0.5, 0.3, 0.9, &deltas, &Sampling::default()).unwrap();
    assert!(r.premise_failed && r.total_drop >= 10.0, "{r:?}");
    let totals: Vec<f64> = r.rows.iter().map(|row| row.total).collect();
    assert!(totals.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn full_interval_stability() {
    let tree = Arc::new(full_cube(1, 18).unwrap());
    let deltas: Vec<f64> = (2..=8).map(|k| 2f64.powi(-k)).collect();
    let r = constant_stability(tree, 0.5, 1.0, 1.0, &deltas, &Sampling::default()).unwrap();
    assert!(r.rows.iter().all(|row| row.total == 1.0));
    assert!(r.mid_ratio <= 4.0 && r.fine_ratio <= 4.0);
}

#[test]
fn uniform_interval_constants_stay_below_the_cover_multiplicity() {
    // Balls are replaced by at most 3 cubes of side below 2r, so the
    // constants of the uniform measure stay below 6.
    let tree = Arc::new(full_cube(1, 14).unwrap());
    let c = construct(tree, 0.5, 0.25, 1.0, 1.0).unwrap();
    assert_eq!((c.cover.len(), c.total), (4, 1.0));
    let r = decay_report(&c.measure, &c.params, &c.cover, c.total, &Sampling::default()).unwrap();
    assert!(r.passes(6.0) && r.mid.constant > 2.0, "{r:?}");
}

#[test]
fn branching_bound_premise_follows_dyadic_dimension() {
    let tree = Arc::new(full_cube(1, 12).unwrap());
    let c = construct(tree, 0.5, 2f64.powi(-3), 0.9, 1.0).unwrap();
    let b = c.measure.branching_bound(0.9);
    assert!(b.premise && b.holds);
    let digit = set(DIGIT, 14);
    let c = construct(digit, 0.5, 2f64.powi(-3), 0.3, 0.4).unwrap();
    assert!(!c.measure.branching_bound(0.3).premise);
}

#[test]
fn parameter_errors() {
    let tree = full_cube(1, 6).unwrap();
    assert!(matches!(derive_params(0.5, 0.25, 2.0, 1.0, &tree), Err(FrostmanError::SExceedsT { .. })));
    assert!(matches!(derive_params(0.5, 0.01, 1.0, 1.0, &tree), Err(FrostmanError::TooShallow { m: 13, .. })));
}
