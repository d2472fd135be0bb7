//! Measures defined on dyadic cubes of an occupancy tree.

use crate::cube::DyadicCube;
use crate::tree::{Node, OccupancyTree};

/// A probability measure that can be queried cube by cube.
pub trait DyadicMeasure: Sync {
    fn tree(&self) -> &OccupancyTree;

    /// Mass of `cube`; zero off the support. `cube.level()` must not exceed
    /// the tree's max level.
    fn mass(&self, cube: &DyadicCube) -> f64;
}

/// The branching measure: each occupied cube passes its mass to its
/// occupied children in equal shares. On a full tree it is the uniform
/// (Lebesgue) measure.
pub struct BranchingMeasure<'a> {
    tree: &'a OccupancyTree,
}

impl<'a> BranchingMeasure<'a> {
    pub fn new(tree: &'a OccupancyTree) -> Self {
        BranchingMeasure { tree }
    }
}

impl DyadicMeasure for BranchingMeasure<'_> {
    fn tree(&self) -> &OccupancyTree {
        self.tree
    }

    fn mass(&self, cube: &DyadicCube) -> f64 {
        let tree = self.tree;
        if cube.dim() != tree.dim() || cube.level() > tree.max_level() {
            return 0.0;
        }
        let mut mass = 1.0;
        let target = cube.level();
        let occupied = tree.walk(cube, |level, node| {
            if level < target {
                let b = match node {
                    Node::Explicit(i) => tree.levels[level as usize].branching[i] as f64,
                    Node::Interior => tree.arity() as f64,
                };
                mass /= b;
            }
        });
        if occupied {
            mass
        } else {
            0.0
        }
    }
}
