//! Occupancy trees: which dyadic cubes of `[0,1)^d` meet a set `E`, level by
//! level down to a working resolution `max_level`.
//!
//! Storage is canonical and compressed. A cube is *full* when every one of
//! its descendants down to `max_level` is occupied; descendants of a full
//! cube are not stored. Every other occupied cube is stored explicitly, per
//! level, as a sorted list of interleaved codes together with its occupied
//! children count `b(Q)` and the offset of its first child in the next level.
//! Leaves at `max_level` are full by definition. All public queries see the
//! expanded tree; the compression is invisible except for cost.

use std::ops::Range;

use thiserror::Error;

use crate::cube::{check_shape, CubeError, DyadicCube};

/// Default cap on explicitly stored cubes during construction.
pub const DEFAULT_MAX_CUBES: usize = 50_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TreeError {
    #[error(transparent)]
    Cube(#[from] CubeError),
    #[error("max level must be at least 1")]
    ZeroDepth,
    #[error("empty point set")]
    EmptyPointSet,
    #[error("the occupancy oracle rejects the root cube: the set is empty")]
    EmptySet,
    #[error("point {index} has coordinates {point:?} outside [0,1)")]
    PointOutOfRange { index: usize, point: Vec<f64> },
    #[error("point {index} has {got} coordinates, expected {expected}")]
    PointArity { index: usize, expected: usize, got: usize },
    #[error("oracle accepts {child} although it rejects its parent {parent}")]
    Monotonicity { parent: DyadicCube, child: DyadicCube },
    #[error("oracle accepts {0} but none of its children")]
    DeadEnd(DyadicCube),
    #[error("cube {0} is not occupied")]
    Unoccupied(DyadicCube),
    #[error("cube {cube} is at or below the tree resolution {max_level}")]
    TooDeep { cube: DyadicCube, max_level: u32 },
    #[error("cube has dimension {got}, tree has dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("construction exceeded the budget of {0} stored cubes; lower the depth")]
    Budget(usize),
    #[error("malformed tree: {0}")]
    Malformed(String),
}

/// Membership test for a set, queried cube by cube during top-down
/// construction.
pub trait OccupancyOracle {
    fn dim(&self) -> usize;

    fn occupied(&self, cube: &DyadicCube) -> bool;

    /// Optional hint: `true` only if every descendant of `cube` down to
    /// `max_level` is occupied. Lets construction skip dense regions.
    fn full(&self, _cube: &DyadicCube, _max_level: u32) -> bool {
        false
    }
}

/// Adapts a closure into an [`OccupancyOracle`].
pub struct FnOracle<F> {
    dim: usize,
    f: F,
}

pub fn oracle_fn<F: Fn(&DyadicCube) -> bool>(dim: usize, f: F) -> FnOracle<F> {
    FnOracle { dim, f }
}

impl<F: Fn(&DyadicCube) -> bool> OccupancyOracle for FnOracle<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn occupied(&self, cube: &DyadicCube) -> bool {
        (self.f)(cube)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    pub max_cubes: usize,
    /// Probe the children of every rejected cube one level down and fail on
    /// acceptance.
    pub check_monotone: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { max_cubes: DEFAULT_MAX_CUBES, check_monotone: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Level {
    pub(crate) codes: Vec<u64>,
    pub(crate) full: Vec<bool>,
    /// `child_start[i]..child_start[i + 1]` are the explicit children of
    /// cube `i` in the next level. Empty at `max_level`.
    pub(crate) child_start: Vec<u32>,
    /// Occupied-children count; `2^d` for full cubes. Empty at `max_level`.
    pub(crate) branching: Vec<u16>,
}

/// Where a cube sits in the compressed storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Node {
    /// Stored at its own level under this index.
    Explicit(usize),
    /// Strictly inside a full cube.
    Interior,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyTree {
    dim: u8,
    max_level: u8,
    pub(crate) levels: Vec<Level>,
}

impl OccupancyTree {
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn max_level(&self) -> u32 {
        self.max_level as u32
    }

    /// `2^d`, the branching of a full cube.
    pub fn arity(&self) -> u32 {
        1 << self.dim
    }

    pub fn root(&self) -> DyadicCube {
        DyadicCube::root(self.dim())
    }

    /// Number of occupied cubes at `level` (the covering number `M_n`).
    pub fn occupied_count(&self, level: u32) -> u128 {
        let d = self.dim as u32;
        let mut total = self.levels[level as usize].codes.len() as u128;
        for j in 0..level {
            let fulls = self.levels[j as usize].full.iter().filter(|&&f| f).count() as u128;
            total += fulls << (d * (level - j));
        }
        total
    }

    pub fn is_occupied(&self, cube: &DyadicCube) -> bool {
        cube.dim() == self.dim() && cube.level() <= self.max_level() && self.walk(cube, |_, _| {})
    }

    /// `b(Q)`: number of occupied children of an occupied cube above the
    /// resolution limit.
    pub fn occupied_children_count(&self, cube: &DyadicCube) -> Result<u32, TreeError> {
        self.check_dim(cube)?;
        if cube.level() >= self.max_level() {
            return Err(TreeError::TooDeep { cube: *cube, max_level: self.max_level() });
        }
        let mut last = None;
        if !self.walk(cube, |_, node| last = Some(node)) {
            return Err(TreeError::Unoccupied(*cube));
        }
        Ok(match last {
            Some(Node::Explicit(i)) => self.levels[cube.level() as usize].branching[i] as u32,
            _ => self.arity(),
        })
    }

    /// Occupied children of an occupied cube, in code order.
    pub fn occupied_children(&self, cube: &DyadicCube) -> Result<Vec<DyadicCube>, TreeError> {
        self.occupied_children_count(cube)?;
        if self.is_full(cube) {
            return Ok(cube.children()?.collect());
        }
        Ok(cube.children()?.filter(|c| self.is_occupied(c)).collect())
    }

    /// Whether all descendants of an occupied cube down to `max_level` are
    /// occupied.
    pub fn is_full(&self, cube: &DyadicCube) -> bool {
        if cube.dim() != self.dim() || cube.level() > self.max_level() {
            return false;
        }
        let mut full = false;
        let occupied = self.walk(cube, |level, node| match node {
            Node::Explicit(i) => full = self.levels[level as usize].full[i],
            Node::Interior => full = true,
        });
        occupied && full
    }

    /// Every occupied cube at `level`, in code order.
    pub fn occupied_cubes(&self, level: u32) -> impl Iterator<Item = DyadicCube> + '_ {
        let dim = self.dim();
        self.code_ranges(level)
            .into_iter()
            .flat_map(|r| (r.start..r.end).map(|c| c as u64))
            .map(move |code| DyadicCube::from_code(dim, level, code))
    }

    /// Occupied codes at `level` as disjoint sorted ranges: single explicit
    /// cubes plus the blocks under coarser full cubes.
    pub(crate) fn code_ranges(&self, level: u32) -> Vec<Range<u128>> {
        let d = self.dim as u32;
        let mut ranges: Vec<Range<u128>> = self.levels[level as usize]
            .codes
            .iter()
            .map(|&c| c as u128..c as u128 + 1)
            .collect();
        for j in 0..level {
            let lv = &self.levels[j as usize];
            let shift = d * (level - j);
            for (i, &c) in lv.codes.iter().enumerate() {
                if lv.full[i] {
                    ranges.push((c as u128) << shift..((c as u128) + 1) << shift);
                }
            }
        }
        ranges.sort_by_key(|r| r.start);
        ranges
    }

    /// Walks the storage from the root to `cube`, reporting the node found at
    /// each level. Returns whether `cube` is occupied; the walk stops at the
    /// first unoccupied ancestor.
    pub(crate) fn walk(&self, cube: &DyadicCube, mut visit: impl FnMut(u32, Node)) -> bool {
        let mut idx = 0usize;
        let mut interior = false;
        for level in 0..=cube.level() {
            if interior {
                visit(level, Node::Interior);
                continue;
            }
            if level > 0 {
                let parent = &self.levels[level as usize - 1];
                let span = parent.child_start[idx] as usize..parent.child_start[idx + 1] as usize;
                let code = cube.ancestor_at(level).code();
                match self.levels[level as usize].codes[span.clone()].binary_search(&code) {
                    Ok(p) => idx = span.start + p,
                    Err(_) => return false,
                }
            }
            visit(level, Node::Explicit(idx));
            if self.levels[level as usize].full[idx] {
                interior = true;
            }
        }
        true
    }

    fn check_dim(&self, cube: &DyadicCube) -> Result<(), TreeError> {
        if cube.dim() != self.dim() {
            return Err(TreeError::DimensionMismatch { expected: self.dim(), got: cube.dim() });
        }
        Ok(())
    }

    pub(crate) fn explicit_count(&self, level: u32) -> usize {
        self.levels[level as usize].codes.len()
    }

    /// Number of explicitly stored cubes over all levels.
    pub fn stored_cubes(&self) -> usize {
        self.levels.iter().map(|l| l.codes.len()).sum()
    }

    /// Explicit cubes at `level` whose storage has a full coarser ancestor are
    /// absent; this counts the level-`level` cubes under coarser full cubes.
    pub fn interior_count(&self, level: u32) -> u128 {
        self.occupied_count(level) - self.explicit_count(level) as u128
    }

    /// First occupied leaf (level `max_level`) inside an occupied cube.
    pub fn first_leaf(&self, cube: &DyadicCube) -> Option<DyadicCube> {
        if cube.dim() != self.dim() || cube.level() > self.max_level() {
            return None;
        }
        let mut last = None;
        if !self.walk(cube, |_, node| last = Some(node)) {
            return None;
        }
        let (mut level, mut idx) = match last? {
            Node::Interior => return Some(first_descendant(cube, self.max_level())),
            Node::Explicit(i) => (cube.level(), i),
        };
        loop {
            let lv = &self.levels[level as usize];
            if lv.full[idx] {
                let q = DyadicCube::from_code(self.dim(), level, lv.codes[idx]);
                return Some(first_descendant(&q, self.max_level()));
            }
            idx = lv.child_start[idx] as usize;
            level += 1;
        }
    }
}

fn first_descendant(cube: &DyadicCube, level: u32) -> DyadicCube {
    let shift = (level - cube.level()) * cube.dim() as u32;
    DyadicCube::from_code(cube.dim(), level, cube.code() << shift)
}

/// The tree of the whole unit cube: every cube occupied at every level.
pub fn full_cube(dim: usize, max_level: u32) -> Result<OccupancyTree, TreeError> {
    check_shape(dim, max_level)?;
    if max_level == 0 {
        return Err(TreeError::ZeroDepth);
    }
    let mut codes = vec![vec![0u64]];
    let mut hints = vec![vec![true]];
    codes.resize(max_level as usize + 1, Vec::new());
    hints.resize(max_level as usize + 1, Vec::new());
    assemble(dim, max_level, codes, hints)
}

/// Builds the tree of cubes containing at least one of `points`.
pub fn build_from_points<P: AsRef<[f64]>>(
    points: &[P],
    dim: usize,
    max_level: u32,
) -> Result<OccupancyTree, TreeError> {
    check_shape(dim, max_level)?;
    if max_level == 0 {
        return Err(TreeError::ZeroDepth);
    }
    if points.is_empty() {
        return Err(TreeError::EmptyPointSet);
    }
    let mut leaves = Vec::with_capacity(points.len());
    for (index, p) in points.iter().enumerate() {
        let p = p.as_ref();
        if p.len() != dim {
            return Err(TreeError::PointArity { index, expected: dim, got: p.len() });
        }
        let cube = DyadicCube::containing(p, max_level)
            .map_err(|_| TreeError::PointOutOfRange { index, point: p.to_vec() })?;
        leaves.push(cube.code());
    }
    leaves.sort_unstable();
    leaves.dedup();
    let mut codes = vec![Vec::new(); max_level as usize + 1];
    codes[max_level as usize] = leaves;
    for n in (0..max_level as usize).rev() {
        let mut up: Vec<u64> = codes[n + 1].iter().map(|c| c >> dim).collect();
        up.dedup();
        codes[n] = up;
    }
    let hints = codes.iter().map(|l| vec![false; l.len()]).collect();
    assemble(dim, max_level, codes, hints)
}

/// Builds the tree by top-down recursion from the root, keeping exactly the
/// cubes the oracle accepts.
pub fn build_from_oracle<O: OccupancyOracle + ?Sized>(
    oracle: &O,
    max_level: u32,
    options: BuildOptions,
) -> Result<OccupancyTree, TreeError> {
    let dim = oracle.dim();
    check_shape(dim, max_level)?;
    if max_level == 0 {
        return Err(TreeError::ZeroDepth);
    }
    let root = DyadicCube::root(dim);
    if !oracle.occupied(&root) {
        return Err(TreeError::EmptySet);
    }
    let mut codes = vec![vec![0u64]];
    let mut hints = vec![vec![oracle.full(&root, max_level)]];
    let mut stored = 1usize;
    for n in 0..max_level {
        let mut next = Vec::new();
        let mut next_hints = Vec::new();
        for (i, &code) in codes[n as usize].iter().enumerate() {
            if hints[n as usize][i] {
                continue;
            }
            let cube = DyadicCube::from_code(dim, n, code);
            let before = next.len();
            for child in cube.children()? {
                if oracle.occupied(&child) {
                    next.push(child.code());
                    next_hints.push(child.level() < max_level && oracle.full(&child, max_level));
                } else if options.check_monotone && n + 1 < max_level {
                    if let Some(gc) = child.children()?.find(|gc| oracle.occupied(gc)) {
                        return Err(TreeError::Monotonicity { parent: child, child: gc });
                    }
                }
            }
            if next.len() == before {
                return Err(TreeError::DeadEnd(cube));
            }
        }
        stored += next.len();
        if stored > options.max_cubes {
            return Err(TreeError::Budget(options.max_cubes));
        }
        codes.push(next);
        hints.push(next_hints);
    }
    assemble(dim, max_level, codes, hints)
}

/// Canonicalizes per-level sorted code lists into compressed storage.
///
/// `hints[n][i]` marks cubes known to be full whose descendants were not
/// listed. Every other cube above `max_level` must have at least one listed
/// child, and every listed cube below the root must have a listed parent.
pub(crate) fn assemble(
    dim: usize,
    max_level: u32,
    codes: Vec<Vec<u64>>,
    hints: Vec<Vec<bool>>,
) -> Result<OccupancyTree, TreeError> {
    let depth = max_level as usize;
    let arity = 1usize << dim;
    if codes.len() != depth + 1 || codes[0] != [0] {
        return Err(TreeError::Malformed("level 0 must hold exactly the root".into()));
    }
    for (n, lv) in codes.iter().enumerate() {
        if lv.windows(2).any(|w| w[0] >= w[1]) {
            return Err(TreeError::Malformed(format!("level {n} codes not strictly sorted")));
        }
        if n > 0 && dim * n < 64 && lv.last().is_some_and(|&c| c >> (dim * n) != 0) {
            return Err(TreeError::Malformed(format!("level {n} code out of range")));
        }
    }

    // Child spans and fullness, bottom-up.
    let mut spans: Vec<Vec<Range<usize>>> = vec![Vec::new(); depth + 1];
    let mut full: Vec<Vec<bool>> = vec![Vec::new(); depth + 1];
    full[depth] = vec![true; codes[depth].len()];
    for n in (0..depth).rev() {
        let kids = &codes[n + 1];
        let mut k = 0usize;
        let mut lv_spans = Vec::with_capacity(codes[n].len());
        let mut lv_full = Vec::with_capacity(codes[n].len());
        for (i, &code) in codes[n].iter().enumerate() {
            let start = k;
            while k < kids.len() && kids[k] >> dim == code {
                k += 1;
            }
            if k < kids.len() && kids[k] >> dim < code {
                return Err(TreeError::Malformed(format!(
                    "level {} cube {} has no parent",
                    n + 1,
                    kids[k]
                )));
            }
            let hinted = hints[n][i];
            if hinted && k > start {
                return Err(TreeError::Malformed("full cube lists descendants".into()));
            }
            if !hinted && k == start {
                return Err(TreeError::DeadEnd(DyadicCube::from_code(dim, n as u32, code)));
            }
            let is_full = hinted || (k - start == arity && full[n + 1][start..k].iter().all(|&f| f));
            lv_spans.push(start..k);
            lv_full.push(is_full);
        }
        if k != kids.len() {
            return Err(TreeError::Malformed(format!("level {} has orphan cubes", n + 1)));
        }
        spans[n] = lv_spans;
        full[n] = lv_full;
    }

    // Keep cubes with no full strict ancestor, top-down.
    let mut levels = Vec::with_capacity(depth + 1);
    let mut keep: Vec<usize> = vec![0];
    for n in 0..=depth {
        let lv_codes: Vec<u64> = keep.iter().map(|&i| codes[n][i]).collect();
        let lv_full: Vec<bool> = keep.iter().map(|&i| full[n][i]).collect();
        let mut child_start = Vec::new();
        let mut branching = Vec::new();
        let mut next_keep = Vec::new();
        if n < depth {
            child_start.reserve(keep.len() + 1);
            for (&i, &f) in keep.iter().zip(&lv_full) {
                child_start.push(u32::try_from(next_keep.len()).map_err(|_| TreeError::Budget(u32::MAX as usize))?);
                if f {
                    branching.push(arity as u16);
                } else {
                    branching.push(spans[n][i].len() as u16);
                    next_keep.extend(spans[n][i].clone());
                }
            }
            child_start.push(next_keep.len() as u32);
        }
        levels.push(Level { codes: lv_codes, full: lv_full, child_start, branching });
        keep = next_keep;
    }
    Ok(OccupancyTree { dim: dim as u8, max_level: max_level as u8, levels })
}
