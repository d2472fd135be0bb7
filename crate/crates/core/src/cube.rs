//! Dyadic cubes addressed by interleaved-bit (Morton) codes.
//!
//! A cube at level `n` in dimension `d` is the half-open box
//! `Π_i [k_i 2^-n, (k_i + 1) 2^-n)`. Its code interleaves the bits of the
//! `k_i` from the most significant end, `d` bits per level, with axis `i`
//! occupying bit `i` of every group. Consequently the parent code is
//! `code >> d`, the children are `(code << d) | j` for `j < 2^d`, and sorting
//! codes groups siblings together in child order.

use std::fmt;

use thiserror::Error;

/// Largest supported ambient dimension. Branching counts (at most `2^d`)
/// must fit in the one-byte child-count field of the tree file format.
pub const MAX_DIM: usize = 7;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CubeError {
    #[error("the level-0 cube has no parent")]
    NoParent,
    #[error("dimension {0} outside 1..={MAX_DIM}")]
    BadDimension(usize),
    #[error("level {level} in dimension {dim} needs more than 64 code bits")]
    TooDeep { level: u32, dim: usize },
    #[error("index {index} on axis {axis} is out of range for level {level}")]
    IndexOutOfRange { axis: usize, index: u64, level: u32 },
    #[error("expected {expected} coordinates, got {got}")]
    Arity { expected: usize, got: usize },
}

/// Checks that `dim` is supported and that `level` fits in a 64-bit code.
pub fn check_shape(dim: usize, level: u32) -> Result<(), CubeError> {
    if dim == 0 || dim > MAX_DIM {
        return Err(CubeError::BadDimension(dim));
    }
    if dim as u64 * level as u64 > 64 {
        return Err(CubeError::TooDeep { level, dim });
    }
    Ok(())
}

/// Deepest level representable with 64-bit codes in dimension `dim`.
pub fn max_level_for(dim: usize) -> u32 {
    (64 / dim) as u32
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicCube {
    level: u8,
    dim: u8,
    code: u64,
}

impl DyadicCube {
    pub fn root(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "unsupported dimension {dim}");
        DyadicCube { level: 0, dim: dim as u8, code: 0 }
    }

    /// Builds a cube from its per-axis integer index.
    pub fn from_index(level: u32, index: &[u64]) -> Result<Self, CubeError> {
        let dim = index.len();
        check_shape(dim, level)?;
        for (axis, &k) in index.iter().enumerate() {
            if level < 64 && k >> level != 0 {
                return Err(CubeError::IndexOutOfRange { axis, index: k, level });
            }
        }
        Ok(DyadicCube { level: level as u8, dim: dim as u8, code: interleave(level, index) })
    }

    /// Builds a cube from an interleaved code. The caller guarantees
    /// `code < 2^(d * level)`.
    pub fn from_code(dim: usize, level: u32, code: u64) -> Self {
        debug_assert!(check_shape(dim, level).is_ok());
        debug_assert!(dim as u32 * level >= 64 || code >> (dim as u32 * level) == 0);
        DyadicCube { level: level as u8, dim: dim as u8, code }
    }

    /// The level-`level` cube containing `point`, using half-open cells.
    /// Coordinates must lie in `[0, 1)`.
    pub fn containing(point: &[f64], level: u32) -> Result<Self, CubeError> {
        let dim = point.len();
        check_shape(dim, level)?;
        let mut index = [0u64; MAX_DIM];
        let scale = (level as f64).exp2();
        for (axis, &x) in point.iter().enumerate() {
            // x * 2^level is exact, so floor gives the half-open cell.
            let k = (x * scale).floor();
            if !(0.0..scale).contains(&k) {
                return Err(CubeError::IndexOutOfRange { axis, index: k.max(0.0) as u64, level });
            }
            index[axis] = k as u64;
        }
        Self::from_index(level, &index[..dim])
    }

    pub fn level(&self) -> u32 {
        self.level as u32
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn code(&self) -> u64 {
        self.code
    }

    pub fn index(&self) -> Vec<u64> {
        let mut out = vec![0; self.dim()];
        deinterleave(self.code, self.level(), &mut out);
        out
    }

    pub fn parent(&self) -> Result<Self, CubeError> {
        if self.level == 0 {
            return Err(CubeError::NoParent);
        }
        Ok(DyadicCube { level: self.level - 1, dim: self.dim, code: self.code >> self.dim })
    }

    /// The unique ancestor `generations` levels up; `ancestor(0)` is `self`.
    pub fn ancestor(&self, generations: u32) -> Result<Self, CubeError> {
        if generations > self.level() {
            return Err(CubeError::NoParent);
        }
        Ok(self.ancestor_at(self.level() - generations))
    }

    /// The ancestor at `level`, which must not exceed `self.level()`.
    pub fn ancestor_at(&self, level: u32) -> Self {
        debug_assert!(level <= self.level());
        let shift = (self.level() - level) * self.dim as u32;
        let code = if shift >= 64 { 0 } else { self.code >> shift };
        DyadicCube { level: level as u8, dim: self.dim, code }
    }

    /// Child `j` in `0..2^d`; bit `i` of `j` selects the upper half on axis `i`.
    pub fn child(&self, j: u32) -> Result<Self, CubeError> {
        check_shape(self.dim(), self.level() + 1)?;
        debug_assert!(j < 1 << self.dim);
        Ok(DyadicCube {
            level: self.level + 1,
            dim: self.dim,
            code: (self.code << self.dim) | j as u64,
        })
    }

    pub fn children(&self) -> Result<impl Iterator<Item = DyadicCube>, CubeError> {
        check_shape(self.dim(), self.level() + 1)?;
        let this = *self;
        Ok((0..1u32 << self.dim).map(move |j| DyadicCube {
            level: this.level + 1,
            dim: this.dim,
            code: (this.code << this.dim) | j as u64,
        }))
    }

    /// Whether `other` is `self` or lies inside it.
    pub fn contains(&self, other: &DyadicCube) -> bool {
        other.dim == self.dim
            && other.level >= self.level
            && other.ancestor_at(self.level()).code == self.code
    }

    pub fn side(&self) -> f64 {
        (-(self.level() as f64)).exp2()
    }

    /// `sqrt(d) * 2^-n`.
    pub fn diameter(&self) -> f64 {
        diameter(self.dim(), self.level())
    }

    /// Lower corner of the cube.
    pub fn corner(&self) -> Vec<f64> {
        let side = self.side();
        self.index().into_iter().map(|k| k as f64 * side).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        let side = self.side();
        self.index().into_iter().map(|k| (k as f64 + 0.5) * side).collect()
    }
}

impl fmt::Debug for DyadicCube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DyadicCube(level {}, k={:?})", self.level, self.index())
    }
}

impl fmt::Display for DyadicCube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let idx = self.index();
        write!(f, "L{}[", self.level)?;
        for (i, k) in idx.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, "]")
    }
}

/// Exact diameter of a level-`level` cube in dimension `dim`.
pub fn diameter(dim: usize, level: u32) -> f64 {
    (dim as f64).sqrt() * (-(level as f64)).exp2()
}

pub(crate) fn interleave(level: u32, index: &[u64]) -> u64 {
    let mut code = 0u64;
    for bit in (0..level).rev() {
        for (axis, &k) in index.iter().enumerate() {
            code |= ((k >> bit) & 1) << (bit as usize * index.len() + axis);
        }
    }
    code
}

pub(crate) fn deinterleave(code: u64, level: u32, out: &mut [u64]) {
    let dim = out.len();
    out.iter_mut().for_each(|k| *k = 0);
    for bit in 0..level {
        for (axis, k) in out.iter_mut().enumerate() {
            *k |= ((code >> (bit as usize * dim + axis)) & 1) << bit;
        }
    }
}
