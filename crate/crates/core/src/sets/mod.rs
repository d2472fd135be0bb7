//! Set models: declarative descriptions of `E`, their occupancy oracles, and
//! point-cloud ingestion.

mod ingest;
mod number;
mod oracles;
mod spec;

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use ingest::{ingest_points, parse_points, Normalization, PointSet};
pub use number::{Number, Rational, Scalar};
pub use oracles::{DigitOracle, Piece, PieceOracle, SequenceOracle};
pub use spec::{DigitRule, SetSpec, Similarity};

use crate::tree::{build_from_oracle, build_from_points, BuildOptions, OccupancyOracle, OccupancyTree, TreeError};

#[derive(Debug, Error)]
pub enum SetError {
    #[error("cannot read {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("invalid set spec: {0}")]
    Spec(String),
    #[error("map {map} sends the unit cube outside itself on axis {axis}")]
    Escapes { map: usize, axis: usize },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: {got} coordinates, expected {expected}")]
    Arity { line: usize, expected: usize, got: usize },
    #[error("empty point set")]
    EmptyPointSet,
    #[error("line {line}: coordinate {value} outside [0,1) (enable normalization to rescale)")]
    OutOfRange { line: usize, value: f64 },
    #[error(transparent)]
    Tree(#[from] TreeError),
}

impl SetError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        SetError::Io { path: path.to_path_buf(), source }
    }
}

/// How a tree was obtained from its spec.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Occupancy of the sampled points themselves.
    Points,
    /// Exact binary digit inspection.
    DigitInspection,
    /// Closed construction pieces at the given depth, in exact rational
    /// arithmetic.
    SubdivisionExact { depth: u32 },
    /// Closed construction pieces at the given depth, in floating point.
    SubdivisionFloat { depth: u32 },
    /// Exact integer comparison of `j^p` against the grid.
    SequenceExact,
    SequenceFloat,
}

impl Method {
    pub fn describe(&self) -> String {
        match self {
            Method::Points => "point occupancy (exact for the sample)".into(),
            Method::DigitInspection => "exact digit inspection".into(),
            Method::SubdivisionExact { depth } => {
                format!("conservative subdivision at depth {depth}, exact rational arithmetic")
            }
            Method::SubdivisionFloat { depth } => {
                format!("conservative subdivision at depth {depth}, floating point")
            }
            Method::SequenceExact => "exact integer enumeration".into(),
            Method::SequenceFloat => "floating-point enumeration".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Realization {
    pub tree: OccupancyTree,
    pub method: Method,
    pub normalization: Option<Normalization>,
}

/// Builds the occupancy tree of `spec` down to `max_level`.
pub fn realize(spec: &SetSpec, max_level: u32) -> Result<OccupancyTree, SetError> {
    Ok(realize_with(spec, max_level, crate::tree::DEFAULT_MAX_CUBES)?.tree)
}

/// As [`realize`], reporting the method used and any normalization, and
/// stopping with an error once more than `max_cubes` cubes would be stored.
pub fn realize_with(spec: &SetSpec, max_level: u32, max_cubes: usize) -> Result<Realization, SetError> {
    spec.validate()?;
    let opts = BuildOptions { max_cubes, check_monotone: false };
    let done = |tree, method| Ok(Realization { tree, method, normalization: None });
    match spec {
        SetSpec::Points { file, normalize } => {
            let set = ingest_points(file, *normalize, max_level)?;
            let tree = build_from_points(&set.points, set.dim, max_level)?;
            Ok(Realization { tree, method: Method::Points, normalization: set.normalization })
        }
        SetSpec::Digits { base, dim, pattern } => {
            let rules: Vec<Vec<bool>> =
                pattern.iter().map(|r| r.allowed(*base, *dim).map_err(SetError::Spec)).collect::<Result<_, _>>()?;
            if base.is_power_of_two() {
                let o = DigitOracle::new(*base, *dim, rules);
                return done(build_from_oracle(&o, max_level, opts)?, Method::DigitInspection);
            }
            let stages = |conv: &dyn Fn(u32) -> Option<Rational>| -> Option<Vec<Vec<Piece<Rational>>>> {
                rules
                    .iter()
                    .map(|table| {
                        table
                            .iter()
                            .enumerate()
                            .filter(|(_, &ok)| ok)
                            .map(|(idx, _)| {
                                let mut rest = idx;
                                let mut offset = Vec::with_capacity(*dim);
                                for _ in 0..*dim {
                                    offset.push(conv((rest % *base as usize) as u32)?);
                                    rest /= *base as usize;
                                }
                                Some(Piece { scale: vec![Rational::new(1, *base as i128); *dim], offset })
                            })
                            .collect()
                    })
                    .collect()
            };
            let b = *base as i128;
            let exact = stages(&|g| Some(Rational::new(g as i128, b))).expect("digit maps are small rationals");
            let depth = piece_depth(1.0 / *base as f64, *dim, max_level);
            subdivide(*dim, exact, depth, max_level, opts)
        }
        SetSpec::Ifs { dim, maps } => {
            let r_max = maps.iter().map(|m| m.ratio.value()).fold(0.0, f64::max);
            let depth = piece_depth(r_max, *dim, max_level);
            let exact: Option<Vec<Piece<Rational>>> = maps.iter().map(|m| similarity_piece(m, *dim)).collect();
            match exact {
                Some(pieces) => subdivide(*dim, vec![pieces], depth, max_level, opts),
                None => {
                    let pieces = maps.iter().map(|m| similarity_piece(m, *dim).unwrap()).collect();
                    let o: PieceOracle<f64> = PieceOracle::new(*dim, vec![pieces], depth);
                    done(build_from_oracle(&o, max_level, opts)?, Method::SubdivisionFloat { depth })
                }
            }
        }
        SetSpec::Sequence { p } => {
            let ip = p.as_positive_integer();
            let o = SequenceOracle::new(p.value(), ip);
            let method = if ip.is_some() { Method::SequenceExact } else { Method::SequenceFloat };
            done(build_from_oracle(&o, max_level, opts)?, method)
        }
    }
}

/// Smallest depth `K` with `r_max^K * sqrt(d) < 2^-max_level`.
fn piece_depth(r_max: f64, dim: usize, max_level: u32) -> u32 {
    let target = -(max_level as f64) * std::f64::consts::LN_2 - 0.5 * (dim as f64).ln();
    let k = (target / r_max.ln()).floor() as u32 + 1;
    let mut k = k.max(1);
    while k > 1 && ((k - 1) as f64) * r_max.ln() < target {
        k -= 1;
    }
    k
}

/// Map of one similarity in the scalar type `S`, or `None` when some
/// number is not representable (a float where exact arithmetic is needed).
fn similarity_piece<S: Scalar>(m: &Similarity, dim: usize) -> Option<Piece<S>> {
    let r = S::of(&m.ratio)?;
    let neg = S::zero().sub(&r)?;
    let mut piece = Piece { scale: Vec::with_capacity(dim), offset: Vec::with_capacity(dim) };
    for axis in 0..dim {
        let t = S::of(&m.offset[axis])?;
        if m.reflect.get(axis).copied().unwrap_or(false) {
            piece.scale.push(neg.clone());
            piece.offset.push(t.add(&r)?);
        } else {
            piece.scale.push(r.clone());
            piece.offset.push(t);
        }
    }
    Some(piece)
}

/// Builds with exact rational pieces, falling back to floating point when
/// the exact arithmetic overflows.
fn subdivide(
    dim: usize,
    stages: Vec<Vec<Piece<Rational>>>,
    depth: u32,
    max_level: u32,
    opts: BuildOptions,
) -> Result<Realization, SetError> {
    let float_stages: Vec<Vec<Piece<f64>>> = stages
        .iter()
        .map(|maps| {
            maps.iter()
                .map(|p| Piece {
                    scale: p.scale.iter().map(Scalar::to_f64).collect(),
                    offset: p.offset.iter().map(Scalar::to_f64).collect(),
                })
                .collect()
        })
        .collect();
    let exact = PieceOracle::new(dim, stages, depth);
    let tree = build_from_oracle(&exact, max_level, opts);
    if !exact.overflowed() {
        return Ok(Realization { tree: tree?, method: Method::SubdivisionExact { depth }, normalization: None });
    }
    let o = PieceOracle::new(dim, float_stages, depth);
    let tree = build_from_oracle(&o as &dyn OccupancyOracle, max_level, opts)?;
    Ok(Realization { tree, method: Method::SubdivisionFloat { depth }, normalization: None })
}
