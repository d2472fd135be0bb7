//! Set descriptions and their TOML schema.
//!
//! ```toml
//! kind = "ifs"               # or "digits", "sequence", "points"
//! dim = 1
//! [[maps]]
//! ratio = "1/3"              # strings are exact rationals, bare numbers are floats
//! offset = ["0"]
//! reflect = [false]          # optional, per axis: x -> offset + ratio * (1 - x)
//! ```
//!
//! ```toml
//! kind = "digits"
//! base = 4
//! dim = 1                    # optional, default 1
//! pattern = [[0, 3]]         # periodic: entry i constrains digit i, i+len, ...
//! # in higher dimensions an entry is { axes = [[0, 1], [1]] } (one digit
//! # set per axis) or { tuples = [[0, 0], [1, 1]] } (allowed digit tuples)
//! ```
//!
//! ```toml
//! kind = "sequence"          # {n^-p : n >= 1} together with 0, in d = 1
//! p = 1
//! ```
//!
//! ```toml
//! kind = "points"
//! file = "cloud.txt"         # relative to the spec file
//! normalize = true           # optional
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::number::Number;
use super::SetError;
use crate::cube::MAX_DIM;

/// Largest number of digit tuples `base^dim` a digit set may enumerate.
const MAX_TUPLES: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SetSpec {
    Points {
        file: PathBuf,
        #[serde(default)]
        normalize: bool,
    },
    Ifs {
        #[serde(default = "one")]
        dim: usize,
        maps: Vec<Similarity>,
    },
    Digits {
        base: u32,
        #[serde(default = "one")]
        dim: usize,
        pattern: Vec<DigitRule>,
    },
    Sequence {
        p: Number,
    },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Similarity {
    pub ratio: Number,
    pub offset: Vec<Number>,
    #[serde(default)]
    pub reflect: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum DigitRule {
    /// Same digit set on every axis.
    Digits(Vec<u32>),
    Axes { axes: Vec<Vec<u32>> },
    Tuples { tuples: Vec<Vec<u32>> },
}

impl SetSpec {
    pub fn from_toml(text: &str) -> Result<Self, SetError> {
        let spec: SetSpec = toml::from_str(text).map_err(|e| SetError::Spec(e.message().to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Reads a spec file; relative point-file paths are resolved against the
    /// spec's directory.
    pub fn load(path: &Path) -> Result<Self, SetError> {
        let text = std::fs::read_to_string(path).map_err(|e| SetError::io(path, e))?;
        let mut spec = Self::from_toml(&text)?;
        if let SetSpec::Points { file, .. } = &mut spec {
            if file.is_relative() {
                if let Some(dir) = path.parent() {
                    *file = dir.join(&*file);
                }
            }
        }
        Ok(spec)
    }

    /// Ambient dimension, when the spec fixes it.
    pub fn dim(&self) -> Option<usize> {
        match self {
            SetSpec::Points { .. } => None,
            SetSpec::Ifs { dim, .. } | SetSpec::Digits { dim, .. } => Some(*dim),
            SetSpec::Sequence { .. } => Some(1),
        }
    }

    pub fn validate(&self) -> Result<(), SetError> {
        let bad = |m: String| Err(SetError::Spec(m));
        match self {
            SetSpec::Points { .. } => Ok(()),
            SetSpec::Ifs { dim, maps } => {
                check_dim(*dim)?;
                if maps.is_empty() {
                    return bad("an IFS needs at least one map".into());
                }
                for (i, m) in maps.iter().enumerate() {
                    let r = m.ratio.value();
                    if !(r > 0.0 && r < 1.0) {
                        return bad(format!("map {i}: ratio {} outside (0,1)", m.ratio));
                    }
                    if m.offset.len() != *dim {
                        return bad(format!("map {i}: offset has {} coordinates, expected {dim}", m.offset.len()));
                    }
                    if !m.reflect.is_empty() && m.reflect.len() != *dim {
                        return bad(format!("map {i}: reflect has {} flags, expected {dim}", m.reflect.len()));
                    }
                    for (axis, t) in m.offset.iter().enumerate() {
                        let escapes = match (m.ratio.exact(), t.exact()) {
                            (Some(r), Some(t)) => t < 0.into() || r + t > 1.into(),
                            _ => t.value() < 0.0 || r + t.value() > 1.0,
                        };
                        if escapes {
                            return Err(SetError::Escapes { map: i, axis });
                        }
                    }
                }
                Ok(())
            }
            SetSpec::Digits { base, dim, pattern } => {
                check_dim(*dim)?;
                if *base < 2 {
                    return bad(format!("base {base} must be at least 2"));
                }
                if (*base as u64).checked_pow(*dim as u32).is_none_or(|n| n > MAX_TUPLES) {
                    return bad(format!("base {base} in dimension {dim} has too many digit tuples"));
                }
                if pattern.is_empty() {
                    return bad("digit pattern is empty".into());
                }
                for (i, rule) in pattern.iter().enumerate() {
                    rule.allowed(*base, *dim).map_err(|m| SetError::Spec(format!("pattern entry {i}: {m}")))?;
                }
                Ok(())
            }
            SetSpec::Sequence { p } => {
                if !p.value().is_finite() || p.value() <= 0.0 {
                    return bad(format!("sequence exponent p = {p} must be positive"));
                }
                Ok(())
            }
        }
    }
}

fn check_dim(dim: usize) -> Result<(), SetError> {
    if dim == 0 || dim > MAX_DIM {
        return Err(SetError::Spec(format!("dimension {dim} outside 1..={MAX_DIM}")));
    }
    Ok(())
}

impl DigitRule {
    /// Allowed digit tuples as a membership table indexed by
    /// `sum_i digit_i * base^i`.
    pub(crate) fn allowed(&self, base: u32, dim: usize) -> Result<Vec<bool>, String> {
        let total = (base as usize).pow(dim as u32);
        let check = |digits: &[u32]| -> Result<(), String> {
            match digits.iter().find(|&&g| g >= base) {
                Some(g) => Err(format!("digit {g} not below base {base}")),
                None => Ok(()),
            }
        };
        let per_axis: Vec<Vec<u32>> = match self {
            DigitRule::Digits(ds) => vec![ds.clone(); dim],
            DigitRule::Axes { axes } => {
                if axes.len() != dim {
                    return Err(format!("{} axis digit sets, expected {dim}", axes.len()));
                }
                axes.clone()
            }
            DigitRule::Tuples { tuples } => {
                let mut table = vec![false; total];
                for t in tuples {
                    if t.len() != dim {
                        return Err(format!("digit tuple {t:?} has {} entries, expected {dim}", t.len()));
                    }
                    check(t)?;
                    table[tuple_index(t, base)] = true;
                }
                if tuples.is_empty() {
                    return Err("allowed digit set is empty".into());
                }
                return Ok(table);
            }
        };
        for ds in &per_axis {
            if ds.is_empty() {
                return Err("allowed digit set is empty".into());
            }
            check(ds)?;
        }
        let mut t = vec![0u32; dim];
        let table = (0..total)
            .map(|idx| {
                let mut rest = idx;
                for g in t.iter_mut() {
                    *g = (rest % base as usize) as u32;
                    rest /= base as usize;
                }
                t.iter().zip(&per_axis).all(|(g, ds)| ds.contains(g))
            })
            .collect();
        Ok(table)
    }
}

pub(crate) fn tuple_index(t: &[u32], base: u32) -> usize {
    t.iter().rev().fold(0usize, |acc, &g| acc * base as usize + g as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_each_kind() {
        let s = SetSpec::from_toml("kind = \"digits\"\nbase = 4\npattern = [[0, 3]]\n").unwrap();
        assert_eq!(s, SetSpec::Digits { base: 4, dim: 1, pattern: vec![DigitRule::Digits(vec![0, 3])] });
        let s = SetSpec::from_toml(
            "kind = \"ifs\"\n[[maps]]\nratio = \"1/3\"\noffset = [\"0\"]\n[[maps]]\nratio = \"1/3\"\noffset = [\"2/3\"]\n",
        )
        .unwrap();
        assert!(matches!(s, SetSpec::Ifs { dim: 1, ref maps } if maps.len() == 2));
        let s = SetSpec::from_toml("kind = \"sequence\"\np = 1\n").unwrap();
        assert_eq!(s.dim(), Some(1));
        let s = SetSpec::from_toml("kind = \"points\"\nfile = \"a.txt\"\nnormalize = true\n").unwrap();
        assert_eq!(s, SetSpec::Points { file: "a.txt".into(), normalize: true });
        let s = SetSpec::from_toml(
            "kind = \"digits\"\nbase = 2\ndim = 2\npattern = [{ tuples = [[0, 0], [1, 1]] }, { axes = [[0, 1], [1]] }]\n",
        )
        .unwrap();
        s.validate().unwrap();
    }

    #[test]
    fn rejects_invalid_specs() {
        let err = |t: &str| SetSpec::from_toml(t).unwrap_err();
        assert!(matches!(
            err("kind = \"ifs\"\n[[maps]]\nratio = 0.5\noffset = [0.6]\n"),
            SetError::Escapes { map: 0, axis: 0 }
        ));
        assert!(matches!(err("kind = \"ifs\"\n[[maps]]\nratio = 1.5\noffset = [0]\n"), SetError::Spec(_)));
        assert!(matches!(err("kind = \"digits\"\nbase = 4\npattern = [[]]\n"), SetError::Spec(_)));
        assert!(matches!(err("kind = \"digits\"\nbase = 4\npattern = [[4]]\n"), SetError::Spec(_)));
        assert!(matches!(err("kind = \"sequence\"\np = 0\n"), SetError::Spec(_)));
        assert!(matches!(err("kind = \"blob\"\n"), SetError::Spec(_)));
        // Exact check: 2/3 + 1/3 = 1 stays inside even where floats round up.
        SetSpec::from_toml("kind = \"ifs\"\n[[maps]]\nratio = \"1/3\"\noffset = [\"2/3\"]\n").unwrap();
    }

    #[test]
    fn digit_tables() {
        let t = DigitRule::Axes { axes: vec![vec![0], vec![1, 2]] }.allowed(3, 2).unwrap();
        let on: Vec<usize> = (0..9).filter(|&i| t[i]).collect();
        assert_eq!(on, vec![tuple_index(&[0, 1], 3), tuple_index(&[0, 2], 3)]);
    }
}
