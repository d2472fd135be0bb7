//! Point files: UTF-8 text, one point per line, whitespace-separated
//! coordinates, `#` starts a comment.

use std::path::Path;

use super::SetError;

/// Uniform similarity `x -> scale * (x - origin)` applied by normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub origin: Vec<f64>,
    pub scale: f64,
}

impl Normalization {
    pub fn apply(&self, p: &mut [f64]) {
        for (x, o) in p.iter_mut().zip(&self.origin) {
            *x = (*x - o) * self.scale;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
    pub normalization: Option<Normalization>,
}

pub fn ingest_points(path: &Path, normalize: bool, max_level: u32) -> Result<PointSet, SetError> {
    let text = std::fs::read_to_string(path).map_err(|e| SetError::io(path, e))?;
    parse_points(&text, normalize, max_level)
}

/// Parses point text. With `normalize`, the bounding box is mapped by a
/// uniform scaling into `[0, 1 - eps)^d` with `eps = 2^-(max_level+1)`, which
/// preserves the set's geometry and keeps every point off the upper faces.
pub fn parse_points(text: &str, normalize: bool, max_level: u32) -> Result<PointSet, SetError> {
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut p = Vec::new();
        for tok in content.split_whitespace() {
            match tok.parse::<f64>() {
                Ok(x) if x.is_finite() => p.push(x),
                _ => return Err(SetError::Malformed { line, message: format!("cannot parse {tok:?} as a number") }),
            }
        }
        if let Some(first) = points.first() {
            if p.len() != first.len() {
                return Err(SetError::Arity { line, expected: first.len(), got: p.len() });
            }
        }
        if p.len() > crate::cube::MAX_DIM {
            return Err(SetError::Malformed { line, message: format!("{} coordinates exceed the supported dimension", p.len()) });
        }
        points.push(p);
        lines.push(line);
    }
    let Some(dim) = points.first().map(Vec::len) else {
        return Err(SetError::EmptyPointSet);
    };

    if !normalize {
        for (p, &line) in points.iter().zip(&lines) {
            if let Some(&value) = p.iter().find(|x| !(0.0..1.0).contains(*x)) {
                return Err(SetError::OutOfRange { line, value });
            }
        }
        return Ok(PointSet { dim, points, normalization: None });
    }

    let mut origin = vec![f64::INFINITY; dim];
    let mut top = vec![f64::NEG_INFINITY; dim];
    for p in &points {
        for (axis, &x) in p.iter().enumerate() {
            origin[axis] = origin[axis].min(x);
            top[axis] = top[axis].max(x);
        }
    }
    let extent = origin.iter().zip(&top).map(|(a, b)| b - a).fold(0.0, f64::max);
    let eps = (-(max_level as f64) - 1.0).exp2();
    let scale = if extent > 0.0 { (1.0 - 2.0 * eps) / extent } else { 1.0 };
    let norm = Normalization { origin, scale };
    for p in &mut points {
        norm.apply(p);
        for x in p.iter_mut() {
            // Rounding can leave tiny negatives at the lower face.
            *x = x.clamp(0.0, 1.0 - 2.0 * eps);
        }
    }
    Ok(PointSet { dim, points, normalization: Some(norm) })
}
