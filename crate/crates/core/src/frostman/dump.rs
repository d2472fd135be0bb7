//! Measure dumps: the cascade table at levels `L..=m`, tied to its tree file
//! by checksum.
//!
//! Text form: `key = value` header lines, then one record per explicitly
//! stored cube, `level code f sat capped`, plus one `full level f sat capped`
//! line per level giving the value shared by all cubes inside full regions.
//! Floats carry 12 significant digits.
//!
//! Binary form, little-endian:
//!
//! ```text
//! "DYOM"  u16 version  u8 dim  u8 max_level
//! f64 theta, delta, s, t   u32 m, ell, top   f64 total
//! u32 len + config hash bytes   u32 len + tree file name bytes   u32 tree crc
//! for j in top..=m:
//!     f64 full f   u8 full flags
//!     u64 count   count x (u64 code, f64 f, u8 flags)
//! u32 CRC-32 of every preceding byte
//! ```
//!
//! Flags: bit 0 saturated, bit 1 capped.

use std::io::Write;
use std::sync::Arc;

use super::{derive_params, run_cascade, CascadeMeasure, CascadeValue, FrostmanParams};
use crate::format::{CrcWriter, FormatError, Reader};
use crate::report::g12;
use crate::tree::OccupancyTree;

pub const MEASURE_MAGIC: &[u8; 4] = b"DYOM";
pub const MEASURE_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DumpFormat {
    Text,
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DumpHeader {
    pub dim: usize,
    pub max_level: u32,
    pub theta: f64,
    pub delta: f64,
    pub s: f64,
    pub t: f64,
    pub m: u32,
    pub ell: u32,
    pub top: u32,
    pub total: f64,
    pub config_hash: String,
    pub tree_file: String,
    pub tree_crc32: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DumpRecord {
    pub level: u32,
    pub code: u64,
    pub f: f64,
    pub saturated: bool,
    pub capped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureDump {
    pub format: DumpFormat,
    pub header: DumpHeader,
    /// Full-region value per level `top..=m`.
    pub full: Vec<(u32, f64, bool, bool)>,
    pub records: Vec<DumpRecord>,
}

impl DumpHeader {
    pub fn new(measure: &CascadeMeasure<f64>, config_hash: &str, tree_file: &str, tree_crc32: u32) -> Self {
        let p = measure.params();
        DumpHeader {
            dim: p.dim,
            max_level: measure.tree().max_level(),
            theta: p.theta,
            delta: p.delta,
            s: p.s,
            t: p.t,
            m: p.m,
            ell: p.ell,
            top: p.top,
            total: *measure.total(),
            config_hash: config_hash.to_string(),
            tree_file: tree_file.to_string(),
            tree_crc32,
        }
    }
}

fn flags(v: &CascadeValue<f64>) -> u8 {
    v.saturated as u8 | (v.capped as u8) << 1
}

pub fn write_dump_text<W: Write>(measure: &CascadeMeasure<f64>, header: &DumpHeader, mut w: W) -> std::io::Result<()> {
    let h = header;
    writeln!(w, "# cascade measure dump")?;
    writeln!(w, "format = 1")?;
    writeln!(w, "dim = {}", h.dim)?;
    writeln!(w, "max_level = {}", h.max_level)?;
    writeln!(w, "theta = {}", g12(h.theta))?;
    writeln!(w, "delta = {}", g12(h.delta))?;
    writeln!(w, "s = {}", g12(h.s))?;
    writeln!(w, "t = {}", g12(h.t))?;
    writeln!(w, "m = {}", h.m)?;
    writeln!(w, "ell = {}", h.ell)?;
    writeln!(w, "top = {}", h.top)?;
    writeln!(w, "levels = {}..{}", h.top, h.m)?;
    writeln!(w, "total = {}", g12(h.total))?;
    writeln!(w, "config_hash = {}", h.config_hash)?;
    writeln!(w, "tree_file = {}", h.tree_file)?;
    writeln!(w, "tree_crc32 = {:08x}", h.tree_crc32)?;
    writeln!(w, "# full <level> <f> <sat> <capped>: shared by all cubes inside full regions")?;
    for j in h.top..=h.m {
        let v = measure.full_value(j);
        writeln!(w, "full {j} {} {} {}", g12(v.f), v.saturated as u8, v.capped as u8)?;
    }
    writeln!(w, "# <level> <code> <f> <sat> <capped>")?;
    for j in h.top..=h.m {
        for (q, v) in measure.explicit_values(j) {
            writeln!(w, "{j} {} {} {} {}", q.code(), g12(v.f), v.saturated as u8, v.capped as u8)?;
        }
    }
    w.flush()
}

pub fn write_dump_binary<W: Write>(measure: &CascadeMeasure<f64>, header: &DumpHeader, w: W) -> Result<u32, FormatError> {
    let h = header;
    let mut w = CrcWriter::new(w);
    w.write_all(MEASURE_MAGIC)?;
    w.write_all(&MEASURE_VERSION.to_le_bytes())?;
    w.write_all(&[h.dim as u8, h.max_level as u8])?;
    for x in [h.theta, h.delta, h.s, h.t] {
        w.write_all(&x.to_le_bytes())?;
    }
    for x in [h.m, h.ell, h.top] {
        w.write_all(&x.to_le_bytes())?;
    }
    w.write_all(&h.total.to_le_bytes())?;
    for s in [&h.config_hash, &h.tree_file] {
        w.write_all(&(s.len() as u32).to_le_bytes())?;
        w.write_all(s.as_bytes())?;
    }
    w.write_all(&h.tree_crc32.to_le_bytes())?;
    for j in h.top..=h.m {
        let v = measure.full_value(j);
        w.write_all(&v.f.to_le_bytes())?;
        w.write_all(&[flags(v)])?;
        let count = measure.tree().explicit_count(j) as u64;
        w.write_all(&count.to_le_bytes())?;
        for (q, v) in measure.explicit_values(j) {
            w.write_all(&q.code().to_le_bytes())?;
            w.write_all(&v.f.to_le_bytes())?;
            w.write_all(&[flags(&v)])?;
        }
    }
    Ok(w.finish()?.0)
}

/// Parses either dump form, detected by the binary magic.
pub fn read_dump(bytes: &[u8]) -> Result<MeasureDump, FormatError> {
    if bytes.starts_with(MEASURE_MAGIC) {
        read_binary(bytes)
    } else {
        let text = std::str::from_utf8(bytes).map_err(|_| FormatError::BadMagic("measure dump"))?;
        read_text(text)
    }
}

fn read_binary(bytes: &[u8]) -> Result<MeasureDump, FormatError> {
    let mut r = Reader::new(bytes);
    r.take(4)?;
    let version = r.u16()?;
    if version != MEASURE_VERSION {
        return Err(FormatError::VersionMismatch { found: version, expected: MEASURE_VERSION });
    }
    let dim = r.u8()? as usize;
    let max_level = r.u8()? as u32;
    let (theta, delta, s, t) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
    let (m, ell, top) = (r.u32()?, r.u32()?, r.u32()?);
    let total = r.f64()?;
    let string = |r: &mut Reader| -> Result<String, FormatError> {
        let len = r.u32()? as u64;
        let len = r.block(len, 1)?;
        String::from_utf8(r.take(len)?.to_vec()).map_err(|_| FormatError::Invalid("non-UTF-8 string".into()))
    };
    let config_hash = string(&mut r)?;
    let tree_file = string(&mut r)?;
    let tree_crc32 = r.u32()?;
    if top > m || m > max_level {
        return Err(FormatError::Invalid(format!("level range {top}..={m} outside 0..={max_level}")));
    }
    let mut full = Vec::new();
    let mut records = Vec::new();
    for j in top..=m {
        let f = r.f64()?;
        let fl = r.u8()?;
        full.push((j, f, fl & 1 != 0, fl & 2 != 0));
        let count = r.u64()?;
        r.block(count, 17)?;
        for _ in 0..count {
            let code = r.u64()?;
            let f = r.f64()?;
            let fl = r.u8()?;
            records.push(DumpRecord { level: j, code, f, saturated: fl & 1 != 0, capped: fl & 2 != 0 });
        }
    }
    r.finish()?;
    let header = DumpHeader { dim, max_level, theta, delta, s, t, m, ell, top, total, config_hash, tree_file, tree_crc32 };
    Ok(MeasureDump { format: DumpFormat::Binary, header, full, records })
}

fn read_text(text: &str) -> Result<MeasureDump, FormatError> {
    let bad = |line: usize, msg: &str| FormatError::Invalid(format!("line {line}: {msg}"));
    let mut keys = std::collections::HashMap::new();
    let mut full = Vec::new();
    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        if let Some((k, v)) = content.split_once('=') {
            keys.insert(k.trim().to_string(), v.trim().to_string());
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        let flag = |s: &str| match s {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(bad(line, "flag must be 0 or 1")),
        };
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(line, "bad number"));
        match fields.as_slice() {
            ["full", level, f, sat, capped] => {
                let level = level.parse().map_err(|_| bad(line, "bad level"))?;
                full.push((level, num(f)?, flag(sat)?, flag(capped)?));
            }
            [level, code, f, sat, capped] => records.push(DumpRecord {
                level: level.parse().map_err(|_| bad(line, "bad level"))?,
                code: code.parse().map_err(|_| bad(line, "bad code"))?,
                f: num(f)?,
                saturated: flag(sat)?,
                capped: flag(capped)?,
            }),
            _ => return Err(bad(line, "expected a header line or a record")),
        }
    }
    let get = |k: &str| keys.get(k).ok_or_else(|| FormatError::Invalid(format!("missing header field {k}")));
    let num = |k: &str| -> Result<f64, FormatError> {
        get(k)?.parse().map_err(|_| FormatError::Invalid(format!("header field {k} is not a number")))
    };
    let int = |k: &str| -> Result<u32, FormatError> {
        get(k)?.parse().map_err(|_| FormatError::Invalid(format!("header field {k} is not an integer")))
    };
    if get("format")? != "1" {
        return Err(FormatError::VersionMismatch { found: int("format")? as u16, expected: 1 });
    }
    let header = DumpHeader {
        dim: int("dim")? as usize,
        max_level: int("max_level")?,
        theta: num("theta")?,
        delta: num("delta")?,
        s: num("s")?,
        t: num("t")?,
        m: int("m")?,
        ell: int("ell")?,
        top: int("top")?,
        total: num("total")?,
        config_hash: get("config_hash")?.clone(),
        tree_file: get("tree_file")?.clone(),
        tree_crc32: u32::from_str_radix(get("tree_crc32")?, 16)
            .map_err(|_| FormatError::Invalid("tree_crc32 is not hexadecimal".into()))?,
    };
    Ok(MeasureDump { format: DumpFormat::Text, header, full, records })
}

/// Relative agreement required between a text dump and the recomputed
/// cascade; 12 significant digits round to within half a unit of the last.
const TEXT_TOLERANCE: f64 = 1e-11;

fn close(a: f64, b: f64, format: DumpFormat) -> bool {
    match format {
        DumpFormat::Binary => a == b,
        DumpFormat::Text => (a - b).abs() <= TEXT_TOLERANCE * a.abs().max(b.abs()),
    }
}

impl MeasureDump {
    /// Recomputes the cascade on `tree` from the dumped parameters and checks
    /// that every dumped value agrees. `tree_crc32` is the checksum of the
    /// tree file actually loaded.
    pub fn rebuild(&self, tree: Arc<OccupancyTree>, tree_crc32: u32) -> Result<CascadeMeasure<f64>, String> {
        let h = &self.header;
        if tree_crc32 != h.tree_crc32 {
            return Err(format!("tree checksum {tree_crc32:08x} does not match the dump's {:08x}", h.tree_crc32));
        }
        if tree.dim() != h.dim || tree.max_level() != h.max_level {
            return Err("tree shape does not match the dump".into());
        }
        let params: FrostmanParams = derive_params(h.theta, h.delta, h.s, h.t, &tree).map_err(|e| e.to_string())?;
        if (params.m, params.ell, params.top) != (h.m, h.ell, h.top) {
            return Err(format!(
                "dumped levels m = {}, ell = {}, L = {} disagree with the parameters (m = {}, ell = {}, L = {})",
                h.m, h.ell, h.top, params.m, params.ell, params.top
            ));
        }
        let measure = run_cascade::<f64>(tree, &params);
        if !close(*measure.total(), h.total, self.format) {
            return Err(format!("dumped total {} differs from recomputed {}", h.total, measure.total()));
        }
        if self.full.len() != (h.top..=h.m).count() {
            return Err("full-region lines do not cover the level range".into());
        }
        for &(j, f, sat, capped) in &self.full {
            let v = measure.full_value(j);
            if !close(v.f, f, self.format) || v.saturated != sat || v.capped != capped {
                return Err(format!("full-region value at level {j} disagrees"));
            }
        }
        let expected: usize = (h.top..=h.m).map(|j| measure.tree().explicit_count(j)).sum();
        if self.records.len() != expected {
            return Err(format!("dump holds {} records, the cascade has {expected}", self.records.len()));
        }
        let mut it = self.records.iter();
        for j in h.top..=h.m {
            for (q, v) in measure.explicit_values(j) {
                let r = it.next().expect("counted");
                if r.level != j || r.code != q.code() {
                    return Err(format!("record for level {} code {} is out of place", r.level, r.code));
                }
                if !close(v.f, r.f, self.format) || v.saturated != r.saturated || v.capped != r.capped {
                    return Err(format!("record for cube {q} disagrees with the recomputed cascade"));
                }
            }
        }
        Ok(measure)
    }
}
