//! Binary tree file.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "DYOT"  u16 version  u8 dim  u8 max_level
//! for n in 0..=max_level:
//!     u64 count
//!     count x u64 code            (sorted)
//!     count x u8 children count   (omitted at max_level)
//! u32 CRC-32 of every preceding byte
//! ```
//!
//! The file always holds the expanded tree; loading re-derives the compressed
//! form, so files are independent of the in-memory representation.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::tree::{assemble, OccupancyTree, TreeError};

pub const TREE_MAGIC: &[u8; 4] = b"DYOT";
pub const TREE_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic: not a {0} file")]
    BadMagic(&'static str),
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("file is truncated")]
    Truncated,
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("invalid content: {0}")]
    Invalid(String),
}

impl From<TreeError> for FormatError {
    fn from(e: TreeError) -> Self {
        FormatError::Invalid(e.to_string())
    }
}

/// Writer that checksums everything passing through it.
pub(crate) struct CrcWriter<W> {
    inner: W,
    hasher: crc32fast::Hasher,
}

impl<W: Write> CrcWriter<W> {
    pub(crate) fn new(inner: W) -> Self {
        CrcWriter { inner, hasher: crc32fast::Hasher::new() }
    }

    /// Appends the checksum and returns it with the inner writer.
    pub(crate) fn finish(mut self) -> io::Result<(u32, W)> {
        let crc = self.hasher.clone().finalize();
        self.inner.write_all(&crc.to_le_bytes())?;
        self.inner.flush()?;
        Ok((crc, self.inner))
    }
}

impl<W: Write> Write for CrcWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

/// Little-endian cursor over a byte buffer; running out is `Truncated`.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(FormatError::Truncated)?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub(crate) fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_bits(self.u64()?))
    }

    /// Length of a block of `count` items of `width` bytes, if it fits.
    pub(crate) fn block(&self, count: u64, width: usize) -> Result<usize, FormatError> {
        let len = usize::try_from(count).ok().and_then(|c| c.checked_mul(width)).ok_or(FormatError::Truncated)?;
        if len > self.buf.len() - self.pos {
            return Err(FormatError::Truncated);
        }
        Ok(len)
    }

    /// Checks the trailing checksum and that nothing follows it.
    pub(crate) fn finish(mut self) -> Result<(), FormatError> {
        let body = self.pos;
        let stored = self.u32()?;
        if self.pos != self.buf.len() {
            return Err(FormatError::Invalid(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        let computed = crc32fast::hash(&self.buf[..body]);
        if stored != computed {
            return Err(FormatError::ChecksumMismatch { stored, computed });
        }
        Ok(())
    }
}

/// Expanded `(code, children count)` pairs of one level.
fn expanded_level(tree: &OccupancyTree, level: u32) -> impl Iterator<Item = (u64, u32)> + '_ {
    let lv = &tree.levels[level as usize];
    let arity = tree.arity();
    let at_max = level == tree.max_level();
    let mut p = 0usize;
    tree.code_ranges(level).into_iter().flat_map(move |r| {
        let explicit = r.end - r.start == 1 && lv.codes.get(p) == Some(&(r.start as u64));
        let b = if at_max {
            0
        } else if explicit {
            lv.branching[p] as u32
        } else {
            arity
        };
        if explicit {
            p += 1;
        }
        (r.start..r.end).map(move |c| (c as u64, b))
    })
}

/// Serializes `tree` and returns the checksum written at the end.
pub fn write_tree<W: Write>(tree: &OccupancyTree, w: W) -> Result<u32, FormatError> {
    let mut w = CrcWriter::new(w);
    w.write_all(TREE_MAGIC)?;
    w.write_all(&TREE_VERSION.to_le_bytes())?;
    w.write_all(&[tree.dim() as u8, tree.max_level() as u8])?;
    for n in 0..=tree.max_level() {
        let count = u64::try_from(tree.occupied_count(n))
            .map_err(|_| FormatError::Invalid(format!("level {n} has too many cubes to store")))?;
        w.write_all(&count.to_le_bytes())?;
        for (code, _) in expanded_level(tree, n) {
            w.write_all(&code.to_le_bytes())?;
        }
        if n < tree.max_level() {
            for (_, b) in expanded_level(tree, n) {
                w.write_all(&[b as u8])?;
            }
        }
    }
    Ok(w.finish()?.0)
}

pub fn tree_to_bytes(tree: &OccupancyTree) -> Result<Vec<u8>, FormatError> {
    let mut out = Vec::new();
    write_tree(tree, &mut out)?;
    Ok(out)
}

/// Checksum of the serialized tree, computed without materializing it.
pub fn tree_checksum(tree: &OccupancyTree) -> Result<u32, FormatError> {
    write_tree(tree, io::sink())
}

pub fn save_tree(tree: &OccupancyTree, path: &Path) -> Result<u32, FormatError> {
    let file = File::create(path)?;
    write_tree(tree, BufWriter::new(file))
}

pub fn load_tree(path: &Path) -> Result<OccupancyTree, FormatError> {
    read_tree(&std::fs::read(path)?)
}

pub fn read_tree(bytes: &[u8]) -> Result<OccupancyTree, FormatError> {
    let mut r = Reader::new(bytes);
    if bytes.len() < 4 || &bytes[..4] != TREE_MAGIC {
        return Err(FormatError::BadMagic("tree"));
    }
    r.take(4)?;
    let version = r.u16()?;
    if version != TREE_VERSION {
        return Err(FormatError::VersionMismatch { found: version, expected: TREE_VERSION });
    }
    let dim = r.u8()? as usize;
    let max_level = r.u8()? as u32;
    crate::cube::check_shape(dim, max_level).map_err(|e| FormatError::Invalid(e.to_string()))?;
    if max_level == 0 {
        return Err(FormatError::Invalid("max level 0".into()));
    }
    let mut codes = Vec::with_capacity(max_level as usize + 1);
    let mut counts = Vec::with_capacity(max_level as usize);
    for n in 0..=max_level {
        let count = r.u64()?;
        let len = r.block(count, 8)?;
        let level: Vec<u64> =
            r.take(len)?.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
        codes.push(level);
        if n < max_level {
            let len = r.block(count, 1)?;
            counts.push(r.take(len)?.to_vec());
        }
    }
    r.finish()?;

    let hints = codes.iter().map(|l| vec![false; l.len()]).collect();
    let expanded = codes.clone();
    let tree = assemble(dim, max_level, codes, hints)?;
    for (n, (level, bs)) in expanded.iter().zip(&counts).enumerate() {
        for (code, (c, &b)) in expanded_level(&tree, n as u32).zip(level.iter().zip(bs)) {
            debug_assert_eq!(code.0, *c);
            if code.1 != b as u32 {
                return Err(FormatError::Invalid(format!(
                    "level {n} cube {c}: stored children count {b}, actual {}",
                    code.1
                )));
            }
        }
    }
    Ok(tree)
}
