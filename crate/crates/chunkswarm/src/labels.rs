//! Finite-set algebra on chunk labels.
//!
//! A peer is classified solely by its *label*: the subset A of the n file
//! chunks it currently holds. Labels are encoded as n-bit masks (chunk i
//! maps to bit i-1), so subset tests are single bitwise operations and a
//! label's mask doubles as its index into the 2^n-dimensional state
//! vectors used by the rest of the crate.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Largest supported chunk count. State vectors are dense with 2^n
/// entries, so 16 keeps them comfortably in memory (65 536 labels).
pub const MAX_CHUNKS: u8 = 16;

/// A subset of the n chunks, the peer's label.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChunkLabel {
    n: u8,
    mask: u32,
}

impl ChunkLabel {
    /// The empty label over n chunks.
    pub fn empty(n: u8) -> Result<Self> {
        check_chunk_count(n)?;
        Ok(Self { n, mask: 0 })
    }

    /// The full label F (all n chunks).
    pub fn full(n: u8) -> Result<Self> {
        check_chunk_count(n)?;
        Ok(Self { n, mask: full_mask(n) })
    }

    /// Label from a raw bit mask (bit i-1 set means chunk i is held).
    pub fn from_mask(n: u8, mask: u32) -> Result<Self> {
        check_chunk_count(n)?;
        if mask & !full_mask(n) != 0 {
            return Err(Error::InvalidChunkIndex {
                index: 32 - mask.leading_zeros(),
                n,
            });
        }
        Ok(Self { n, mask })
    }

    /// Label from 1-based chunk indices.
    pub fn from_indices(n: u8, indices: &[u32]) -> Result<Self> {
        check_chunk_count(n)?;
        let mut mask = 0u32;
        for &i in indices {
            if i == 0 || i > u32::from(n) {
                return Err(Error::InvalidChunkIndex { index: i, n });
            }
            mask |= 1 << (i - 1);
        }
        Ok(Self { n, mask })
    }

    pub fn n(&self) -> u8 {
        self.n
    }

    /// The raw mask; also the label's position in `enumerate_labels`.
    pub fn mask(&self) -> u32 {
        self.mask
    }

    pub fn index(&self) -> usize {
        self.mask as usize
    }

    /// Number of chunks held, |A|.
    pub fn len(&self) -> u32 {
        self.mask.count_ones()
    }

    pub fn is_empty(&self) -> bool {
        self.mask == 0
    }

    pub fn is_full(&self) -> bool {
        self.mask == full_mask(self.n)
    }

    pub fn contains(&self, chunk: u32) -> bool {
        chunk >= 1 && chunk <= u32::from(self.n) && self.mask & (1 << (chunk - 1)) != 0
    }

    /// Held chunk indices in ascending order.
    pub fn indices(&self) -> Vec<u32> {
        (1..=u32::from(self.n)).filter(|&i| self.contains(i)).collect()
    }

    /// Non-strict subset test, A ⊆ B.
    pub fn is_subset(&self, other: &ChunkLabel) -> Result<bool> {
        self.check_same_n(other)?;
        Ok(mask::is_subset(self.mask, other.mask))
    }

    /// One-chunk extension test: A ⊂ A' with |A' - A| = 1.
    pub fn covers(&self, other: &ChunkLabel) -> Result<bool> {
        self.check_same_n(other)?;
        Ok(mask::covers(self.mask, other.mask))
    }

    /// Comparability: A ⊆ B or B ⊆ A. Two peers can swap exactly when
    /// their labels do *not* relate.
    pub fn relates(&self, other: &ChunkLabel) -> Result<bool> {
        self.check_same_n(other)?;
        Ok(mask::relates(self.mask, other.mask))
    }

    fn check_same_n(&self, other: &ChunkLabel) -> Result<()> {
        if self.n != other.n {
            return Err(Error::ChunkCountMismatch { left: self.n, right: other.n });
        }
        Ok(())
    }
}

/// All 2^n labels in ascending mask order, so the label at position m has
/// mask value m. This fixes the indexing of every state vector.
pub fn enumerate_labels(n: u8) -> Result<Vec<ChunkLabel>> {
    check_chunk_count(n)?;
    Ok((0..1u32 << n).map(|mask| ChunkLabel { n, mask }).collect())
}

pub(crate) fn check_chunk_count(n: u8) -> Result<()> {
    if n == 0 || n > MAX_CHUNKS {
        return Err(Error::ChunkCountOutOfRange(n));
    }
    Ok(())
}

pub(crate) fn full_mask(n: u8) -> u32 {
    (1u32 << n) - 1
}

/// Number of labels, 2^n.
pub(crate) fn num_labels(n: u8) -> usize {
    1usize << n
}

impl serde::Serialize for ChunkLabel {
    /// Labels serialize as their textual form, e.g. `"{1,3}"`.
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl fmt::Display for ChunkLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        let mut first = true;
        for i in self.indices() {
            if !first {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
            first = false;
        }
        write!(f, "}}")
    }
}

impl fmt::Debug for ChunkLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}/{}", self.n)
    }
}

/// Parses the textual form used in configs and reports: `{}`, `{1}`, `{1,3}`.
/// The chunk count is taken from the largest index present, so labels read
/// this way usually need `from_indices` with an explicit n instead; this
/// impl exists for contexts where n is re-checked afterwards.
pub(crate) fn parse_label_indices(s: &str) -> Result<Vec<u32>> {
    let inner = s
        .trim()
        .strip_prefix('{')
        .and_then(|t| t.strip_suffix('}'))
        .ok_or_else(|| Error::LabelParse(s.to_string()))?;
    let inner = inner.trim();
    if inner.is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<u32>()
                .map_err(|_| Error::LabelParse(s.to_string()))
        })
        .collect()
}

impl FromStr for ChunkLabel {
    type Err = Error;

    /// Parses `{i,j,...}` with n set to the largest index present (at least 1).
    fn from_str(s: &str) -> Result<Self> {
        let indices = parse_label_indices(s)?;
        let n = indices.iter().copied().max().unwrap_or(1) as u8;
        ChunkLabel::from_indices(n, &indices)
    }
}

/// Raw-mask set algebra shared by the rate and vector-field evaluators.
pub(crate) mod mask {
    /// A ⊆ B.
    #[inline]
    pub fn is_subset(a: u32, b: u32) -> bool {
        a & !b == 0
    }

    /// A ⊂ A' with |A' - A| = 1.
    #[inline]
    pub fn covers(a: u32, a_prime: u32) -> bool {
        is_subset(a, a_prime) && (a_prime & !a).count_ones() == 1
    }

    /// A ⊆ B or B ⊆ A.
    #[inline]
    pub fn relates(a: u32, b: u32) -> bool {
        is_subset(a, b) || is_subset(b, a)
    }

    /// |B \ A|.
    #[inline]
    pub fn diff_size(b: u32, a: u32) -> u32 {
        (b & !a).count_ones()
    }

    /// Iterator over the single-bit masks of `m`.
    #[inline]
    pub fn bits(m: u32) -> Bits {
        Bits(m)
    }

    pub struct Bits(u32);

    impl Iterator for Bits {
        type Item = u32;

        #[inline]
        fn next(&mut self) -> Option<u32> {
            if self.0 == 0 {
                return None;
            }
            let b = self.0 & self.0.wrapping_neg();
            self.0 ^= b;
            Some(b)
        }
    }

    /// Iterator over all submasks of `m`, including 0 and `m` itself.
    #[inline]
    pub fn submasks(m: u32) -> Submasks {
        Submasks { m, s: m, done: false }
    }

    pub struct Submasks {
        m: u32,
        s: u32,
        done: bool,
    }

    impl Iterator for Submasks {
        type Item = u32;

        #[inline]
        fn next(&mut self) -> Option<u32> {
            if self.done {
                return None;
            }
            let out = self.s;
            if self.s == 0 {
                self.done = true;
            } else {
                self.s = (self.s - 1) & self.m;
            }
            Some(out)
        }
    }
}
