//! Fixed-width bit strings: message payloads, oracle queries and answers,
//! randomness tapes. Ordering is lexicographic (which for equal widths matches
//! numeric big-endian order), giving deterministic tie-breaking everywhere.

use std::fmt;

/// An immutable bit string. The empty string is valid (used for dummy messages).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Bits(Vec<bool>);

impl Bits {
    /// The empty bit string.
    pub fn empty() -> Self {
        Bits(Vec::new())
    }

    pub fn from_bools(bits: Vec<bool>) -> Self {
        Bits(bits)
    }

    /// Big-endian encoding of `value` into exactly `width` bits.
    /// Values that do not fit are truncated to the low `width` bits.
    pub fn from_u64(value: u64, width: usize) -> Self {
        let mut v = Vec::with_capacity(width);
        for i in (0..width).rev() {
            v.push(if i < 64 { (value >> i) & 1 == 1 } else { false });
        }
        Bits(v)
    }

    /// Big-endian numeric value. Widths above 64 bits are rejected by callers
    /// long before this could overflow (exact-mode budgets cap widths).
    pub fn to_u64(&self) -> u64 {
        self.0.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64)
    }

    pub fn width(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bit(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn concat(parts: &[Bits]) -> Self {
        let mut v = Vec::new();
        for p in parts {
            v.extend_from_slice(&p.0);
        }
        Bits(v)
    }

    /// Inclusive bit range `lo..=hi` (big-endian positions, 0 = leftmost).
    pub fn slice(&self, lo: usize, hi: usize) -> Self {
        Bits(self.0[lo..=hi].to_vec())
    }

    /// All bit strings of the given width, in ascending order.
    pub fn enumerate(width: usize) -> Vec<Bits> {
        (0..(1u64 << width)).map(|v| Bits::from_u64(v, width)).collect()
    }

    /// Parse the `#b0101` literal syntax (`#b` alone is the empty string).
    pub fn parse_literal(s: &str) -> Option<Bits> {
        let body = s.strip_prefix("#b")?;
        let mut v = Vec::with_capacity(body.len());
        for c in body.chars() {
            match c {
                '0' => v.push(false),
                '1' => v.push(true),
                _ => return None,
            }
        }
        Some(Bits(v))
    }
}

/// Bits needed to address `n` distinct indices (0 for n <= 1).
pub fn index_width(n: usize) -> usize {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#b")?;
        for &b in &self.0 {
            write!(f, "{}", if b { '1' } else { '0' })?;
        }
        Ok(())
    }
}

// Debug matches Display so transcripts stay readable in test failures.
impl fmt::Debug for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_u64() {
        for w in 0..8 {
            for v in 0..(1u64 << w) {
                let b = Bits::from_u64(v, w);
                assert_eq!(b.width(), w);
                assert_eq!(b.to_u64(), v);
            }
        }
    }

    #[test]
    fn ordering_matches_numeric_for_equal_width() {
        let all = Bits::enumerate(4);
        for i in 1..all.len() {
            assert!(all[i - 1] < all[i]);
        }
    }

    #[test]
    fn literal_syntax() {
        assert_eq!(Bits::parse_literal("#b0101"), Some(Bits::from_u64(5, 4)));
        assert_eq!(Bits::parse_literal("#b"), Some(Bits::empty()));
        assert_eq!(Bits::parse_literal("#b012"), None);
        assert_eq!(Bits::from_u64(5, 4).to_string(), "#b0101");
    }

    #[test]
    fn concat_and_slice() {
        let a = Bits::from_u64(0b10, 2);
        let b = Bits::from_u64(0b011, 3);
        let c = Bits::concat(&[a.clone(), b.clone()]);
        assert_eq!(c.to_string(), "#b10011");
        assert_eq!(c.slice(0, 1), a);
        assert_eq!(c.slice(2, 4), b);
    }
}
