//! The group D of finitely supported binary sequences, its finite
//! subgroups D_n, digit sequences, sigma-defined subgroups and
//! configurations on D_n.
//!
//! Generators are indexed from 0 (`g_0, g_1, ...`) while digits are indexed
//! from 1 (`alpha_1, alpha_2, ...`): digit `i` of `tau(g)` is bit `i - 1` of
//! the mask of `g`.

use std::fmt;

use crate::error::{Error, Result};

/// Default bound on the depth of group elements and configurations.
pub const DEFAULT_MAX_DEPTH: u32 = 20;

/// Largest depth any mask-based type can represent.
pub const HARD_MAX_DEPTH: u32 = 63;

/// Largest depth for which a dense configuration is materialized.
pub const MAX_CONFIG_DEPTH: u32 = 26;

#[inline]
pub(crate) fn low_mask(n: u32) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// Parallel bit extract: gathers the bits of `x` selected by `mask` into the
/// low bits of the result, in increasing position order.
pub fn pext(x: u64, mask: u64) -> u64 {
    let mut out = 0u64;
    let mut m = mask;
    let mut k = 0;
    while m != 0 {
        let bit = m & m.wrapping_neg();
        if x & bit != 0 {
            out |= 1 << k;
        }
        k += 1;
        m &= m - 1;
    }
    out
}

/// An element of D, stored as the mask of its generator expansion.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupElem(u64);

impl GroupElem {
    pub const ZERO: GroupElem = GroupElem(0);

    /// Element with the given mask, rejected beyond [`DEFAULT_MAX_DEPTH`].
    pub fn new(mask: u64) -> Result<Self> {
        Self::with_limit(mask, DEFAULT_MAX_DEPTH)
    }

    /// Element with the given mask, rejected beyond depth `limit`.
    pub fn with_limit(mask: u64, limit: u32) -> Result<Self> {
        let limit = limit.min(HARD_MAX_DEPTH);
        if mask > low_mask(limit) {
            return Err(Error::OutOfGroup { mask, depth: limit });
        }
        Ok(GroupElem(mask))
    }

    pub(crate) const fn from_mask_unchecked(mask: u64) -> Self {
        GroupElem(mask)
    }

    /// The generator `g_i`.
    pub fn generator(i: u32) -> Result<Self> {
        if i >= DEFAULT_MAX_DEPTH {
            return Err(Error::DepthLimit { depth: i + 1, limit: DEFAULT_MAX_DEPTH });
        }
        Ok(GroupElem(1 << i))
    }

    pub fn mask(self) -> u64 {
        self.0
    }

    /// Group addition.
    pub fn add(self, other: GroupElem) -> GroupElem {
        GroupElem(self.0 ^ other.0)
    }

    /// Membership in D_n.
    pub fn in_depth(self, n: u32) -> bool {
        self.0 <= low_mask(n)
    }

    /// Smallest `n` with `self` in D_n.
    pub fn depth(self) -> u32 {
        64 - self.0.leading_zeros()
    }

    pub fn check_depth(self, n: u32) -> Result<()> {
        if self.in_depth(n) {
            Ok(())
        } else {
            Err(Error::OutOfGroup { mask: self.0, depth: n })
        }
    }

    /// All elements of D_n in mask order.
    pub fn all(n: u32) -> impl Iterator<Item = GroupElem> {
        (0..=low_mask(n)).map(GroupElem)
    }
}

impl std::ops::Add for GroupElem {
    type Output = GroupElem;
    fn add(self, rhs: GroupElem) -> GroupElem {
        GroupElem(self.0 ^ rhs.0)
    }
}

/// A finite prefix `(alpha_1, ..., alpha_len)` of a binary sequence.
/// Digit `i` is stored in bit `i - 1`.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct DigitSeq {
    bits: u64,
    len: u32,
}

impl DigitSeq {
    pub fn zeros(len: u32) -> Result<Self> {
        Self::from_bits(0, len)
    }

    pub fn ones(len: u32) -> Result<Self> {
        Self::from_bits(low_mask(len), len)
    }

    pub fn from_bits(bits: u64, len: u32) -> Result<Self> {
        if len > 64 {
            return Err(Error::DepthLimit { depth: len, limit: 64 });
        }
        if bits & !low_mask(len) != 0 {
            return Err(Error::Invalid(format!(
                "digit bits {bits:#x} do not fit in {len} digits"
            )));
        }
        Ok(DigitSeq { bits, len })
    }

    pub fn from_digits(digits: &[u8]) -> Result<Self> {
        let mut bits = 0u64;
        for (i, &d) in digits.iter().enumerate() {
            match d {
                0 => {}
                1 => bits |= 1u64.checked_shl(i as u32).unwrap_or(0),
                _ => return Err(Error::Invalid(format!("digit {d} is not binary"))),
            }
        }
        Self::from_bits(bits, digits.len() as u32)
    }

    /// Parses a string of `0`/`1`, first character = `alpha_1`.
    pub fn parse(s: &str) -> Result<Self> {
        let digits: Vec<u8> = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(Error::Invalid(format!("bad digit '{c}'"))),
            })
            .collect::<Result<_>>()?;
        Self::from_digits(&digits)
    }

    pub fn len(&self) -> u32 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    /// The integer `sum 2^(i-1) alpha_i`.
    pub fn as_int(&self) -> u64 {
        self.bits
    }

    /// Digit `i`, 1-based.
    pub fn digit(&self, i: u32) -> Result<u8> {
        if i == 0 || i > self.len {
            return Err(Error::Invalid(format!("digit index {i} outside 1..={}", self.len)));
        }
        Ok(((self.bits >> (i - 1)) & 1) as u8)
    }

    pub fn digits(&self) -> Vec<u8> {
        (0..self.len).map(|i| ((self.bits >> i) & 1) as u8).collect()
    }

    /// Low `n` digits as an integer (`r(n, alpha)`).
    pub fn prefix_int(&self, n: u32) -> u64 {
        self.bits & low_mask(n.min(self.len))
    }

    pub fn is_all_ones(&self) -> bool {
        self.bits == low_mask(self.len)
    }

    pub fn is_all_zero(&self) -> bool {
        self.bits == 0
    }

    /// Digitwise XOR with the digits of `tau(g)`.
    pub fn xor_elem(&self, g: GroupElem) -> Result<Self> {
        Self::from_bits(self.bits ^ g.mask(), self.len)
    }

    /// Digitwise XOR; lengths must agree.
    pub fn xor(&self, other: &DigitSeq) -> Result<Self> {
        if self.len != other.len {
            return Err(Error::ResolutionMismatch(format!(
                "digit lengths {} and {}",
                self.len, other.len
            )));
        }
        Ok(DigitSeq { bits: self.bits ^ other.bits, len: self.len })
    }

    /// Same digits, extended by zeros (or truncated) to `len`.
    pub fn resized(&self, len: u32) -> Result<Self> {
        Self::from_bits(self.bits & low_mask(len), len)
    }
}

impl fmt::Display for DigitSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            write!(f, "{}", (self.bits >> i) & 1)?;
        }
        Ok(())
    }
}

/// The digit sequence of the coefficients of `g`, padded with zeros to 64
/// digits.
pub fn tau(g: GroupElem) -> DigitSeq {
    DigitSeq { bits: g.mask(), len: 64 }
}

/// `tau(g)` truncated to `len` digits; fails if `g` has a generator at or
/// beyond position `len`.
pub fn tau_n(g: GroupElem, len: u32) -> Result<DigitSeq> {
    DigitSeq::from_bits(g.mask(), len).map_err(|_| Error::OutOfGroup { mask: g.mask(), depth: len })
}

/// Inverse of [`tau`] on finitely supported sequences.
pub fn tau_inv(alpha: &DigitSeq) -> GroupElem {
    GroupElem(alpha.bits())
}

/// A finite sigma sequence `(sigma_0, ..., sigma_{len-1})`; positions at or
/// beyond `len` read as 0.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct SigmaSeq {
    bits: u64,
    len: u32,
}

impl SigmaSeq {
    pub fn from_bits(bits: u64, len: u32) -> Result<Self> {
        if len > HARD_MAX_DEPTH {
            return Err(Error::DepthLimit { depth: len, limit: HARD_MAX_DEPTH });
        }
        if bits & !low_mask(len) != 0 {
            return Err(Error::Invalid("sigma bits beyond its length".into()));
        }
        Ok(SigmaSeq { bits, len })
    }

    /// Parses `"10101010"`; the first character is `sigma_0`.
    pub fn parse(s: &str) -> Result<Self> {
        let mut bits = 0u64;
        let mut len = 0u32;
        for c in s.chars() {
            match c {
                '0' => {}
                '1' => bits |= 1u64 << len.min(63),
                '_' | ' ' => continue,
                _ => return Err(Error::Invalid(format!("bad sigma digit '{c}'"))),
            }
            len += 1;
            if len > HARD_MAX_DEPTH {
                return Err(Error::DepthLimit { depth: len, limit: HARD_MAX_DEPTH });
            }
        }
        Ok(SigmaSeq { bits, len })
    }

    /// The sigma whose ones mark the generators outside the subgroup `H`
    /// spanned by the generators in `h_mask`, over depth `n`.
    pub fn complement_of(h_mask: u64, n: u32) -> Result<Self> {
        Self::from_bits(!h_mask & low_mask(n), n)
    }

    pub fn constant(bit: bool, len: u32) -> Result<Self> {
        Self::from_bits(if bit { low_mask(len) } else { 0 }, len)
    }

    pub fn len(&self) -> u32 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bit(&self, i: u32) -> bool {
        i < 64 && (self.bits >> i) & 1 == 1
    }

    /// `sum_{i<n} sigma_i`.
    pub fn ones_below(&self, n: u32) -> u32 {
        (self.bits & low_mask(n)).count_ones()
    }

    /// Generators of the complementary subgroup within D_n.
    pub fn free_mask(&self, n: u32) -> u64 {
        self.bits & low_mask(n)
    }

    /// Generators of the subgroup D^sigma within D_n.
    pub fn subgroup_mask(&self, n: u32) -> u64 {
        !self.bits & low_mask(n)
    }
}

impl fmt::Display for SigmaSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            write!(f, "{}", (self.bits >> i) & 1)?;
        }
        Ok(())
    }
}

/// Index of the coset of `D^sigma ∩ D_n` containing `g`: the bits of `g` at
/// the positions where `sigma_i = 1`, packed in increasing position order.
pub fn coset_index(g: GroupElem, sigma: &SigmaSeq, n: u32) -> Result<u64> {
    g.check_depth(n)?;
    Ok(pext(g.mask(), sigma.free_mask(n)))
}

/// A configuration `w` on D_n: one bit per element, indexed by mask.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Config {
    depth: u32,
    words: Vec<u64>,
}

impl fmt::Debug for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Config(D_{}, {})", self.depth, self.to_hex())
    }
}

impl Config {
    pub fn zeros(depth: u32) -> Result<Self> {
        if depth > MAX_CONFIG_DEPTH {
            return Err(Error::DepthLimit { depth, limit: MAX_CONFIG_DEPTH });
        }
        let nwords = ((1usize << depth) + 63) / 64;
        Ok(Config { depth, words: vec![0; nwords] })
    }

    pub fn from_fn(depth: u32, mut f: impl FnMut(u64) -> bool) -> Result<Self> {
        let mut c = Self::zeros(depth)?;
        for h in 0..c.len() as u64 {
            if f(h) {
                c.set(h, true);
            }
        }
        Ok(c)
    }

    /// Configuration on D_depth whose bits are the low `2^depth` bits of
    /// `value` (depth at most 6).
    pub fn from_u64(depth: u32, value: u64) -> Result<Self> {
        if depth > 6 {
            return Err(Error::DepthLimit { depth, limit: 6 });
        }
        let mut c = Self::zeros(depth)?;
        c.words[0] = value & low_mask(1 << depth);
        Ok(c)
    }

    /// The low 64 bits (the whole configuration when depth ≤ 6).
    pub fn low_word(&self) -> u64 {
        self.words[0]
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn len(&self) -> usize {
        1usize << self.depth
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn get(&self, h: u64) -> bool {
        debug_assert!(h < self.len() as u64);
        (self.words[(h >> 6) as usize] >> (h & 63)) & 1 == 1
    }

    /// `w(g)` with a membership check.
    pub fn value(&self, g: GroupElem) -> Result<bool> {
        g.check_depth(self.depth)?;
        Ok(self.get(g.mask()))
    }

    #[inline]
    pub fn set(&mut self, h: u64, b: bool) {
        let (i, s) = ((h >> 6) as usize, h & 63);
        if b {
            self.words[i] |= 1 << s;
        } else {
            self.words[i] &= !(1 << s);
        }
    }

    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    /// Restriction to D_n.
    pub fn restrict(&self, n: u32) -> Result<Self> {
        if n > self.depth {
            return Err(Error::OutOfGroup { mask: low_mask(n), depth: self.depth });
        }
        Config::from_fn(n, |h| self.get(h))
    }

    /// Lower half (`h < 2^(depth-1)`).
    pub fn lower_half(&self) -> Result<Self> {
        if self.depth == 0 {
            return Err(Error::Invalid("floor-0 label has no halves".into()));
        }
        self.restrict(self.depth - 1)
    }

    /// Upper half, re-indexed by `h ^ 2^(depth-1)`.
    pub fn upper_half(&self) -> Result<Self> {
        if self.depth == 0 {
            return Err(Error::Invalid("floor-0 label has no halves".into()));
        }
        let top = 1u64 << (self.depth - 1);
        Config::from_fn(self.depth - 1, |h| self.get(h ^ top))
    }

    /// The label `(lower, upper)` one floor up.
    pub fn concat(lower: &Config, upper: &Config) -> Result<Self> {
        if lower.depth != upper.depth {
            return Err(Error::DepthMismatch(lower.depth, upper.depth));
        }
        let top = 1u64 << lower.depth;
        Config::from_fn(lower.depth + 1, |h| {
            if h < top {
                lower.get(h)
            } else {
                upper.get(h ^ top)
            }
        })
    }

    /// `h -> w(h + g)`.
    pub fn shifted(&self, g: GroupElem) -> Result<Self> {
        g.check_depth(self.depth)?;
        let m = g.mask();
        Config::from_fn(self.depth, |h| self.get(h ^ m))
    }

    /// Hex dump; character `i` encodes bits `4i..4i+3`, lowest bit first.
    pub fn to_hex(&self) -> String {
        let nibbles = (self.len() + 3) / 4;
        (0..nibbles)
            .map(|i| {
                let v = (self.words[i / 16] >> ((i % 16) * 4)) & 0xf;
                char::from_digit(v as u32, 16).unwrap()
            })
            .collect()
    }

    pub fn from_hex(depth: u32, s: &str) -> Result<Self> {
        let mut c = Self::zeros(depth)?;
        let nibbles = (c.len() + 3) / 4;
        if s.len() != nibbles {
            return Err(Error::Invalid(format!("expected {nibbles} hex digits, got {}", s.len())));
        }
        for (i, ch) in s.chars().enumerate() {
            let v = ch
                .to_digit(16)
                .ok_or_else(|| Error::Invalid(format!("bad hex digit '{ch}'")))? as u64;
            c.words[i / 16] |= v << ((i % 16) * 4);
        }
        if c.len() < 4 && c.words[0] >> c.len() != 0 {
            return Err(Error::Invalid("hex value exceeds configuration size".into()));
        }
        Ok(c)
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len() as u64).map(move |h| self.get(h))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn group_laws_exhaustive_below_256() {
        for a in 0..256u64 {
            let ga = GroupElem::new(a).unwrap();
            assert_eq!(ga + GroupElem::ZERO, ga);
            assert_eq!(ga + ga, GroupElem::ZERO);
            for b in 0..256u64 {
                let gb = GroupElem::new(b).unwrap();
                for c in [0u64, 1, 7, 128, 255, a ^ b] {
                    let gc = GroupElem::new(c).unwrap();
                    assert_eq!((ga + gb) + gc, ga + (gb + gc));
                }
            }
        }
    }

    #[test]
    fn depth_limit_rejects_large_masks() {
        assert!(GroupElem::new(1 << 19).is_ok());
        assert!(GroupElem::new(1 << 20).is_err());
        assert!(GroupElem::with_limit(1 << 30, 40).is_ok());
        assert!(GroupElem::new(5).unwrap().in_depth(3));
        assert!(!GroupElem::new(5).unwrap().in_depth(2));
    }

    #[test]
    fn tau_examples() {
        assert!(tau(GroupElem::ZERO).is_all_zero());
        let g = GroupElem::new(0b101).unwrap();
        let t = tau(g);
        assert_eq!(t.digit(1).unwrap(), 1);
        assert_eq!(t.digit(2).unwrap(), 0);
        assert_eq!(t.digit(3).unwrap(), 1);
        assert!((4..=64).all(|i| t.digit(i).unwrap() == 0));
        let alpha = DigitSeq::parse("0110100").unwrap();
        assert_eq!(tau(tau_inv(&alpha)), alpha.resized(64).unwrap());
        assert_eq!(tau_n(tau_inv(&alpha), 7).unwrap(), alpha);
    }

    #[test]
    fn tau_injective_and_additive_below_2_16() {
        let mut seen = std::collections::HashSet::new();
        for m in 0..(1u64 << 16) {
            let g = GroupElem::new(m).unwrap();
            assert!(seen.insert(tau(g)));
            let h = GroupElem::new(m.wrapping_mul(40503) & 0xffff).unwrap();
            assert_eq!(tau(g + h), tau(g).xor(&tau(h)).unwrap());
        }
    }

    #[test]
    fn coset_index_examples() {
        let s11 = SigmaSeq::parse("11").unwrap();
        assert_eq!(coset_index(GroupElem::new(2).unwrap(), &s11, 2).unwrap(), 2);
        let s01 = SigmaSeq::parse("01").unwrap();
        assert_eq!(coset_index(GroupElem::new(1).unwrap(), &s01, 2).unwrap(), 0);
        assert_eq!(coset_index(GroupElem::ZERO, &s01, 2).unwrap(), 0);
        assert!(coset_index(GroupElem::new(4).unwrap(), &s01, 2).is_err());
    }

    /// Groups D_2 by membership of pairwise differences in D^sigma, without
    /// using `coset_index`.
    #[test]
    fn coset_count_matches_difference_classes() {
        let sigma = SigmaSeq::parse("01").unwrap();
        let sub = sigma.subgroup_mask(2);
        let mut classes: Vec<Vec<u64>> = Vec::new();
        for g in 0..4u64 {
            match classes.iter_mut().find(|c| (c[0] ^ g) & !sub == 0) {
                Some(c) => c.push(g),
                None => classes.push(vec![g]),
            }
        }
        assert_eq!(classes.len(), 2);
        for c in &classes {
            let idx: Vec<u64> = c
                .iter()
                .map(|&g| coset_index(GroupElem::new(g).unwrap(), &sigma, 2).unwrap())
                .collect();
            assert!(idx.iter().all(|&i| i == idx[0]));
        }
    }

    #[test]
    fn coset_index_range_exhaustive() {
        for n in 0..=8u32 {
            for bits in 0..(1u64 << n) {
                let sigma = SigmaSeq::from_bits(bits, n).unwrap();
                let set: std::collections::BTreeSet<u64> = GroupElem::all(n)
                    .map(|g| coset_index(g, &sigma, n).unwrap())
                    .collect();
                let expect = 1u64 << sigma.ones_below(n);
                assert_eq!(set.len() as u64, expect);
                assert_eq!(*set.iter().next_back().unwrap(), expect - 1);
            }
        }
    }

    #[test]
    fn config_halves_round_trip() {
        let c = Config::from_fn(4, |h| (h * 7 + 3) % 5 < 2).unwrap();
        let back = Config::concat(&c.lower_half().unwrap(), &c.upper_half().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(Config::from_hex(4, &c.to_hex()).unwrap(), c);
        let tiny = Config::from_u64(1, 0b10).unwrap();
        assert_eq!(Config::from_hex(1, &tiny.to_hex()).unwrap(), tiny);
    }

    proptest! {
        #[test]
        fn shifts_compose(bits in any::<u64>(), a in 0u64..64, b in 0u64..64) {
            let c = Config::from_u64(6, bits).unwrap();
            let ga = GroupElem::new(a).unwrap();
            let gb = GroupElem::new(b).unwrap();
            let lhs = c.shifted(ga).unwrap().shifted(gb).unwrap();
            prop_assert_eq!(lhs, c.shifted(ga + gb).unwrap());
        }

        #[test]
        fn coset_index_separates_exactly(bits in 0u64..256, g in 0u64..256, h in 0u64..256) {
            let sigma = SigmaSeq::from_bits(bits, 8).unwrap();
            let same = coset_index(GroupElem::new(g).unwrap(), &sigma, 8).unwrap()
                == coset_index(GroupElem::new(h).unwrap(), &sigma, 8).unwrap();
            prop_assert_eq!(same, (g ^ h) & sigma.free_mask(8) == 0);
        }
    }
}
