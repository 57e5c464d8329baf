//! Coordinates on path space: the map between paths and pairs
//! `(w, alpha)`, the diagonal action of D, the odometer, the adic map in
//! these coordinates, and the change of variables into windows of `I^Z`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dyadic_group::{low_mask, pext, Config, DigitSeq, GroupElem, HARD_MAX_DEPTH, MAX_CONFIG_DEPTH};
use crate::error::{Error, Result};
use crate::graph_op::PathPrefix;

/// Storage behind a configuration on D_N.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Field {
    /// Explicit bit per element.
    Dense(Config),
    /// `w(h) = table[pext(h, free_mask)]`: constant on cosets of the
    /// subgroup generated by the generators outside `free_mask`.
    CosetTable { free_mask: u64, table: Vec<u64> },
}

impl Field {
    #[inline]
    fn value(&self, h: u64) -> bool {
        match self {
            Field::Dense(c) => c.get(h),
            Field::CosetTable { free_mask, table } => {
                let i = pext(h, *free_mask);
                (table[(i >> 6) as usize] >> (i & 63)) & 1 == 1
            }
        }
    }
}

/// A truncated point `(w, alpha)` of `I^D x I^N`: `w` on D_N, `alpha` with
/// `M` digits. The configuration is held as a shared field plus a pending
/// translation, so the group action and the adic map are O(1).
#[derive(Clone)]
pub struct CodedPoint {
    field: Arc<Field>,
    shift: u64,
    depth: u32,
    alpha: DigitSeq,
}

impl fmt::Debug for CodedPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.depth <= 8 {
            write!(f, "CodedPoint(w={}, alpha={})", self.materialize().unwrap().to_hex(), self.alpha)
        } else {
            write!(f, "CodedPoint(N={}, shift={:#x}, alpha={})", self.depth, self.shift, self.alpha)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodedRecord {
    pub n: u32,
    pub m: u32,
    pub w: String,
    pub alpha: String,
}

impl CodedPoint {
    pub fn new(w: Config, alpha: DigitSeq) -> Self {
        CodedPoint { depth: w.depth(), field: Arc::new(Field::Dense(w)), shift: 0, alpha }
    }

    /// A point whose configuration is constant on the cosets of the subgroup
    /// generated by the generators of D_depth outside `free_mask`; `table`
    /// holds one bit per coset index.
    pub fn from_coset_table(depth: u32, free_mask: u64, table: Vec<u64>, alpha: DigitSeq) -> Result<Self> {
        if depth > HARD_MAX_DEPTH {
            return Err(Error::DepthLimit { depth, limit: HARD_MAX_DEPTH });
        }
        let free_mask = free_mask & low_mask(depth);
        let cosets = 1u128 << free_mask.count_ones();
        if (table.len() as u128) * 64 < cosets {
            return Err(Error::Invalid(format!("coset table holds {} bits, need {cosets}", table.len() * 64)));
        }
        Ok(CodedPoint { field: Arc::new(Field::CosetTable { free_mask, table }), shift: 0, depth, alpha })
    }

    /// Resolution `N` of the configuration.
    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Resolution `M` of the digit sequence.
    pub fn alpha_len(&self) -> u32 {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &DigitSeq {
        &self.alpha
    }

    /// `w(h)` for a mask `h` in D_N (unchecked in release builds).
    #[inline]
    pub fn w_at(&self, h: u64) -> bool {
        debug_assert!(h <= low_mask(self.depth));
        self.field.value(h ^ self.shift)
    }

    pub fn w(&self, g: GroupElem) -> Result<bool> {
        g.check_depth(self.depth)?;
        Ok(self.w_at(g.mask()))
    }

    /// The restriction of `w` to D_k packed into an integer (k ≤ 6).
    pub fn w_block(&self, k: u32) -> Result<u64> {
        if k > 6 || k > self.depth {
            return Err(Error::Limit(format!("block of depth {k} at resolution {}", self.depth)));
        }
        let mut v = 0u64;
        for h in 0..(1u64 << k) {
            if self.w_at(h) {
                v |= 1 << h;
            }
        }
        Ok(v)
    }

    /// The configuration as an explicit bit vector.
    pub fn materialize(&self) -> Result<Config> {
        if self.depth > MAX_CONFIG_DEPTH {
            return Err(Error::DepthLimit { depth: self.depth, limit: MAX_CONFIG_DEPTH });
        }
        Config::from_fn(self.depth, |h| self.w_at(h))
    }

    pub fn with_alpha(&self, alpha: DigitSeq) -> Self {
        CodedPoint { alpha, ..self.clone() }
    }

    fn translated(&self, g: u64, alpha: DigitSeq) -> Self {
        CodedPoint { field: Arc::clone(&self.field), shift: self.shift ^ g, depth: self.depth, alpha }
    }

    pub fn to_record(&self) -> Result<CodedRecord> {
        Ok(CodedRecord {
            n: self.depth,
            m: self.alpha.len(),
            w: self.materialize()?.to_hex(),
            alpha: self.alpha.to_string(),
        })
    }

    pub fn from_record(r: &CodedRecord) -> Result<Self> {
        let alpha = DigitSeq::parse(&r.alpha)?;
        if alpha.len() != r.m {
            return Err(Error::ResolutionMismatch(format!("m = {} but {} digits", r.m, alpha.len())));
        }
        Ok(CodedPoint::new(Config::from_hex(r.n, &r.w)?, alpha))
    }

    fn same_values(&self, other: &CodedPoint) -> bool {
        if Arc::ptr_eq(&self.field, &other.field) && self.shift == other.shift {
            return true;
        }
        if let (Field::CosetTable { free_mask: f1, table: t1 }, Field::CosetTable { free_mask: f2, table: t2 }) =
            (&*self.field, &*other.field)
        {
            if f1 == f2 {
                let (s1, s2) = (pext(self.shift, *f1), pext(other.shift, *f1));
                let cosets = 1u64 << f1.count_ones();
                let bit = |t: &Vec<u64>, i: u64| (t[(i >> 6) as usize] >> (i & 63)) & 1;
                return (0..cosets).all(|i| bit(t1, i ^ s1) == bit(t2, i ^ s2));
            }
        }
        (0..=low_mask(self.depth)).all(|h| self.w_at(h) == other.w_at(h))
    }
}

impl PartialEq for CodedPoint {
    fn eq(&self, other: &Self) -> bool {
        self.depth == other.depth && self.alpha == other.alpha && self.same_values(other)
    }
}

impl Eq for CodedPoint {}

/// `(F[x], A[x])` with `F[x](g) = v_N(g + a)`, `a` the element whose
/// coefficients are the edge indices of `x`.
pub fn psi(x: &PathPrefix) -> Result<CodedPoint> {
    psi_with_offset(x, 0)
}

/// [`psi`] with an extra element XORed into the translation; a non-zero
/// `offset` breaks the bijection and exists for mutation testing of the
/// oracle suite.
#[doc(hidden)]
pub fn psi_with_offset(x: &PathPrefix, offset: u64) -> Result<CodedPoint> {
    let a = (x.alpha().bits() ^ offset) & low_mask(x.depth());
    let top = x.top();
    let w = Config::from_fn(x.depth(), |g| top.get(g ^ a))?;
    Ok(CodedPoint::new(w, *x.alpha()))
}

/// Recovers the path from `(w, alpha)`: `v_N(h) = w(h + a)`.
pub fn psi_inv(p: &CodedPoint) -> Result<PathPrefix> {
    if p.depth() != p.alpha_len() {
        return Err(Error::ResolutionMismatch(format!(
            "configuration depth {} vs {} digits",
            p.depth(),
            p.alpha_len()
        )));
    }
    let a = p.alpha.bits();
    let top = Config::from_fn(p.depth(), |h| p.w_at(h ^ a))?;
    PathPrefix::new(top, p.alpha)
}

/// `(w, alpha) -> (w(. + g), alpha + tau(g))`.
pub fn diag(g: GroupElem, p: &CodedPoint) -> Result<CodedPoint> {
    let r = p.depth().min(p.alpha_len());
    g.check_depth(r)?;
    Ok(p.translated(g.mask(), p.alpha.xor_elem(g)?))
}

/// Adds one with carry: the lowest 0 becomes 1 and every digit below it
/// becomes 0.
pub fn odometer(alpha: &DigitSeq) -> Result<DigitSeq> {
    if alpha.is_all_ones() {
        return Err(Error::Undefined { what: "odometer", resolution: alpha.len() });
    }
    let b = alpha.bits();
    let i = (!b).trailing_zeros();
    DigitSeq::from_bits((b | (1 << i)) & !low_mask(i), alpha.len())
}

/// Subtracts one with borrow.
pub fn odometer_inv(alpha: &DigitSeq) -> Result<DigitSeq> {
    if alpha.is_all_zero() {
        return Err(Error::Undefined { what: "inverse odometer", resolution: alpha.len() });
    }
    let b = alpha.bits();
    let i = b.trailing_zeros();
    DigitSeq::from_bits((b & !(1 << i)) | low_mask(i), alpha.len())
}

/// The adic map in coordinates: `(w(. + g), O(alpha))` where `g` is the
/// element with `tau(g) = O(alpha) - alpha`.
pub fn adic_on_coded(p: &CodedPoint) -> Result<CodedPoint> {
    let next = odometer(&p.alpha)?;
    let g = next.bits() ^ p.alpha.bits();
    if g > low_mask(p.depth()) {
        return Err(Error::ResolutionEscape(format!(
            "carry {g:#x} leaves D_{} (alpha = {})",
            p.depth(),
            p.alpha
        )));
    }
    Ok(p.translated(g, next))
}

/// A finite window `[lo, hi]` of a point of `I^Z`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ZWindow {
    lo: i64,
    bits: Vec<u8>,
}

impl ZWindow {
    pub fn new(lo: i64, bits: Vec<u8>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::Invalid("empty window".into()));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Invalid("window values must be binary".into()));
        }
        Ok(ZWindow { lo, bits })
    }

    pub fn from_fn(lo: i64, hi: i64, mut f: impl FnMut(i64) -> u8) -> Result<Self> {
        if hi < lo {
            return Err(Error::Invalid(format!("window [{lo}, {hi}] is empty")));
        }
        ZWindow::new(lo, (lo..=hi).map(&mut f).collect())
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.bits.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, k: i64) -> Option<u8> {
        if k < self.lo {
            return None;
        }
        self.bits.get((k - self.lo) as usize).copied()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    /// The left shift: `(S y)(k) = y(k + 1)`, defined on `[lo - 1, hi - 1]`.
    pub fn shift_left(&self) -> ZWindow {
        ZWindow { lo: self.lo - 1, bits: self.bits.clone() }
    }

    /// `S^j y` for `j ≥ 0`.
    pub fn shifted(&self, j: i64) -> ZWindow {
        ZWindow { lo: self.lo - j, bits: self.bits.clone() }
    }

    pub fn restrict(&self, lo: i64, hi: i64) -> Result<ZWindow> {
        if lo < self.lo || hi > self.hi() || hi < lo {
            return Err(Error::ResolutionEscape(format!(
                "[{lo}, {hi}] not inside [{}, {}]",
                self.lo,
                self.hi()
            )));
        }
        Ok(ZWindow { lo, bits: self.bits[(lo - self.lo) as usize..=(hi - self.lo) as usize].to_vec() })
    }

    /// The word `y[start..start+len)` packed into an integer (bit `i` =
    /// `y(start + i)`), `len ≤ 64`.
    pub fn word(&self, start: i64, len: usize) -> Result<u64> {
        if len > 64 {
            return Err(Error::Limit(format!("word length {len}")));
        }
        let mut v = 0u64;
        for i in 0..len {
            let b = self
                .get(start + i as i64)
                .ok_or_else(|| Error::ResolutionEscape(format!("coordinate {} outside window", start + i as i64)))?;
            v |= (b as u64) << i;
        }
        Ok(v)
    }
}

/// A truncated point of `I^Z x I^N`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SymbolicPoint {
    pub window: ZWindow,
    pub alpha: DigitSeq,
}

/// The product map `S x O` on symbolic points.
pub fn shift_odometer(p: &SymbolicPoint) -> Result<SymbolicPoint> {
    Ok(SymbolicPoint { window: p.window.shift_left(), alpha: odometer(&p.alpha)? })
}

/// `lambda_alpha(k)`, the element `sum beta_i g_i` with
/// `k = sum (-1)^{alpha_{i+1}} beta_i 2^i`, using all digits of `alpha`.
pub fn lambda_alpha(alpha: &DigitSeq, k: i64) -> Result<GroupElem> {
    lambda_alpha_at(alpha, k, alpha.len())
}

/// `lambda_alpha(k)` using only the first `resolution` digits.
pub fn lambda_alpha_at(alpha: &DigitSeq, k: i64, resolution: u32) -> Result<GroupElem> {
    let r = resolution.min(alpha.len()).min(HARD_MAX_DEPTH);
    let a = alpha.prefix_int(r) as i128;
    let s = k as i128 + a;
    if s < 0 || s > low_mask(r) as i128 {
        return Err(Error::ResolutionEscape(format!(
            "{k} outside the representable segment [{}, {}]",
            -a,
            low_mask(r) as i128 - a
        )));
    }
    Ok(GroupElem::from_mask_unchecked((s as u64) ^ (a as u64)))
}

/// The window `k -> w(lambda_alpha(k))` on `[-half_width, half_width]`.
pub fn lambda_window(p: &CodedPoint, half_width: i64) -> Result<ZWindow> {
    lambda_window_range(p, -half_width, half_width)
}

pub fn lambda_window_range(p: &CodedPoint, lo: i64, hi: i64) -> Result<ZWindow> {
    let r = p.depth().min(p.alpha_len());
    let mut bits = Vec::with_capacity((hi - lo + 1).max(0) as usize);
    for k in lo..=hi {
        let g = lambda_alpha_at(&p.alpha, k, r)?;
        bits.push(p.w_at(g.mask()) as u8);
    }
    ZWindow::new(lo, bits)
}

/// The image of `p` under the fibrewise change of variables, as a symbolic
/// point with window `[lo, hi]`.
pub fn lambda_point(p: &CodedPoint, lo: i64, hi: i64) -> Result<SymbolicPoint> {
    Ok(SymbolicPoint { window: lambda_window_range(p, lo, hi)?, alpha: p.alpha })
}
