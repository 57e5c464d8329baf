//! Seeded samplers for invariant measures on `I^D x I^N` and `I^Z x I^N`,
//! empirical projections onto `I^Z` conditioned on odometer cylinders, the
//! periodic-type classifier, and the aperiodic skew-product construction.
//!
//! Seeds: work is split into fixed chunks of [`CHUNK`] draws; chunk `c` of a
//! task with root seed `s` uses the stream `derive_seed(s, c)`. Results are
//! concatenated in chunk order, so output does not depend on how many
//! workers run the chunks.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coding::{CodedPoint, SymbolicPoint, ZWindow};
use crate::dyadic_group::{low_mask, DigitSeq, SigmaSeq, MAX_CONFIG_DEPTH};
use crate::error::{Error, Result};

pub type Rng = ChaCha8Rng;

/// Draws per seed chunk.
pub const CHUNK: usize = 1024;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of task `index` under root seed `root`.
pub fn derive_seed(root: u64, index: u64) -> u64 {
    splitmix64(root ^ splitmix64(index ^ 0x6a09_e667_f3bc_c909))
}

pub fn rng_from(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Runs `f(rng, count)` over chunks of `n` draws in parallel and
/// concatenates the chunk outputs in chunk order.
pub fn chunked<T, F>(n: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut Rng, usize) -> Result<Vec<T>> + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Vec<T>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let count = CHUNK.min(n - c * CHUNK);
            let mut rng = rng_from(derive_seed(seed, c as u64));
            f(&mut rng, count)
        })
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().flatten().collect())
}

fn uniform_digits(rng: &mut Rng, len: u32) -> DigitSeq {
    DigitSeq::from_bits(rng.random::<u64>() & low_mask(len), len).expect("masked")
}

/// Trailing-ones parity coding used by the period-doubling base:
/// `1` iff the number of trailing ones of `v` is even.
#[inline]
pub fn period_doubling_symbol(v: u64) -> u8 {
    ((!v).trailing_zeros() % 2 == 0) as u8
}

/// Base laws on `I^Z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BaseLaw {
    /// i.i.d. bits with `P(1) = p`.
    Bernoulli { p: f64 },
    /// `(delta_w + delta_{S^offset w}) / 2` for the periodic extension of
    /// `word`; invariant under `S^offset` when `2 * offset` is a period.
    PeriodicPair { word: Vec<u8>, offset: usize },
    /// `y(m) = period_doubling_symbol(b + m)` with `b` a uniform 2-adic
    /// integer (64 digits). The level of `y` at depth `n` is `b mod 2^n`.
    PeriodDoubling,
}

impl BaseLaw {
    /// The word `00010111` of least period 8 and its rotation by 4.
    pub fn period8_pair() -> Self {
        BaseLaw::PeriodicPair { word: vec![0, 0, 0, 1, 0, 1, 1, 1], offset: 4 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BaseLaw::Bernoulli { p } if !(0.0..=1.0).contains(p) => {
                Err(Error::Invalid(format!("Bernoulli parameter {p}")))
            }
            BaseLaw::PeriodicPair { word, .. } if word.is_empty() || word.iter().any(|&b| b > 1) => {
                Err(Error::Invalid("periodic word must be a non-empty binary word".into()))
            }
            _ => Ok(()),
        }
    }

    /// A draw restricted to `[lo, hi]`.
    pub fn draw(&self, rng: &mut Rng, lo: i64, hi: i64) -> Result<ZWindow> {
        match self {
            BaseLaw::Bernoulli { p } => ZWindow::from_fn(lo, hi, |_| rng.random_bool(*p) as u8),
            BaseLaw::PeriodicPair { word, offset } => {
                let shift = if rng.random_bool(0.5) { *offset as i64 } else { 0 };
                let period = word.len() as i64;
                ZWindow::from_fn(lo, hi, |m| word[(m + shift).rem_euclid(period) as usize])
            }
            BaseLaw::PeriodDoubling => {
                let b: u64 = rng.random();
                Ok(period_doubling_window(b, lo, hi))
            }
        }
    }

    /// A draw conditioned on the level at depth `n` being `r`, where the law
    /// carries such levels.
    pub fn draw_at_level(&self, rng: &mut Rng, lo: i64, hi: i64, r: u64, n: u32) -> Option<ZWindow> {
        match self {
            BaseLaw::PeriodDoubling => {
                let b = (rng.random::<u64>() & !low_mask(n)) | (r & low_mask(n));
                Some(period_doubling_window(b, lo, hi))
            }
            _ => None,
        }
    }
}

fn period_doubling_window(b: u64, lo: i64, hi: i64) -> ZWindow {
    ZWindow::from_fn(lo, hi, |m| period_doubling_symbol(b.wrapping_add(m as u64))).expect("non-empty")
}

/// Level-set oracle of a base law: `level(y, n) = r` iff `y ∈ B(r, n)`.
/// Under the shift the level increases by one modulo `2^n`.
pub trait LevelOracle: Send + Sync + std::fmt::Debug {
    fn level(&self, y: &ZWindow, n: u32) -> Result<u64>;
    /// Window `[lo, hi]` sufficient to decide the level at depth `n`.
    fn window(&self, n: u32) -> (i64, i64);
}

/// Decodes `b mod 2^n` from a window of a period-doubling sequence.
#[derive(Clone, Copy, Debug, Default)]
pub struct PeriodDoublingLevels;

/// Test positions per level in the decoding window.
const DECODE_REPEATS: i64 = 12;

impl LevelOracle for PeriodDoublingLevels {
    fn window(&self, n: u32) -> (i64, i64) {
        (0, DECODE_REPEATS * (1i64 << n.max(1)) - 1)
    }

    fn level(&self, y: &ZWindow, n: u32) -> Result<u64> {
        let mut c = 0u64;
        for j in 1..=n {
            let modulus = 1u64 << j;
            let expected = ((j - 1) % 2 == 0) as u8;
            let consistent = |x: u64| -> bool {
                // positions m with x + m ≡ 2^(j-1) - 1 (mod 2^j)
                let target = (modulus / 2 - 1).wrapping_sub(x) & (modulus - 1);
                let first = y.lo() + ((target as i64 - y.lo()).rem_euclid(modulus as i64));
                let mut m = first;
                while m <= y.hi() {
                    if y.get(m) != Some(expected) {
                        return false;
                    }
                    m += modulus as i64;
                }
                true
            };
            let c0 = c;
            let c1 = c | (modulus / 2);
            c = match (consistent(c0), consistent(c1)) {
                (true, false) => c0,
                (false, true) => c1,
                (true, true) => {
                    return Err(Error::Eigen(format!("window too short to decide level {j}")));
                }
                (false, false) => {
                    return Err(Error::Eigen(format!("window is not a period-doubling word at level {j}")));
                }
            };
        }
        Ok(c)
    }
}

/// Law of the configuration coordinate on D_N.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConfigLaw {
    /// Uniform on all configurations.
    Lebesgue,
    /// Uniform on configurations constant on the cosets of D^sigma.
    Sigma(SigmaSeq),
    /// Uniform on configurations invariant under the subgroup generated by
    /// the generators in `h_mask`.
    Subgroup { h_mask: u64 },
}

impl ConfigLaw {
    /// Generators (within D_depth) along which the configuration varies.
    pub fn free_mask(&self, depth: u32) -> u64 {
        match self {
            ConfigLaw::Lebesgue => low_mask(depth),
            ConfigLaw::Sigma(s) => s.free_mask(depth),
            ConfigLaw::Subgroup { h_mask } => !h_mask & low_mask(depth),
        }
    }

    /// Number of free coordinates of `w` on D_n, i.e. `log2 |D_n / H_n|`.
    pub fn free_dims(&self, n: u32) -> u32 {
        self.free_mask(n).count_ones()
    }
}

/// A drawn point.
#[derive(Clone, Debug, PartialEq)]
pub enum Sample {
    Coded(CodedPoint),
    Symbolic(SymbolicPoint),
    Digits(DigitSeq),
}

/// Resolution of drawn points: configuration depth `n`, digit count `m`,
/// and window `[lo, hi]` for symbolic points.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub n: u32,
    pub m: u32,
    pub lo: i64,
    pub hi: i64,
}

impl Resolution {
    pub fn coded(n: u32, m: u32) -> Self {
        Resolution { n, m, lo: 0, hi: 0 }
    }

    pub fn symbolic(m: u32, lo: i64, hi: i64) -> Self {
        Resolution { n: 0, m, lo, hi }
    }
}

/// The aperiodic skew product over a base law with a level structure.
#[derive(Clone, Debug)]
pub struct Aperiodic {
    pub base: BaseLaw,
    pub levels: Arc<dyn LevelOracle>,
    /// Fibre parameter; its length is the digit resolution of draws.
    pub alpha: DigitSeq,
}

/// Kinds of invariant measures.
#[derive(Clone, Debug)]
pub enum MeasureKind {
    /// The uniform measure on digit sequences.
    LebesgueM,
    /// `m^sigma` on configurations alone (digits empty).
    MSigma(SigmaSeq),
    /// `m^sigma x m`.
    OmegaSigma(SigmaSeq),
    /// `m_H x m` for the subgroup generated by the generators in `h_mask`.
    MH { h_mask: u64 },
    /// `eta x m`.
    Product(BaseLaw),
    /// Periodic type `k` with base `eta` (`eta` must be `S^{2^k}`-invariant).
    PeriodicType { k: u32, base: BaseLaw },
    /// Built by [`make_aperiodic`].
    Aperiodic(Aperiodic),
}

#[derive(Clone, Debug)]
pub struct MeasureSampler {
    pub kind: MeasureKind,
    pub seed: u64,
}

impl MeasureSampler {
    pub fn new(kind: MeasureKind, seed: u64) -> Self {
        MeasureSampler { kind, seed }
    }

    pub fn is_symbolic(&self) -> bool {
        matches!(self.kind, MeasureKind::Product(_) | MeasureKind::PeriodicType { .. } | MeasureKind::Aperiodic(_))
    }

    fn config_law(&self) -> Option<ConfigLaw> {
        match &self.kind {
            MeasureKind::MSigma(s) | MeasureKind::OmegaSigma(s) => Some(ConfigLaw::Sigma(*s)),
            MeasureKind::MH { h_mask } => Some(ConfigLaw::Subgroup { h_mask: *h_mask }),
            _ => None,
        }
    }

    /// One draw at the given resolution.
    pub fn draw(&self, rng: &mut Rng, res: &Resolution) -> Result<Sample> {
        match &self.kind {
            MeasureKind::LebesgueM => {
                if res.m > 64 {
                    return Err(Error::DepthLimit { depth: res.m, limit: 64 });
                }
                Ok(Sample::Digits(uniform_digits(rng, res.m)))
            }
            MeasureKind::MSigma(_) => {
                let law = self.config_law().unwrap();
                Ok(Sample::Coded(draw_coded_with(rng, &law, res.n, 0)?))
            }
            MeasureKind::OmegaSigma(_) | MeasureKind::MH { .. } => {
                let law = self.config_law().unwrap();
                Ok(Sample::Coded(draw_coded_with(rng, &law, res.n, res.m)?))
            }
            _ => Ok(Sample::Symbolic(self.draw_symbolic(rng, res)?)),
        }
    }

    pub fn draw_coded(&self, rng: &mut Rng, res: &Resolution) -> Result<CodedPoint> {
        match self.draw(rng, res)? {
            Sample::Coded(p) => Ok(p),
            _ => Err(Error::Invalid("sampler does not produce coded points".into())),
        }
    }

    /// A draw on `I^Z x I^N`.
    pub fn draw_symbolic(&self, rng: &mut Rng, res: &Resolution) -> Result<SymbolicPoint> {
        check_digits(res.m)?;
        match &self.kind {
            MeasureKind::Product(base) => {
                Ok(SymbolicPoint { window: base.draw(rng, res.lo, res.hi)?, alpha: uniform_digits(rng, res.m) })
            }
            MeasureKind::PeriodicType { k, base } => {
                let j = rng.random::<u64>() & low_mask(*k);
                draw_periodic(rng, base, *k, j, 0, 0, res)
            }
            MeasureKind::Aperiodic(ap) => {
                let y = base_window_for_levels(rng, &ap.base, ap.levels.as_ref(), ap.alpha.len(), res, None)?;
                finish_aperiodic(ap, y, res)
            }
            _ => Err(Error::Invalid("sampler does not produce symbolic points".into())),
        }
    }

    /// A draw conditioned on `alpha ∈ A_{r,k}` when the construction allows
    /// generating the conditioned law directly; `None` means the caller must
    /// fall back to rejection.
    pub fn draw_symbolic_in(&self, rng: &mut Rng, res: &Resolution, r: u64, k: u32) -> Result<Option<SymbolicPoint>> {
        check_digits(res.m)?;
        if k > res.m {
            return Err(Error::ResolutionEscape(format!("cylinder depth {k} beyond {} digits", res.m)));
        }
        let r = r & low_mask(k);
        match &self.kind {
            MeasureKind::Product(base) => {
                let mut alpha = uniform_digits(rng, res.m).bits();
                alpha = (alpha & !low_mask(k)) | r;
                Ok(Some(SymbolicPoint {
                    window: base.draw(rng, res.lo, res.hi)?,
                    alpha: DigitSeq::from_bits(alpha, res.m)?,
                }))
            }
            MeasureKind::PeriodicType { k: kt, base } => {
                let kt = *kt;
                let j = if k <= kt {
                    (rng.random::<u64>() & low_mask(kt) & !low_mask(k)) | r
                } else {
                    r & low_mask(kt)
                };
                draw_periodic(rng, base, kt, j, r, k, res).map(Some)
            }
            MeasureKind::Aperiodic(ap) => {
                let target = (r + ap.alpha.prefix_int(k)) & low_mask(k);
                let y = base_window_for_levels(rng, &ap.base, ap.levels.as_ref(), ap.alpha.len(), res, Some((target, k)))?;
                let Some(y) = y else { return Ok(None) };
                let p = finish_aperiodic(ap, Some(y), res)?;
                if p.alpha.prefix_int(k) != r {
                    return Err(Error::Eigen("decoded level disagrees with the conditioned draw".into()));
                }
                Ok(Some(p))
            }
            _ => Err(Error::Invalid("sampler does not produce symbolic points".into())),
        }
    }

    /// `n` draws in seed chunks.
    pub fn samples(&self, n: usize, res: &Resolution) -> Result<Vec<Sample>> {
        chunked(n, self.seed, |rng, count| (0..count).map(|_| self.draw(rng, res)).collect())
    }
}

fn check_digits(m: u32) -> Result<()> {
    if m > 64 {
        return Err(Error::DepthLimit { depth: m, limit: 64 });
    }
    Ok(())
}

/// A configuration law draw: one uniform bit per coset index.
pub fn draw_coded_with(rng: &mut Rng, law: &ConfigLaw, n: u32, m: u32) -> Result<CodedPoint> {
    check_digits(m)?;
    let free = law.free_mask(n);
    let dims = free.count_ones();
    if dims > MAX_CONFIG_DEPTH {
        return Err(Error::Limit(format!("{dims} free coordinates")));
    }
    let words = (1usize << dims).div_ceil(64);
    let mut table: Vec<u64> = (0..words).map(|_| rng.random()).collect();
    if dims < 6 {
        table[0] &= low_mask(1 << dims);
    }
    let alpha = uniform_digits(rng, m);
    CodedPoint::from_coset_table(n, free, table, alpha)
}

fn draw_periodic(
    rng: &mut Rng,
    base: &BaseLaw,
    k: u32,
    j: u64,
    r: u64,
    kc: u32,
    res: &Resolution,
) -> Result<SymbolicPoint> {
    let j = j & low_mask(k);
    let y = base.draw(rng, res.lo + j as i64, res.hi + j as i64)?;
    let window = y.shifted(j as i64);
    // digits 1..k are j; digits k+1..kc follow the conditioning value r;
    // the rest are uniform
    let mut bits = uniform_digits(rng, res.m).bits();
    let fixed = low_mask(k.max(kc).min(res.m));
    bits = (bits & !fixed) | (((r & low_mask(kc)) & !low_mask(k)) | j) & fixed;
    Ok(SymbolicPoint { window, alpha: DigitSeq::from_bits(bits, res.m)? })
}

fn base_window_for_levels(
    rng: &mut Rng,
    base: &BaseLaw,
    levels: &dyn LevelOracle,
    depth: u32,
    res: &Resolution,
    condition: Option<(u64, u32)>,
) -> Result<Option<ZWindow>> {
    let (dlo, dhi) = levels.window(depth);
    let (lo, hi) = (res.lo.min(dlo), res.hi.max(dhi));
    match condition {
        None => Ok(Some(base.draw(rng, lo, hi)?)),
        Some((r, k)) => Ok(base.draw_at_level(rng, lo, hi, r, k)),
    }
}

fn finish_aperiodic(ap: &Aperiodic, y: Option<ZWindow>, res: &Resolution) -> Result<SymbolicPoint> {
    let y = y.expect("unconditioned draw always succeeds");
    let m = ap.alpha.len();
    let level = ap.levels.level(&y, m)?;
    let beta = level.wrapping_sub(ap.alpha.as_int()) & low_mask(m);
    let beta = DigitSeq::from_bits(beta, m)?.resized(res.m.max(m))?;
    let beta = if res.m < m { beta.resized(res.m)? } else { beta };
    Ok(SymbolicPoint { window: y.restrict(res.lo, res.hi)?, alpha: beta })
}

/// Builds `nu^(alpha)[eta]` after checking that the level sets of `eta`
/// have mass `2^-n` (within four binomial standard deviations) and nest
/// consistently.
pub fn make_aperiodic(
    eta: &BaseLaw,
    levels: Arc<dyn LevelOracle>,
    alpha: DigitSeq,
    seed: u64,
) -> Result<MeasureSampler> {
    eta.validate()?;
    const CHECKS: usize = 4096;
    let depth = alpha.len().min(4);
    let (lo, hi) = levels.window(alpha.len().max(depth));
    let oracle = Arc::clone(&levels);
    let draws: Vec<Vec<u64>> = chunked(CHECKS, derive_seed(seed, u64::MAX), |rng, count| {
        (0..count)
            .map(|_| {
                let y = eta.draw(rng, lo, hi)?;
                (1..=depth).map(|n| oracle.level(&y, n)).collect::<Result<Vec<u64>>>()
            })
            .collect()
    })?;
    for n in 1..=depth {
        let mut counts = vec![0u64; 1 << n];
        for d in &draws {
            let r = d[n as usize - 1];
            if n > 1 && d[n as usize - 2] != r & low_mask(n - 1) {
                return Err(Error::Eigen(format!("level at depth {n} does not refine depth {}", n - 1)));
            }
            counts[r as usize] += 1;
        }
        let p = 1.0 / (1u64 << n) as f64;
        let mean = CHECKS as f64 * p;
        let sd = (CHECKS as f64 * p * (1.0 - p)).sqrt();
        for (r, &c) in counts.iter().enumerate() {
            if (c as f64 - mean).abs() > 4.0 * sd {
                return Err(Error::Eigen(format!("level set B({r}, {n}) has {c} of {CHECKS} draws")));
            }
        }
    }
    Ok(MeasureSampler::new(MeasureKind::Aperiodic(Aperiodic { base: eta.clone(), levels, alpha }), seed))
}

/// Frequencies of the words `y[offset..offset+len)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderTable {
    pub len: usize,
    pub freq: BTreeMap<u64, f64>,
    pub samples: u64,
}

impl CylinderTable {
    /// Total-variation distance.
    pub fn tv(&self, other: &CylinderTable) -> f64 {
        let mut s = 0.0;
        for (w, p) in &self.freq {
            s += (p - other.freq.get(w).copied().unwrap_or(0.0)).abs();
        }
        for (w, q) in &other.freq {
            if !self.freq.contains_key(w) {
                s += q;
            }
        }
        (0.5 * s).clamp(0.0, 1.0)
    }

    /// Convex combination of tables.
    pub fn mixture(parts: &[(f64, &CylinderTable)]) -> CylinderTable {
        let mut freq = BTreeMap::new();
        for (w, t) in parts {
            for (word, p) in &t.freq {
                *freq.entry(*word).or_insert(0.0) += w * p;
            }
        }
        let len = parts.first().map(|p| p.1.len).unwrap_or(0);
        CylinderTable { len, freq, samples: parts.iter().map(|p| p.1.samples).sum() }
    }

    /// CSV with columns `word,frequency`; the word lists `y(offset)` first.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("word,frequency\n");
        for (w, p) in &self.freq {
            let word: String = (0..self.len).map(|i| if (w >> i) & 1 == 1 { '1' } else { '0' }).collect();
            out.push_str(&format!("{word},{p}\n"));
        }
        out
    }
}

/// Conditioned windows of a symbolic sampler, packed over `[lo, lo + span)`.
#[derive(Clone, Debug)]
pub struct EmpiricalMeasure {
    pub lo: i64,
    pub span: usize,
    pub windows: Vec<u128>,
    pub attempts: u64,
}

impl EmpiricalMeasure {
    pub fn from_windows(lo: i64, span: usize, windows: &[ZWindow], attempts: u64) -> Result<Self> {
        if span > 128 {
            return Err(Error::Limit(format!("window span {span} above 128")));
        }
        let packed = windows
            .iter()
            .map(|w| {
                let mut v = 0u128;
                for i in 0..span {
                    let b = w
                        .get(lo + i as i64)
                        .ok_or_else(|| Error::ResolutionEscape(format!("coordinate {} missing", lo + i as i64)))?;
                    v |= (b as u128) << i;
                }
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EmpiricalMeasure { lo, span, windows: packed, attempts })
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.windows.len() as f64 / self.attempts as f64
        }
    }

    /// Cylinder frequencies of `S^offset` of the measure: words
    /// `y[offset..offset+len)`.
    pub fn cylinder_table(&self, offset: i64, len: usize) -> Result<CylinderTable> {
        let start = offset - self.lo;
        if start < 0 || start as usize + len > self.span || len > 64 || self.windows.is_empty() {
            return Err(Error::ResolutionEscape(format!(
                "cylinder [{offset}, {}) outside [{}, {})",
                offset + len as i64,
                self.lo,
                self.lo + self.span as i64
            )));
        }
        let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
        let mask = if len == 64 { u128::from(u64::MAX) } else { (1u128 << len) - 1 };
        for w in &self.windows {
            *counts.entry(((w >> start) & mask) as u64).or_insert(0) += 1;
        }
        let n = self.windows.len() as f64;
        Ok(CylinderTable {
            len,
            freq: counts.into_iter().map(|(k, c)| (k, c as f64 / n)).collect(),
            samples: self.windows.len() as u64,
        })
    }
}

/// Projection `P_{r,k}` of a symbolic sampler onto `I^Z`: draws conditioned
/// on `alpha ∈ A_{r,k}` (directly when the construction allows, otherwise by
/// rejection with at most `n * 2^(k+2) + 1000` attempts), keeping the window
/// `[lo, lo + span)`. `n` counts accepted draws.
pub fn project(
    sampler: &MeasureSampler,
    r: u64,
    k: u32,
    lo: i64,
    span: usize,
    digits: u32,
    n: usize,
    seed: u64,
) -> Result<EmpiricalMeasure> {
    if n == 0 {
        return Err(Error::Invalid("n_samples must be at least 1".into()));
    }
    if k > digits {
        return Err(Error::ResolutionEscape(format!("k = {k} beyond {digits} digits")));
    }
    let res = Resolution::symbolic(digits, lo, lo + span as i64 - 1);
    let cap_per_draw = 1u64 << (k + 2).min(40);
    let r = r & low_mask(k);
    let out: Vec<(Option<ZWindow>, u64)> = chunked(n, seed, |rng, count| {
        let mut v = Vec::with_capacity(count);
        let mut budget = count as u64 * cap_per_draw + 1000 / CHUNK as u64 + 1;
        for _ in 0..count {
            let mut attempts = 0u64;
            let mut got = None;
            while budget > 0 {
                budget -= 1;
                attempts += 1;
                match sampler.draw_symbolic_in(rng, &res, r, k)? {
                    Some(p) => {
                        got = Some(p.window);
                        break;
                    }
                    None => {
                        let p = sampler.draw_symbolic(rng, &res)?;
                        if p.alpha.prefix_int(k) == r {
                            got = Some(p.window);
                            break;
                        }
                    }
                }
            }
            v.push((got, attempts));
        }
        Ok(v)
    })?;
    let attempts = out.iter().map(|x| x.1).sum();
    let windows: Vec<ZWindow> = out.into_iter().filter_map(|x| x.0).collect();
    if windows.is_empty() {
        return Err(Error::NoSamples { attempts });
    }
    EmpiricalMeasure::from_windows(lo, span, &windows, attempts)
}

/// `theta_k = P_{0,k}` on the window `[0, span)`.
pub fn project_theta(
    sampler: &MeasureSampler,
    k: u32,
    span: usize,
    digits: u32,
    n: usize,
    seed: u64,
) -> Result<EmpiricalMeasure> {
    project(sampler, 0, k, 0, span, digits, n, seed)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Type(u32),
    AperiodicUpTo(u32),
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Type(k) => write!(f, "type {k}"),
            Verdict::AperiodicUpTo(k) => write!(f, "aperiodic-up-to-{k}"),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub verdict: Verdict,
    /// `TV(theta_j, theta_{j+1})` for `j < k_max`.
    pub ladder: Vec<f64>,
    pub acceptance: Vec<f64>,
    pub seeds: Vec<u64>,
    pub k_max: u32,
    pub cyl_len: usize,
    pub n_samples: usize,
    pub tol: f64,
}

/// Smallest `k < k_max` with `TV(theta_j, theta_{j+1}) ≤ tol` for every
/// `k ≤ j < k_max`; otherwise aperiodic up to `k_max`.
pub fn classify_periodic_type(
    sampler: &MeasureSampler,
    k_max: u32,
    cyl_len: usize,
    n_samples: usize,
    tol: f64,
    seed: u64,
) -> Result<ClassifierReport> {
    if k_max == 0 {
        return Err(Error::Invalid("k_max must be positive".into()));
    }
    let digits = k_max.max(1);
    let mut tables = Vec::new();
    let mut acceptance = Vec::new();
    let mut seeds = Vec::new();
    for k in 0..=k_max {
        let s = derive_seed(seed, k as u64);
        let e = project_theta(sampler, k, cyl_len, digits, n_samples, s)?;
        acceptance.push(e.acceptance_rate());
        seeds.push(s);
        tables.push(e.cylinder_table(0, cyl_len)?);
    }
    let ladder: Vec<f64> = tables.windows(2).map(|t| t[0].tv(&t[1])).collect();
    let verdict = (0..k_max)
        .find(|&k| ladder[k as usize..].iter().all(|&tv| tv <= tol))
        .map(Verdict::Type)
        .unwrap_or(Verdict::AperiodicUpTo(k_max));
    Ok(ClassifierReport { verdict, ladder, acceptance, seeds, k_max, cyl_len, n_samples, tol })
}

/// One empirical check of a projection relation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RelationCheck {
    pub relation: String,
    pub k: u32,
    pub r: u64,
    pub tv: f64,
}

/// Empirical projection relations for `k ≤ k_top` on length-`cyl_len`
/// cylinders, `n` accepted draws per projection:
/// `S^{2^k} P_{r,k} = P_{r,k}`, `S P_{r,k} = P_{r+1,k}`,
/// `P_{r,k} = (P_{r,k+1} + P_{r+2^k,k+1}) / 2` and
/// `theta_k = (theta_{k+1} + S^{2^k} theta_{k+1}) / 2`.
pub fn relation_checks(
    sampler: &MeasureSampler,
    k_top: u32,
    cyl_len: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<RelationCheck>> {
    let digits = k_top + 1;
    let span = (1usize << k_top) + cyl_len;
    let mut proj: BTreeMap<(u32, u64), EmpiricalMeasure> = BTreeMap::new();
    for k in 0..=k_top + 1 {
        for r in 0..(1u64 << k) {
            let s = derive_seed(seed, ((k as u64) << 32) | r);
            proj.insert((k, r), project(sampler, r, k, 0, span, digits, n, s)?);
        }
    }
    let table = |k: u32, r: u64, off: i64| proj[&(k, r)].cylinder_table(off, cyl_len);
    let mut out = Vec::new();
    for k in 0..=k_top {
        let size = 1u64 << k;
        for r in 0..size {
            let base = table(k, r, 0)?;
            out.push(RelationCheck {
                relation: "shift-period".into(),
                k,
                r,
                tv: table(k, r, size as i64)?.tv(&base),
            });
            out.push(RelationCheck {
                relation: "shift-step".into(),
                k,
                r,
                tv: table(k, r, 1)?.tv(&table(k, (r + 1) % size, 0)?),
            });
            let mix = CylinderTable::mixture(&[(0.5, &table(k + 1, r, 0)?), (0.5, &table(k + 1, r + size, 0)?)]);
            out.push(RelationCheck { relation: "refine".into(), k, r, tv: base.tv(&mix) });
        }
        let theta = table(k, 0, 0)?;
        let mix = CylinderTable::mixture(&[(0.5, &table(k + 1, 0, 0)?), (0.5, &table(k + 1, 0, size as i64)?)]);
        out.push(RelationCheck { relation: "theta-split".into(), k, r: 0, tv: theta.tv(&mix) });
    }
    Ok(out)
}
