//! Orbit trees of D_n, the Kantorovich iteration over binary-tree
//! automorphisms, orbit classes of labelled trees, and entropy of the
//! tail filtration.
//!
//! Leaves of a depth-`n` tree are indexed by masks in D_n; the contiguous
//! blocks of size `2^j` are the cosets of D_j, so the children of a block
//! are its lower and upper halves.

use std::collections::HashMap;

use rustc_hash::FxHashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coding::{diag, CodedPoint};
use crate::dyadic_group::{DigitSeq, GroupElem, SigmaSeq};
use crate::error::{Error, Result};
use crate::measures::{derive_seed, draw_coded_with, rng_from, ConfigLaw};
use crate::metrics_entropy::{entropy_with, exact_entropy_atoms, greedy_cover, sigma_target, CurvePoint, EntropyCurve};

/// Deepest tree handled by the generic recursion.
pub const MAX_TREE_DEPTH: u32 = 12;
/// Deepest tree for brute force over all automorphisms.
pub const BRUTE_FORCE_DEPTH: u32 = 3;

fn tree_depth(len: usize) -> Result<u32> {
    if !len.is_power_of_two() {
        return Err(Error::Invalid(format!("{len} leaves is not a power of two")));
    }
    let n = len.trailing_zeros();
    if n > MAX_TREE_DEPTH {
        return Err(Error::DepthLimit { depth: n, limit: MAX_TREE_DEPTH });
    }
    Ok(n)
}

/// `K_n[rho](x, y)` by the child-swap recursion
/// `K_{j+1} = 1/2 min(K_j(a1,b1) + K_j(a2,b2), K_j(a1,b2) + K_j(a2,b1))`.
pub fn kantorovich<T>(x: &[T], y: &[T], rho: impl Fn(&T, &T) -> f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DepthMismatch(x.len().trailing_zeros(), y.len().trailing_zeros()));
    }
    let n = tree_depth(x.len())?;
    let size = x.len();
    let mut level: Vec<f64> = Vec::with_capacity(size * size);
    for a in x {
        for b in y {
            level.push(rho(a, b));
        }
    }
    let mut blocks = size;
    for _ in 0..n {
        let half = blocks / 2;
        let mut next = vec![0.0; half * half];
        for i in 0..half {
            for j in 0..half {
                let at = |p: usize, q: usize| level[p * blocks + q];
                let keep = at(2 * i, 2 * j) + at(2 * i + 1, 2 * j + 1);
                let swap = at(2 * i, 2 * j + 1) + at(2 * i + 1, 2 * j);
                next[i * half + j] = 0.5 * keep.min(swap);
            }
        }
        level = next;
        blocks = half;
    }
    Ok(level[0])
}

/// The automorphism of the depth-`n` tree given by one swap flag per
/// internal node: node `(j, g >> j)` swaps its halves, which flips bit
/// `j - 1` of every leaf below it.
pub fn apply_automorphism(flags: u64, n: u32, g: u64) -> u64 {
    let mut out = g;
    for j in 1..=n {
        let node = g >> j;
        let id = (1u64 << (n - j)) - 1 + node;
        if (flags >> id) & 1 == 1 {
            out ^= 1 << (j - 1);
        }
    }
    out
}

/// `min_S 2^-n sum_j rho(x_j, y_{S j})` over all `2^(2^n - 1)` tree
/// automorphisms.
pub fn kantorovich_brute_force<T>(x: &[T], y: &[T], rho: impl Fn(&T, &T) -> f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DepthMismatch(x.len().trailing_zeros(), y.len().trailing_zeros()));
    }
    let n = tree_depth(x.len())?;
    if n > BRUTE_FORCE_DEPTH {
        return Err(Error::DepthLimit { depth: n, limit: BRUTE_FORCE_DEPTH });
    }
    let nodes = (1u64 << n) - 1;
    let mut best = f64::INFINITY;
    for flags in 0..(1u64 << nodes) {
        let s: f64 = (0..x.len() as u64).map(|g| rho(&x[g as usize], &y[apply_automorphism(flags, n, g) as usize])).sum();
        best = best.min(s / x.len() as f64);
    }
    Ok(best)
}

/// Leaves `diag(g) x` for `g` in D_n.
pub fn orbit_tree(x: &CodedPoint, n: u32) -> Result<Vec<CodedPoint>> {
    if n > MAX_TREE_DEPTH {
        return Err(Error::DepthLimit { depth: n, limit: MAX_TREE_DEPTH });
    }
    GroupElem::all(n).map(|g| diag(g, x)).collect()
}

/// The member of the D_n orbit of `x` whose first `n` digits vanish.
pub fn orbit_representative(x: &CodedPoint, n: u32) -> Result<CodedPoint> {
    let g = GroupElem::new(x.alpha().prefix_int(n))?;
    diag(g, x)
}

/// `dist_m`: the Kantorovich iteration of the discrete metric on leaves.
pub fn dist_m<T: PartialEq>(w1: &[T], w2: &[T]) -> Result<f64> {
    kantorovich(w1, w2, |a, b| (a != b) as u8 as f64)
}

/// Checked [`dist_m`] for labels over an alphabet of size `q`.
pub fn dist_m_alphabet(w1: &[u32], w2: &[u32], q1: usize, q2: usize) -> Result<f64> {
    if q1 != q2 {
        return Err(Error::AlphabetMismatch(q1, q2));
    }
    if w1.iter().chain(w2).any(|&s| s as usize >= q1) {
        return Err(Error::Invalid(format!("label outside an alphabet of size {q1}")));
    }
    dist_m(w1, w2)
}

/// Interned orbit classes of labelled binary trees: a class at level `j` is
/// the sorted pair of its children's classes, so two trees share a class
/// iff some automorphism maps one onto the other.
#[derive(Clone, Debug, Default)]
pub struct OrbitClasses {
    /// `children[j - 1][id]` for classes at level `j ≥ 1`.
    children: Vec<Vec<(u32, u32)>>,
    index: Vec<FxHashMap<(u32, u32), u32>>,
    /// `sizes[j][id]`: orbit size of the class, saturating at `u128::MAX`.
    sizes: Vec<Vec<u128>>,
    alphabet: usize,
}

impl OrbitClasses {
    pub fn new(alphabet: usize) -> Self {
        OrbitClasses { alphabet, ..Default::default() }
    }

    pub fn class_count(&self, level: u32) -> usize {
        if level == 0 {
            self.alphabet
        } else {
            self.children.get(level as usize - 1).map_or(0, |v| v.len())
        }
    }

    fn intern(&mut self, level: u32, a: u32, b: u32) -> u32 {
        let key = if a <= b { (a, b) } else { (b, a) };
        let j = level as usize - 1;
        while self.children.len() <= j {
            self.children.push(Vec::new());
            self.index.push(FxHashMap::default());
            self.sizes.push(Vec::new());
        }
        if let Some(&id) = self.index[j].get(&key) {
            return id;
        }
        let size_of = |s: &Self, c: u32| if level == 1 { 1 } else { s.sizes[j - 1][c as usize] };
        let (sa, sb) = (size_of(self, key.0), size_of(self, key.1));
        let size = if key.0 == key.1 { sa.saturating_mul(sa) } else { sa.saturating_mul(sb).saturating_mul(2) };
        let id = self.children[j].len() as u32;
        self.children[j].push(key);
        self.index[j].insert(key, id);
        self.sizes[j].push(size);
        id
    }

    /// Class of a labelled tree with `2^n` leaves.
    pub fn classify(&mut self, leaves: &[u32]) -> Result<u32> {
        let n = tree_depth(leaves.len())?;
        if leaves.iter().any(|&s| s as usize >= self.alphabet) {
            return Err(Error::Invalid(format!("label outside an alphabet of size {}", self.alphabet)));
        }
        let mut ids = leaves.to_vec();
        for level in 1..=n {
            ids = ids.chunks(2).map(|c| self.intern(level, c[0], c[1])).collect();
        }
        Ok(ids[0])
    }

    pub fn orbit_size(&self, level: u32, id: u32) -> u128 {
        if level == 0 {
            1
        } else {
            self.sizes[level as usize - 1][id as usize]
        }
    }

    /// Number of mismatched leaves under the best automorphism, i.e.
    /// `2^level * dist_level`.
    pub fn mismatch(&self, level: u32, a: u32, b: u32, memo: &MismatchMemo) -> u32 {
        if a == b {
            return 0;
        }
        if level == 0 {
            return 1;
        }
        let key = if a < b { (a, b) } else { (b, a) };
        if let Some(m) = memo.get(level, key) {
            return m;
        }
        let (a1, a2) = self.children[level as usize - 1][a as usize];
        let (b1, b2) = self.children[level as usize - 1][b as usize];
        let l = level - 1;
        let keep = self.mismatch(l, a1, b1, memo) + self.mismatch(l, a2, b2, memo);
        let v = if keep == 0 {
            0
        } else {
            keep.min(self.mismatch(l, a1, b2, memo) + self.mismatch(l, a2, b1, memo))
        };
        memo.put(level, key, v);
        v
    }

    /// `mismatch(level, a, b)` if it is at most `budget`, else `None`.
    /// Levels the memo caches are computed exactly.
    pub fn mismatch_within(&self, level: u32, a: u32, b: u32, budget: u32, memo: &MismatchMemo) -> Option<u32> {
        if a == b {
            return Some(0);
        }
        // distinct classes differ in at least one leaf
        if level == 0 || budget == 0 {
            return (level == 0 && budget >= 1).then_some(1);
        }
        if memo.caches(level) {
            let m = self.mismatch(level, a, b, memo);
            return (m <= budget).then_some(m);
        }
        let (a1, a2) = self.children[level as usize - 1][a as usize];
        let (b1, b2) = self.children[level as usize - 1][b as usize];
        let l = level - 1;
        let pair = |p: u32, q: u32, r: u32, t: u32, cap: u32| {
            let x = self.mismatch_within(l, p, q, cap, memo)?;
            Some(x + self.mismatch_within(l, r, t, cap - x, memo)?)
        };
        let keep = pair(a1, b1, a2, b2, budget);
        if keep == Some(0) {
            return keep;
        }
        let cap = keep.map_or(budget, |k| k - 1);
        pair(a1, b2, a2, b1, cap).or(keep)
    }

    /// A memo that caches levels whose class count is small enough for a
    /// table of all pairs to stay below `budget` entries.
    pub fn memo(&self, budget: usize) -> MismatchMemo {
        let mut levels = Vec::new();
        for j in 1..=self.children.len() as u32 {
            let c = self.class_count(j);
            levels.push(c.saturating_mul(c) <= budget);
        }
        MismatchMemo { levels, maps: (0..self.children.len()).map(|_| Default::default()).collect() }
    }
}

/// Shared pair cache for [`OrbitClasses::mismatch`].
#[derive(Debug, Default)]
pub struct MismatchMemo {
    levels: Vec<bool>,
    maps: Vec<std::sync::RwLock<FxHashMap<(u32, u32), u32>>>,
}

impl MismatchMemo {
    fn caches(&self, level: u32) -> bool {
        level >= 1 && self.levels.get(level as usize - 1).copied().unwrap_or(false)
    }

    fn get(&self, level: u32, key: (u32, u32)) -> Option<u32> {
        let j = level as usize - 1;
        if !*self.levels.get(j)? {
            return None;
        }
        self.maps[j].read().unwrap().get(&key).copied()
    }

    fn put(&self, level: u32, key: (u32, u32), v: u32) {
        let j = level as usize - 1;
        if self.levels.get(j).copied().unwrap_or(false) {
            self.maps[j].write().unwrap().insert(key, v);
        }
    }
}

/// Exact maximal orbit size of the tree automorphisms acting on `Q^{D_m}`.
pub fn max_orbit_size(m: u32, q: usize) -> Result<u128> {
    let leaves = 1u32 << m;
    if q < 1 || (q as f64).log2() * leaves as f64 > 20.0 {
        return Err(Error::Limit(format!("|Q|^(2^{m}) with |Q| = {q} above 2^20")));
    }
    let mut classes = OrbitClasses::new(q);
    let total = (q as u64).pow(leaves);
    let mut best = 0;
    let mut labels = vec![0u32; leaves as usize];
    for code in 0..total {
        let mut c = code;
        for l in labels.iter_mut() {
            *l = (c % q as u64) as u32;
            c /= q as u64;
        }
        let id = classes.classify(&labels)?;
        best = best.max(classes.orbit_size(m, id));
    }
    Ok(best)
}

/// The orbit of a labelled tree under all automorphisms, by enumeration
/// (`n ≤ 4`).
pub fn orbit_by_enumeration(leaves: &[u32]) -> Result<Vec<Vec<u32>>> {
    let n = tree_depth(leaves.len())?;
    if n > 4 {
        return Err(Error::DepthLimit { depth: n, limit: 4 });
    }
    let nodes = (1u64 << n) - 1;
    let mut seen = std::collections::BTreeSet::new();
    for flags in 0..(1u64 << nodes) {
        let img: Vec<u32> = (0..leaves.len() as u64).map(|g| leaves[apply_automorphism(flags, n, g) as usize]).collect();
        seen.insert(img);
    }
    Ok(seen.into_iter().collect())
}

/// Labels of `W`: configurations on D_m invariant under `g_0..g_{r-1}`,
/// as 0/1 leaves.
fn invariant_configs(m: u32, r: u32) -> Vec<Vec<u32>> {
    let free = m - r;
    (0..(1u64 << (1u64 << free)))
        .map(|code| (0..(1u64 << m)).map(|h| ((code >> (h >> r)) & 1) as u32).collect())
        .collect()
}

/// Exact or estimated `H_eps` of `(I^{D_m}, dist_m, uniform on W)` where
/// `W` is invariant under the first `r` generators. Exact when `W` has at
/// most `2^12` elements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantEntropy {
    pub m: u32,
    pub r: u32,
    pub eps: f64,
    pub bits: f64,
    pub exact: bool,
    pub classes: usize,
}

pub fn invariant_entropy(m: u32, r: u32, eps: f64, n_samples: usize, seed: u64) -> Result<InvariantEntropy> {
    if r > m || m > MAX_TREE_DEPTH {
        return Err(Error::Invalid(format!("need r ≤ m ≤ {MAX_TREE_DEPTH}, got r = {r}, m = {m}")));
    }
    let free = 1u64 << (m - r);
    if free <= 12 {
        let mut classes = OrbitClasses::new(2);
        let mut mass: HashMap<u32, f64> = HashMap::new();
        let configs = invariant_configs(m, r);
        let each = 1.0 / configs.len() as f64;
        for w in &configs {
            *mass.entry(classes.classify(w)?).or_insert(0.0) += each;
        }
        let ids: Vec<u32> = mass.keys().copied().collect();
        let memo = classes.memo(1 << 22);
        let min_positive = ids
            .iter()
            .flat_map(|&a| ids.iter().map(move |&b| (a, b)))
            .filter(|(a, b)| a != b)
            .map(|(a, b)| classes.mismatch(m, a, b, &memo) as f64 / (1u64 << m) as f64)
            .fold(f64::INFINITY, f64::min);
        if eps <= min_positive {
            let masses: Vec<f64> = ids.iter().map(|id| mass[id]).collect();
            return Ok(InvariantEntropy { m, r, eps, bits: exact_entropy_atoms(&masses, eps), exact: true, classes: ids.len() });
        }
        if ids.len() <= crate::metrics_entropy::EXACT_LIMIT {
            let masses: Vec<f64> = ids.iter().map(|id| mass[id]).collect();
            let dist: Vec<Vec<f64>> = ids
                .iter()
                .map(|&a| ids.iter().map(|&b| classes.mismatch(m, a, b, &memo) as f64 / (1u64 << m) as f64).collect())
                .collect();
            let bits = crate::metrics_entropy::exact_entropy(&masses, &dist, eps)?;
            return Ok(InvariantEntropy { m, r, eps, bits, exact: true, classes: ids.len() });
        }
    }
    // estimator over uniform draws from W
    let mut rng = rng_from(seed);
    let mut classes = OrbitClasses::new(2);
    let draws: Vec<u32> = (0..n_samples)
        .map(|_| {
            let bits: Vec<u64> = (0..free.div_ceil(64)).map(|_| rand::Rng::random(&mut rng)).collect();
            let w: Vec<u32> = (0..(1u64 << m)).map(|h| ((bits[((h >> r) / 64) as usize] >> ((h >> r) % 64)) & 1) as u32).collect();
            classes.classify(&w)
        })
        .collect::<Result<_>>()?;
    let (ids, counts) = tally(&draws);
    let memo = classes.memo(1 << 22);
    let bits = entropy_with(&counts, eps, |i, j| classes.mismatch(m, ids[i], ids[j], &memo) as f64 / (1u64 << m) as f64);
    Ok(InvariantEntropy { m, r, eps, bits, exact: false, classes: ids.len() })
}

fn tally(draws: &[u32]) -> (Vec<u32>, Vec<usize>) {
    let mut order = Vec::new();
    let mut counts: HashMap<u32, usize> = HashMap::new();
    for &d in draws {
        let c = counts.entry(d).or_insert(0);
        if *c == 0 {
            order.push(d);
        }
        *c += 1;
    }
    let cs = order.iter().map(|d| counts[d]).collect();
    (order, cs)
}

/// Block labels of a representative: symbol `b` is `w` on the coset
/// `b * 2^k + D_k`, packed (`k ≤ 4`).
pub fn block_labels(rep: &CodedPoint, n: u32, k: u32) -> Result<Vec<u32>> {
    if k > 4 || k > n {
        return Err(Error::Limit(format!("cut level {k} with n = {n}")));
    }
    if rep.depth() < n {
        return Err(Error::ResolutionEscape(format!("D_{n} beyond resolution {}", rep.depth())));
    }
    let size = 1u64 << k;
    Ok((0..(1u64 << (n - k)))
        .map(|b| (0..size).fold(0u32, |acc, v| acc | (rep.w_at(b * size + v) as u32) << v))
        .collect())
}

/// `K_n[rho_k]` between the representatives of two points through the
/// reduction to `dist_{n-k}` over block labels.
pub fn reduced_distance(x: &CodedPoint, y: &CodedPoint, n: u32, k: u32) -> Result<f64> {
    let bx = block_labels(&orbit_representative(x, n)?, n, k)?;
    let by = block_labels(&orbit_representative(y, n)?, n, k)?;
    dist_m(&bx, &by)
}

/// `K_n[rho_k]` on the full orbit trees of the representatives.
pub fn generic_distance(x: &CodedPoint, y: &CodedPoint, n: u32, k: u32) -> Result<f64> {
    let tx = orbit_tree(&orbit_representative(x, n)?, n)?;
    let ty = orbit_tree(&orbit_representative(y, n)?, n)?;
    let key = |p: &CodedPoint| -> (u64, u64) { (p.w_block(k).unwrap_or(u64::MAX), p.alpha().prefix_int(k)) };
    kantorovich(&tx, &ty, |a, b| (key(a) != key(b)) as u8 as f64)
}

/// Entropy curve of `K_n[rho_k]` on representatives of `m^sigma x m`
/// samples, one level at a time.
pub fn filtration_scaling(
    sigma: &SigmaSeq,
    k: u32,
    levels: &[u32],
    eps: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<EntropyCurve> {
    let law = ConfigLaw::Sigma(*sigma);
    let mut curve = EntropyCurve::default();
    for &n in levels {
        if n <= k {
            return Err(Error::Invalid(format!("level {n} must exceed the cut level {k}")));
        }
        let s = derive_seed(seed, n as u64);
        let points: Vec<CodedPoint> = crate::measures::chunked(n_samples, s, |rng, count| {
            (0..count).map(|_| draw_coded_with(rng, &law, n, n)).collect()
        })?;
        let mut classes = OrbitClasses::new(1 << (1 << k));
        let mut ids = Vec::with_capacity(points.len());
        for p in &points {
            ids.push(classes.classify(&block_labels(&orbit_representative(p, n)?, n, k)?)?);
        }
        let (uniq, counts) = tally(&ids);
        let memo = classes.memo(1 << 22);
        let depth = n - k;
        for &e in eps {
            // dist < e / 2  iff  mismatch ≤ ceil(e 2^depth / 2) - 1
            let budget = ((e / 2.0 * (1u64 << depth) as f64).ceil() as u32).saturating_sub(1);
            let balls = greedy_cover(&counts, e, |i, j| {
                classes.mismatch_within(depth, uniq[i], uniq[j], budget, &memo).is_some()
            });
            let bits = (balls.max(1) as f64).log2();
            curve.points.push(CurvePoint { scale: n as u64, eps: e, bits, samples: n_samples, seed: s });
        }
    }
    Ok(curve)
}

/// Targets `2^{sigma_0 + ... + sigma_{n-1}}` for the levels of a curve.
pub fn filtration_targets(sigma: &SigmaSeq, levels: &[u32]) -> Vec<f64> {
    levels.iter().map(|&n| sigma_target(sigma, n)).collect()
}

/// Pointwise Lipschitz bound: `K[rho2] ≤ K[rho1] + 3 rho_avg` where
/// `rho_avg` is the all-pairs mean of a semimetric `rho ≥ |rho1 - rho2|`.
pub fn lipschitz_bound_check<T>(
    x: &[T],
    y: &[T],
    rho1: impl Fn(&T, &T) -> f64,
    rho2: impl Fn(&T, &T) -> f64,
    rho: impl Fn(&T, &T) -> f64,
) -> Result<bool> {
    let k1 = kantorovich(x, y, &rho1)?;
    let k2 = kantorovich(x, y, &rho2)?;
    let n = x.len() as f64;
    let avg: f64 = x.iter().map(|a| y.iter().map(|b| rho(a, b)).sum::<f64>()).sum::<f64>() / (n * n);
    Ok(k2 <= k1 + 3.0 * avg)
}

/// JSON-friendly record of an enumerated orbit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitRecord {
    pub depth: u32,
    pub leaves: Vec<u32>,
    pub orbit_size: usize,
}

/// Orbit records of every `0/1` tree of depth `m` (`m ≤ 3`).
pub fn orbit_records(m: u32) -> Result<Vec<OrbitRecord>> {
    if m > 3 {
        return Err(Error::DepthLimit { depth: m, limit: 3 });
    }
    (0..(1u64 << (1u64 << m)))
        .into_par_iter()
        .map(|code| {
            let leaves: Vec<u32> = (0..(1u64 << m)).map(|h| ((code >> h) & 1) as u32).collect();
            let orbit = orbit_by_enumeration(&leaves)?;
            Ok(OrbitRecord { depth: m, leaves, orbit_size: orbit.len() })
        })
        .collect()
}

/// Digits of the representative: the first `n` vanish.
pub fn representative_digits(x: &CodedPoint, n: u32) -> Result<DigitSeq> {
    Ok(*orbit_representative(x, n)?.alpha())
}
