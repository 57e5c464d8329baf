//! Admissible semimetrics on coded and symbolic points, their averagings
//! along the adic map and over D_n, the greedy epsilon-entropy estimator
//! with an exact covering oracle for tiny instances, and scaling curves.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coding::{adic_on_coded, diag, shift_odometer, CodedPoint, SymbolicPoint};
use crate::dyadic_group::{GroupElem, SigmaSeq};
use crate::error::{Error, Result};
use crate::measures::{derive_seed, MeasureKind, MeasureSampler, Resolution, Sample};

/// Digit and configuration resolution used for adic averaging; carries past
/// this depth are reported as resolution escapes.
pub const Z_RESOLUTION: u32 = 40;

/// Default grid of epsilons; acceptance runs read the middle one.
pub const DEFAULT_EPS: [f64; 3] = [0.5, 0.25, 0.1];
pub const DEFAULT_SAMPLES: usize = 2000;

#[derive(Clone, Debug, PartialEq)]
pub enum Point {
    Coded(CodedPoint),
    Symbolic(SymbolicPoint),
}

impl From<Sample> for Point {
    fn from(s: Sample) -> Self {
        match s {
            Sample::Coded(p) => Point::Coded(p),
            Sample::Symbolic(p) => Point::Symbolic(p),
            Sample::Digits(d) => Point::Symbolic(SymbolicPoint {
                window: crate::coding::ZWindow::new(0, vec![0]).expect("one coordinate"),
                alpha: d,
            }),
        }
    }
}

impl Point {
    /// One step of the dynamics: the adic map on coded points, shift times
    /// odometer on symbolic points.
    pub fn step(&self) -> Result<Point> {
        Ok(match self {
            Point::Coded(p) => Point::Coded(adic_on_coded(p)?),
            Point::Symbolic(p) => Point::Symbolic(shift_odometer(p)?),
        })
    }

    pub fn act(&self, g: GroupElem) -> Result<Point> {
        match self {
            Point::Coded(p) => Ok(Point::Coded(diag(g, p)?)),
            Point::Symbolic(_) => Err(Error::Invalid("the group acts on coded points only".into())),
        }
    }
}

/// Semimetrics built from cuts by averaging and weighted sums.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Semimetric {
    /// `rho_k`: zero iff `w` agrees on D_k and the first `k` digits agree
    /// (`k ≤ 6`).
    CodedCut { k: u32 },
    /// Cut on one coordinate of a window.
    WordCut { coord: i64 },
    /// Normalized Hamming distance on window coordinates `lo..=hi`.
    Hamming { lo: i64, hi: i64 },
    /// `(1/t) sum_{j<t} rho(T^j x, T^j y)`.
    AveragedZ { base: Box<Semimetric>, t: u64 },
    /// `2^-n sum_{g in D_n} rho(g x, g y)`.
    AveragedGroup { base: Box<Semimetric>, n: u32 },
    Weighted(Vec<(f64, Semimetric)>),
}

fn differ(a: Option<u128>, b: Option<u128>) -> f64 {
    (a != b) as u8 as f64
}

impl Semimetric {
    pub fn average_z(self, t: u64) -> Result<Semimetric> {
        if t == 0 {
            return Err(Error::Invalid("averaging over zero steps".into()));
        }
        Ok(if t == 1 { self } else { Semimetric::AveragedZ { base: Box::new(self), t } })
    }

    pub fn average_group(self, n: u32) -> Semimetric {
        if n == 0 {
            self
        } else {
            Semimetric::AveragedGroup { base: Box::new(self), n }
        }
    }

    fn cut_key(&self, x: &Point) -> Result<u128> {
        match (self, x) {
            (Semimetric::CodedCut { k }, Point::Coded(p)) => {
                if p.alpha_len() < *k {
                    return Err(Error::ResolutionEscape(format!("rho_{k} needs {k} digits, point has {}", p.alpha_len())));
                }
                Ok(p.w_block(*k)? as u128 | (p.alpha().prefix_int(*k) as u128) << 64)
            }
            (Semimetric::WordCut { coord }, Point::Symbolic(p)) => p
                .window
                .get(*coord)
                .map(u128::from)
                .ok_or_else(|| Error::ResolutionEscape(format!("coordinate {coord} outside window"))),
            _ => Err(Error::Invalid(format!("{self:?} does not apply to this point"))),
        }
    }

    /// Direct evaluation.
    pub fn eval(&self, x: &Point, y: &Point) -> Result<f64> {
        match self {
            Semimetric::CodedCut { .. } | Semimetric::WordCut { .. } => {
                Ok(differ(Some(self.cut_key(x)?), Some(self.cut_key(y)?)))
            }
            Semimetric::Hamming { lo, hi } => {
                let (Point::Symbolic(a), Point::Symbolic(b)) = (x, y) else {
                    return Err(Error::Invalid("Hamming distance needs symbolic points".into()));
                };
                let mut s = 0.0;
                for k in *lo..=*hi {
                    let (u, v) = (a.window.get(k), b.window.get(k));
                    if u.is_none() || v.is_none() {
                        return Err(Error::ResolutionEscape(format!("coordinate {k} outside window")));
                    }
                    s += differ(u.map(u128::from), v.map(u128::from));
                }
                Ok(s / (hi - lo + 1) as f64)
            }
            Semimetric::AveragedZ { base, t } => {
                let (mut a, mut b) = (x.clone(), y.clone());
                let mut s = 0.0;
                for j in 0..*t {
                    if j > 0 {
                        a = a.step()?;
                        b = b.step()?;
                    }
                    s += base.eval(&a, &b)?;
                }
                Ok(s / *t as f64)
            }
            Semimetric::AveragedGroup { base, n } => {
                let mut s = 0.0;
                for g in GroupElem::all(*n) {
                    s += base.eval(&x.act(g)?, &y.act(g)?)?;
                }
                Ok(s / (1u64 << n) as f64)
            }
            Semimetric::Weighted(parts) => {
                let mut s = 0.0;
                for (c, rho) in parts {
                    s += c * rho.eval(x, y)?;
                }
                Ok(s)
            }
        }
    }

    /// Weights of the key layout produced by [`Semimetric::embed`].
    pub fn weights(&self) -> Vec<f64> {
        match self {
            Semimetric::CodedCut { .. } | Semimetric::WordCut { .. } => vec![1.0],
            Semimetric::Hamming { lo, hi } => {
                let len = (hi - lo + 1).max(0) as usize;
                vec![1.0 / len as f64; len]
            }
            Semimetric::AveragedZ { base, t } => {
                let w = base.weights();
                (0..*t).flat_map(|_| w.iter().map(|v| v / *t as f64)).collect()
            }
            Semimetric::AveragedGroup { base, n } => {
                let w = base.weights();
                let size = (1u64 << n) as f64;
                (0..(1u64 << n)).flat_map(|_| w.iter().map(move |v| v / size)).collect()
            }
            Semimetric::Weighted(parts) => {
                parts.iter().flat_map(|(c, rho)| rho.weights().into_iter().map(move |v| c * v)).collect()
            }
        }
    }

    /// Keys such that `rho(x, y) = sum_i weights[i] * [key_x[i] != key_y[i]]`.
    pub fn embed(&self, x: &Point) -> Result<Vec<u128>> {
        let mut out = Vec::new();
        self.embed_into(x, &mut out)?;
        Ok(out)
    }

    fn embed_into(&self, x: &Point, out: &mut Vec<u128>) -> Result<()> {
        match self {
            Semimetric::CodedCut { .. } | Semimetric::WordCut { .. } => out.push(self.cut_key(x)?),
            Semimetric::Hamming { lo, hi } => {
                let Point::Symbolic(p) = x else {
                    return Err(Error::Invalid("Hamming distance needs symbolic points".into()));
                };
                for k in *lo..=*hi {
                    let b = p.window.get(k).ok_or_else(|| Error::ResolutionEscape(format!("coordinate {k} outside window")))?;
                    out.push(b as u128);
                }
            }
            Semimetric::AveragedZ { base, t } => {
                let mut a = x.clone();
                for j in 0..*t {
                    if j > 0 {
                        a = a.step()?;
                    }
                    base.embed_into(&a, out)?;
                }
            }
            Semimetric::AveragedGroup { base, n } => {
                for g in GroupElem::all(*n) {
                    base.embed_into(&x.act(g)?, out)?;
                }
            }
            Semimetric::Weighted(parts) => {
                for (_, rho) in parts {
                    rho.embed_into(x, out)?;
                }
            }
        }
        Ok(())
    }
}

/// Points reduced to key vectors under one semimetric, with identical points
/// merged (multiplicity kept, first-occurrence order).
#[derive(Clone, Debug)]
pub struct Embedded {
    pub weights: Vec<f64>,
    pub keys: Vec<Vec<u128>>,
    pub counts: Vec<usize>,
    pub total: usize,
}

impl Embedded {
    pub fn new(rho: &Semimetric, points: &[Point]) -> Result<Self> {
        let raw: Vec<Vec<u128>> = points.par_iter().map(|p| rho.embed(p)).collect::<Result<_>>()?;
        Ok(Self::from_keys(rho.weights(), raw))
    }

    pub fn from_keys(weights: Vec<f64>, raw: Vec<Vec<u128>>) -> Self {
        let total = raw.len();
        let mut index: HashMap<Vec<u128>, usize> = HashMap::new();
        let mut keys = Vec::new();
        let mut counts = Vec::new();
        for k in raw {
            match index.get(&k) {
                Some(&i) => counts[i] += 1,
                None => {
                    index.insert(k.clone(), keys.len());
                    keys.push(k);
                    counts.push(1);
                }
            }
        }
        Embedded { weights, keys, counts, total }
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        weighted_mismatch(&self.weights, &self.keys[i], &self.keys[j], f64::INFINITY)
    }

    /// Mean distance over all ordered sample pairs.
    pub fn mean_distance(&self) -> f64 {
        let u = self.keys.len();
        let s: f64 = (0..u)
            .into_par_iter()
            .map(|i| (0..u).map(|j| (self.counts[i] * self.counts[j]) as f64 * self.dist(i, j)).sum::<f64>())
            .sum();
        s / (self.total as f64 * self.total as f64)
    }
}

/// `sum w_i [a_i != b_i]`, stopping once the sum reaches `stop`.
fn weighted_mismatch(w: &[f64], a: &[u128], b: &[u128], stop: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        if a[i] != b[i] {
            s += w[i];
            if s >= stop {
                return s;
            }
        }
    }
    s
}

/// Greedy ball cover of a weighted finite set. `counts[i]` is the
/// multiplicity of point `i`; `adjacent(i, j)` must say whether `j` lies
/// in the ball around `i`. Returns the number of balls used until the
/// uncovered mass drops below `eps`.
pub fn greedy_cover<F>(counts: &[usize], eps: f64, adjacent: F) -> usize
where
    F: Fn(usize, usize) -> bool + Sync,
{
    let u = counts.len();
    let total: usize = counts.iter().sum();
    if u == 0 {
        return 0;
    }
    // ball membership is symmetric for semimetrics: test each pair once
    let upper: Vec<Vec<u32>> = (0..u)
        .into_par_iter()
        .map(|i| (i + 1..u).filter(|&j| adjacent(i, j)).map(|j| j as u32).collect())
        .collect();
    let mut nbrs: Vec<Vec<u32>> = (0..u).map(|i| vec![i as u32]).collect();
    for (i, row) in upper.iter().enumerate() {
        for &j in row {
            nbrs[i].push(j);
            nbrs[j as usize].push(i as u32);
        }
    }
    let mut gain: Vec<usize> = nbrs.iter().map(|ns| ns.iter().map(|&j| counts[j as usize]).sum()).collect();
    let mut covered = vec![false; u];
    let mut uncovered = total;
    let mut balls = 0;
    while (uncovered as f64) >= eps * total as f64 {
        let mut best = 0;
        for i in 1..u {
            if gain[i] > gain[best] {
                best = i;
            }
        }
        balls += 1;
        for &j in &nbrs[best] {
            let j = j as usize;
            if !covered[j] {
                covered[j] = true;
                uncovered -= counts[j];
                for &v in &nbrs[j] {
                    gain[v as usize] -= counts[j];
                }
            }
        }
    }
    balls
}

/// Greedy estimate of `H_eps` in bits for embedded points: balls of radius
/// `eps / 2` (strict), so every ball has diameter below `eps`.
pub fn entropy_of(emb: &Embedded, eps: f64) -> f64 {
    let r = eps / 2.0;
    let balls = greedy_cover(&emb.counts, eps, |i, j| {
        weighted_mismatch(&emb.weights, &emb.keys[i], &emb.keys[j], r) < r
    });
    (balls.max(1) as f64).log2()
}

/// Greedy estimate for points given with an arbitrary distance function.
pub fn entropy_with<F>(counts: &[usize], eps: f64, dist: F) -> f64
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let balls = greedy_cover(counts, eps, |i, j| dist(i, j) < eps / 2.0);
    (balls.max(1) as f64).log2()
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Invalid(format!("eps = {eps} outside (0, 1)")));
    }
    Ok(())
}

/// Draws `n_samples` points from the sampler and returns the greedy
/// `H_eps` estimate.
pub fn epsilon_entropy(
    sampler: &MeasureSampler,
    res: &Resolution,
    rho: &Semimetric,
    eps: f64,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    check_eps(eps)?;
    if n_samples < 100 {
        return Err(Error::Invalid(format!("n_samples = {n_samples} below 100")));
    }
    let s = MeasureSampler::new(sampler.kind.clone(), seed);
    let points: Vec<Point> = s.samples(n_samples, res)?.into_iter().map(Point::from).collect();
    Ok(entropy_of(&Embedded::new(rho, &points)?, eps))
}

/// Smallest number of atoms whose mass exceeds `1 - eps`, as bits: the
/// exact entropy when every positive distance is at least `eps`.
pub fn exact_entropy_atoms(masses: &[f64], eps: f64) -> f64 {
    let mut m = masses.to_vec();
    m.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut acc = 0.0;
    let mut k = 0;
    for v in m {
        if 1.0 - acc < eps {
            break;
        }
        acc += v;
        k += 1;
    }
    (k.max(1) as f64).log2()
}

/// Largest instance accepted by [`exact_entropy`].
pub const EXACT_LIMIT: usize = 24;

/// Exact `H_eps` of a finite weighted space: the fewest sets of diameter
/// below `eps` covering more than `1 - eps` of the mass. Sets may be taken
/// to be maximal cliques of the graph `d < eps`.
pub fn exact_entropy(masses: &[f64], dist: &[Vec<f64>], eps: f64) -> Result<f64> {
    let n = masses.len();
    if n > EXACT_LIMIT {
        return Err(Error::Limit(format!("{n} points above the exact covering limit {EXACT_LIMIT}")));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let adj: Vec<u32> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i && dist[i][j] < eps).fold(0u32, |m, j| m | 1 << j))
        .collect();
    let mut cliques = Vec::new();
    bron_kerbosch(0, (1u32 << n) - 1, 0, &adj, &mut cliques);
    let mass = |set: u32| (0..n).filter(|&i| set >> i & 1 == 1).map(|i| masses[i]).sum::<f64>();
    let need = 1.0 - eps;
    for k in 1..=cliques.len() {
        if covers(&cliques, k, 0, 0, &mass, need) {
            return Ok((k as f64).log2());
        }
    }
    Ok((cliques.len() as f64).log2())
}

fn bron_kerbosch(r: u32, mut p: u32, mut x: u32, adj: &[u32], out: &mut Vec<u32>) {
    if p == 0 && x == 0 {
        out.push(r);
        return;
    }
    let pivot = (p | x).trailing_zeros() as usize;
    let mut cand = p & !adj[pivot];
    while cand != 0 {
        let v = cand.trailing_zeros() as usize;
        cand &= cand - 1;
        bron_kerbosch(r | 1 << v, p & adj[v], x & adj[v], adj, out);
        p &= !(1 << v);
        x |= 1 << v;
    }
}

fn covers(cliques: &[u32], k: usize, start: usize, acc: u32, mass: &dyn Fn(u32) -> f64, need: f64) -> bool {
    if mass(acc) > need {
        return true;
    }
    if k == 0 {
        return false;
    }
    (start..cliques.len()).any(|i| covers(cliques, k - 1, i + 1, acc | cliques[i], mass, need))
}

/// Deterministic check of `(1/N) sum rho(x_j, y_j) <= (3/N^2) sum_jk rho(x_j, y_k)`.
pub fn three_factor_holds<T>(xs: &[T], ys: &[T], rho: impl Fn(&T, &T) -> f64) -> bool {
    let n = xs.len() as f64;
    let diag: f64 = xs.iter().zip(ys).map(|(x, y)| rho(x, y)).sum::<f64>() / n;
    let all: f64 = xs.iter().map(|x| ys.iter().map(|y| rho(x, y)).sum::<f64>()).sum::<f64>();
    diag <= 3.0 * all / (n * n)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub scale: u64,
    pub eps: f64,
    pub bits: f64,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EntropyCurve {
    pub points: Vec<CurvePoint>,
}

impl EntropyCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scale,eps,bits,samples,seed\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{},{},{}\n", p.scale, p.eps, p.bits, p.samples, p.seed));
        }
        out
    }

    /// `(scale, bits)` at one epsilon, in scale order.
    pub fn at_eps(&self, eps: f64) -> Vec<(u64, f64)> {
        let mut v: Vec<(u64, f64)> =
            self.points.iter().filter(|p| (p.eps - eps).abs() < 1e-12).map(|p| (p.scale, p.bits)).collect();
        v.sort_by_key(|p| p.0);
        v
    }

    /// Estimates that grow as epsilon grows at a fixed scale.
    pub fn eps_violations(&self) -> Vec<(u64, f64, f64)> {
        let mut out = Vec::new();
        let mut by_scale: HashMap<u64, Vec<(f64, f64)>> = HashMap::new();
        for p in &self.points {
            by_scale.entry(p.scale).or_default().push((p.eps, p.bits));
        }
        for (scale, mut v) in by_scale {
            v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            for w in v.windows(2) {
                if w[1].1 > w[0].1 {
                    out.push((scale, w[0].0, w[1].0));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub scales: Vec<u64>,
    /// `log2 H - log2 target` per scale.
    pub gaps: Vec<f64>,
    pub spread: f64,
    pub drift: f64,
    pub max_spread: f64,
    pub max_drift: f64,
    pub pass: bool,
    pub note: String,
}

pub const MAX_SPREAD: f64 = 2.0;
pub const MAX_DRIFT: f64 = 1.0;

/// Operational `≍`: gap spread at most 2 bits and, over the top half of the
/// scales, the gap moves by at most 1 bit from first to last.
pub fn asymp_compare(curve: &[(u64, f64)], target: &[f64]) -> CompareReport {
    let scales: Vec<u64> = curve.iter().map(|c| c.0).collect();
    let gaps: Vec<f64> = curve.iter().zip(target).map(|(c, t)| c.1.log2() - t.log2()).collect();
    let mut report = CompareReport {
        scales,
        gaps: gaps.clone(),
        spread: f64::NAN,
        drift: f64::NAN,
        max_spread: MAX_SPREAD,
        max_drift: MAX_DRIFT,
        pass: false,
        note: String::new(),
    };
    if curve.len() != target.len() || curve.len() < 4 {
        report.note = format!("need at least 4 scales with targets, got {} and {}", curve.len(), target.len());
        return report;
    }
    if gaps.iter().any(|g| !g.is_finite()) {
        report.note = "zero estimate or target at some scale".into();
        return report;
    }
    let max = gaps.iter().cloned().fold(f64::MIN, f64::max);
    let min = gaps.iter().cloned().fold(f64::MAX, f64::min);
    let top = &gaps[gaps.len() / 2..];
    report.spread = max - min;
    report.drift = (top[top.len() - 1] - top[0]).abs();
    report.pass = report.spread <= MAX_SPREAD && report.drift <= MAX_DRIFT;
    report
}

/// Verdict for a bounded curve: every estimate at most `bound` bits.
pub fn bounded(curve: &[(u64, f64)], bound: f64) -> bool {
    curve.iter().all(|c| c.1 <= bound)
}

/// `2^{sigma_0 + ... + sigma_{n-1}}`.
pub fn sigma_target(sigma: &SigmaSeq, n: u32) -> f64 {
    (2f64).powi(sigma.ones_below(n) as i32)
}

/// Entropy estimates at every epsilon for one set of points.
fn curve_points(
    emb: &Embedded,
    eps: &[f64],
    scale: u64,
    samples: usize,
    seed: u64,
) -> Vec<CurvePoint> {
    eps.iter().map(|&e| CurvePoint { scale, eps: e, bits: entropy_of(emb, e), samples, seed }).collect()
}

fn sampler_points(kind: &MeasureKind, res: &Resolution, n: usize, seed: u64) -> Result<Vec<Point>> {
    Ok(MeasureSampler::new(kind.clone(), seed).samples(n, res)?.into_iter().map(Point::from).collect())
}

/// Curve of `H_eps(average_group(rho, n))` under `sampler` for each level.
pub fn scaling_curve_d(
    kind: &MeasureKind,
    rho: &Semimetric,
    eps: &[f64],
    levels: &[u32],
    n_samples: usize,
    seed: u64,
) -> Result<EntropyCurve> {
    for &e in eps {
        check_eps(e)?;
    }
    let k = cut_depth(rho);
    let mut curve = EntropyCurve::default();
    for &n in levels {
        let s = derive_seed(seed, n as u64);
        let depth = n.max(k);
        let points = sampler_points(kind, &Resolution::coded(depth, depth), n_samples, s)?;
        let emb = Embedded::new(&rho.clone().average_group(n), &points)?;
        curve.points.extend(curve_points(&emb, eps, n as u64, n_samples, s));
    }
    Ok(curve)
}

/// Curve of `H_eps(average_z(rho, t))` at the dyadic times `t = 2^m`.
pub fn scaling_curve_z(
    kind: &MeasureKind,
    rho: &Semimetric,
    eps: &[f64],
    log_times: &[u32],
    n_samples: usize,
    seed: u64,
) -> Result<EntropyCurve> {
    for &e in eps {
        check_eps(e)?;
    }
    let mut curve = EntropyCurve::default();
    for &m in log_times {
        if m + 1 > Z_RESOLUTION {
            return Err(Error::ResolutionEscape(format!("t = 2^{m} needs more than {Z_RESOLUTION} digits")));
        }
        let t = 1u64 << m;
        let s = derive_seed(seed, t);
        let points = sampler_points(kind, &Resolution::coded(Z_RESOLUTION, Z_RESOLUTION), n_samples, s)?;
        let emb = Embedded::new(&rho.clone().average_z(t)?, &points)?;
        curve.points.extend(curve_points(&emb, eps, t, n_samples, s));
    }
    Ok(curve)
}

fn cut_depth(rho: &Semimetric) -> u32 {
    match rho {
        Semimetric::CodedCut { k } => *k,
        Semimetric::AveragedZ { base, .. } | Semimetric::AveragedGroup { base, .. } => cut_depth(base),
        Semimetric::Weighted(parts) => parts.iter().map(|p| cut_depth(&p.1)).max().unwrap_or(0),
        _ => 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coding::ZWindow;
    use crate::dyadic_group::{coset_index, Config, DigitSeq};
    use crate::measures::rng_from;
    use proptest::prelude::*;
    use rand::Rng;

    fn window_point(bits: Vec<u8>, alpha: &str) -> Point {
        Point::Symbolic(SymbolicPoint { window: ZWindow::new(0, bits).unwrap(), alpha: DigitSeq::parse(alpha).unwrap() })
    }

    fn coded(seed: u64, n: u32, m: u32) -> Point {
        let mut rng = rng_from(seed);
        let w = Config::from_fn(n, |_| rng.random()).unwrap();
        Point::Coded(CodedPoint::new(w, DigitSeq::from_bits(rng.random::<u64>() & ((1 << m) - 1), m).unwrap()))
    }

    fn omega(sigma: &str) -> MeasureKind {
        MeasureKind::OmegaSigma(SigmaSeq::parse(sigma).unwrap())
    }

    #[test]
    fn averaging_once_is_identity() {
        let rho = Semimetric::CodedCut { k: 1 };
        assert_eq!(rho.clone().average_z(1).unwrap(), rho);
        assert_eq!(rho.clone().average_group(0), rho);
    }

    #[test]
    fn averaged_coordinate_cut_is_hamming() {
        let mut rng = rng_from(1);
        let rho = Semimetric::WordCut { coord: 0 }.average_z(8).unwrap();
        let ham = Semimetric::Hamming { lo: 0, hi: 7 };
        for _ in 0..100 {
            let a = window_point((0..12).map(|_| rng.random_range(0..2)).collect(), "0000");
            let b = window_point((0..12).map(|_| rng.random_range(0..2)).collect(), "1010");
            let d = rho.eval(&a, &b).unwrap();
            assert_eq!(d, ham.eval(&a, &b).unwrap());
            let emb = Embedded::from_keys(rho.weights(), vec![rho.embed(&a).unwrap(), rho.embed(&b).unwrap()]);
            if emb.keys.len() == 2 {
                assert!((emb.dist(0, 1) - d).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn group_averaged_cut_is_hamming_on_restrictions() {
        for s in 0..30 {
            let (x, y) = (coded(2 * s, 5, 5), coded(2 * s + 1, 5, 5));
            let (Point::Coded(a), Point::Coded(b)) = (&x, &y) else { unreachable!() };
            for n in 0..=5 {
                let d = Semimetric::CodedCut { k: 0 }.average_group(n).eval(&x, &y).unwrap();
                let ham = (0..(1u64 << n)).filter(|&h| a.w_at(h) != b.w_at(h)).count() as f64 / (1u64 << n) as f64;
                assert_eq!(d, ham);
            }
        }
    }

    #[test]
    fn group_average_factors_through_coset_indices() {
        let sigma = SigmaSeq::parse("101101").unwrap();
        let s = MeasureSampler::new(MeasureKind::OmegaSigma(sigma), 3);
        let res = Resolution::coded(6, 6);
        let mut rng = rng_from(3);
        let rho = Semimetric::CodedCut { k: 0 }.average_group(6);
        for _ in 0..20 {
            let a = s.draw_coded(&mut rng, &res).unwrap();
            let b = s.draw_coded(&mut rng, &res).unwrap();
            let cosets = 1u64 << sigma.ones_below(6);
            let mut table_a = vec![false; cosets as usize];
            let mut table_b = vec![false; cosets as usize];
            for g in GroupElem::all(6) {
                let i = coset_index(g, &sigma, 6).unwrap() as usize;
                table_a[i] = a.w(g).unwrap();
                table_b[i] = b.w(g).unwrap();
            }
            let by_index = table_a.iter().zip(&table_b).filter(|(u, v)| u != v).count() as f64 / cosets as f64;
            assert_eq!(rho.eval(&Point::Coded(a), &Point::Coded(b)).unwrap(), by_index);
        }
    }

    #[test]
    fn adic_average_embedding_matches_eval() {
        let kind = omega("1011");
        let points = sampler_points(&kind, &Resolution::coded(12, 12), 40, 4).unwrap();
        for rho in [Semimetric::CodedCut { k: 0 }.average_z(16).unwrap(), Semimetric::CodedCut { k: 2 }.average_z(8).unwrap()] {
            let w = rho.weights();
            for pair in points.chunks(2) {
                let (a, b) = (rho.embed(&pair[0]), rho.embed(&pair[1]));
                match (a, b) {
                    (Ok(a), Ok(b)) => {
                        let d = weighted_mismatch(&w, &a, &b, f64::INFINITY);
                        assert!((d - rho.eval(&pair[0], &pair[1]).unwrap()).abs() < 1e-12);
                    }
                    _ => assert!(rho.eval(&pair[0], &pair[1]).is_err()),
                }
            }
        }
    }

    #[test]
    fn escape_is_reported() {
        let p = Point::Coded(CodedPoint::new(Config::zeros(3).unwrap(), DigitSeq::parse("111").unwrap()));
        let rho = Semimetric::CodedCut { k: 0 }.average_z(2).unwrap();
        assert!(rho.eval(&p, &p).is_err());
    }

    #[test]
    fn identical_points_give_zero_bits() {
        let pts = vec![window_point(vec![1, 0, 1], "0"); 200];
        let rho = Semimetric::Hamming { lo: 0, hi: 2 };
        let emb = Embedded::new(&rho, &pts).unwrap();
        assert_eq!(emb.keys.len(), 1);
        assert_eq!(entropy_of(&emb, 0.25), 0.0);
    }

    #[test]
    fn small_mean_distance_gives_zero_bits() {
        // 4% outliers: mean discrete distance about 0.077 < eps^2 / 2 = 0.125
        let mut pts = vec![window_point(vec![0, 0, 0, 0], "0"); 1920];
        for i in 0..80u8 {
            pts.push(window_point(vec![1, i & 1, (i >> 1) & 1, (i >> 2) & 1], "0"));
        }
        let rho = Semimetric::WordCut { coord: 0 };
        let emb = Embedded::new(&rho, &pts).unwrap();
        assert!(emb.mean_distance() < 0.5 * 0.5 / 2.0);
        assert_eq!(entropy_of(&emb, 0.5), 0.0);
    }

    fn cube_points(d: usize, n: usize, seed: u64) -> Vec<Point> {
        let mut rng = rng_from(seed);
        (0..n).map(|_| window_point((0..d).map(|_| rng.random_range(0..2)).collect(), "0")).collect()
    }

    /// log2 of the volume-counting lower bound on balls of radius below
    /// `eps/2` in the normalized Hamming cube.
    fn cube_volume_bound(d: usize, eps: f64) -> f64 {
        let r = ((eps / 2.0) * d as f64).ceil() as usize - 1;
        let mut vol = 0.0f64;
        let mut c = 1.0f64;
        for i in 0..=r {
            if i > 0 {
                c *= (d - i + 1) as f64 / i as f64;
            }
            vol += c;
        }
        ((1.0 - eps) * 2f64.powi(d as i32) / vol).log2()
    }

    #[test]
    fn cube_entropy_tracks_dimension_while_samples_suffice() {
        // the greedy estimate cannot exceed log2(n_samples), so the linear
        // law is only visible for dimensions well below that
        let mut ratios = Vec::new();
        for d in [4usize, 6, 8] {
            let emb = Embedded::new(&Semimetric::Hamming { lo: 0, hi: d as i64 - 1 }, &cube_points(d, 2000, d as u64)).unwrap();
            let h = entropy_of(&emb, 0.25);
            assert!(h >= cube_volume_bound(d, 0.25) - 1.0, "d {d}: {h}");
            ratios.push(h / d as f64);
        }
        let (lo, hi) = (ratios.iter().cloned().fold(9.0, f64::min), ratios.iter().cloned().fold(0.0, f64::max));
        assert!(hi / lo < 2.0, "{ratios:?}");
        assert!(cube_volume_bound(64, 0.25) > 30.0);
    }

    #[test]
    fn entropy_monotone_in_eps_and_metric() {
        let kind = omega("11111");
        let points = sampler_points(&kind, &Resolution::coded(5, 5), 1000, 5).unwrap();
        let mut prev_metric = vec![0.0; 3];
        for k in 0..=3 {
            let emb = Embedded::new(&Semimetric::CodedCut { k }.average_group(3), &points).unwrap();
            let hs: Vec<f64> = [0.1, 0.25, 0.5].iter().map(|&e| entropy_of(&emb, e)).collect();
            assert!(hs[0] >= hs[1] && hs[1] >= hs[2], "{hs:?}");
            for i in 0..3 {
                assert!(hs[i] >= prev_metric[i], "k {k}");
            }
            prev_metric = hs;
        }
    }

    #[test]
    fn subadditivity_surrogate() {
        // rho = Hamming on 12 coords <= rho1 + rho2 with halves weighted by 1/2
        let pts = cube_points(12, 1500, 6);
        let rho = Semimetric::Hamming { lo: 0, hi: 11 };
        let half = |lo, hi| Semimetric::Weighted(vec![(0.5, Semimetric::Hamming { lo, hi })]);
        let eps = 0.1;
        let h4 = entropy_of(&Embedded::new(&rho, &pts).unwrap(), 4.0 * eps);
        let h1 = entropy_of(&Embedded::new(&half(0, 5), &pts).unwrap(), eps);
        let h2 = entropy_of(&Embedded::new(&half(6, 11), &pts).unwrap(), eps);
        assert!(h4 <= h1 + h2 + 2.0, "{h4} {h1} {h2}");
    }

    #[test]
    fn exact_oracle_small_cases() {
        // two far clusters of equal mass
        let masses = vec![0.25; 4];
        let d = |a: usize, b: usize| if a / 2 == b / 2 { 0.05 } else { 1.0 };
        let dist: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(move |j| if i == j { 0.0 } else { d(i, j) })).map(|r| r.collect()).collect();
        assert_eq!(exact_entropy(&masses, &dist, 0.1).unwrap(), 1.0);
        assert_eq!(exact_entropy_atoms(&[0.5, 0.3, 0.15, 0.05], 0.1), 3f64.log2());
        assert!(exact_entropy(&vec![0.04; 25], &vec![vec![0.0; 25]; 25], 0.1).is_err());
    }

    #[test]
    fn greedy_is_never_below_exact_on_small_instances() {
        let mut rng = rng_from(7);
        for _ in 0..30 {
            let n = rng.random_range(4..12);
            let pts: Vec<Vec<u8>> = (0..n).map(|_| (0..6).map(|_| rng.random_range(0..2)).collect()).collect();
            let d = |a: &Vec<u8>, b: &Vec<u8>| a.iter().zip(b).filter(|(x, y)| x != y).count() as f64 / 6.0;
            let dist: Vec<Vec<f64>> = pts.iter().map(|a| pts.iter().map(|b| d(a, b)).collect()).collect();
            let masses = vec![1.0 / n as f64; n];
            for eps in [0.2, 0.4] {
                let exact = exact_entropy(&masses, &dist, eps).unwrap();
                let greedy = entropy_with(&vec![1; n], eps, |i, j| dist[i][j]);
                assert!(greedy + 1e-12 >= exact, "{greedy} < {exact}");
            }
        }
    }

    #[test]
    fn compare_examples() {
        let target: Vec<f64> = (3..9).map(|m| 2f64.powi(m)).collect();
        let exact: Vec<(u64, f64)> = (3..9).zip(&target).map(|(s, t)| (s, *t)).collect();
        let r = asymp_compare(&exact, &target);
        assert!(r.pass && r.spread == 0.0);
        let triple: Vec<(u64, f64)> = exact.iter().map(|(s, t)| (*s, 3.0 * t)).collect();
        let r = asymp_compare(&triple, &target);
        assert!(r.pass && (r.gaps[0] - 3f64.log2()).abs() < 1e-12);
        let squared: Vec<(u64, f64)> = exact.iter().map(|(s, t)| (*s, t * t)).collect();
        assert!(!asymp_compare(&squared, &target).pass);
        assert!(!asymp_compare(&exact[..3], &target[..3]).pass);
        assert!(serde_json::to_string(&r).is_ok());
    }

    #[test]
    fn d_curve_for_zero_sigma_is_flat() {
        let curve = scaling_curve_d(&omega("000000"), &Semimetric::CodedCut { k: 0 }, &[0.25], &[2, 4, 6], 300, 8).unwrap();
        assert!(bounded(&curve.at_eps(0.25), 2.0));
        assert!(curve.to_csv().starts_with("scale,eps,bits,samples,seed\n"));
    }

    #[test]
    fn z_curve_for_zero_sigma_is_flat() {
        let curve = scaling_curve_z(&omega("000000"), &Semimetric::CodedCut { k: 0 }, &[0.25], &[2, 4, 6], 300, 9).unwrap();
        assert!(bounded(&curve.at_eps(0.25), 2.0));
    }

    #[test]
    fn h_subgroup_curve_tracks_index() {
        let kind = MeasureKind::MH { h_mask: 1 };
        let levels = [2, 3, 4, 5];
        let curve = scaling_curve_d(&kind, &Semimetric::CodedCut { k: 0 }, &[0.25], &levels, 2000, 10).unwrap();
        let target: Vec<f64> = levels.iter().map(|&n| 2f64.powi(n as i32 - 1)).collect();
        let r = asymp_compare(&curve.at_eps(0.25), &target);
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn three_factor_on_integer_metric() {
        let mut rng = rng_from(11);
        for _ in 0..200 {
            let n = rng.random_range(1..10);
            let xs: Vec<i64> = (0..n).map(|_| rng.random_range(-20..20)).collect();
            let ys: Vec<i64> = (0..n).map(|_| rng.random_range(-20..20)).collect();
            assert!(three_factor_holds(&xs, &ys, |a, b| (a - b).abs() as f64));
        }
    }

    proptest! {
        #[test]
        fn cut_metrics_are_semimetrics(s in any::<u64>()) {
            let pts: Vec<Point> = (0..3).map(|i| coded(s.wrapping_add(i), 4, 4)).collect();
            for rho in [Semimetric::CodedCut { k: 2 }, Semimetric::CodedCut { k: 0 }.average_group(3),
                        Semimetric::Weighted(vec![(0.5, Semimetric::CodedCut { k: 1 }), (2.0, Semimetric::CodedCut { k: 3 })])] {
                let d = |i: usize, j: usize| rho.eval(&pts[i], &pts[j]).unwrap();
                for i in 0..3 {
                    prop_assert_eq!(d(i, i), 0.0);
                    for j in 0..3 {
                        prop_assert_eq!(d(i, j), d(j, i));
                        for k in 0..3 {
                            prop_assert!(d(i, k) <= d(i, j) + d(j, k) + 1e-12);
                        }
                    }
                }
            }
        }

        #[test]
        fn averaged_z_keeps_triangle(s in any::<u64>()) {
            let mut rng = rng_from(s);
            let pts: Vec<Point> = (0..3).map(|_| window_point((0..20).map(|_| rng.random_range(0..2)).collect(), "0000")).collect();
            let rho = Semimetric::WordCut { coord: 3 }.average_z(5).unwrap();
            let d = |i: usize, j: usize| rho.eval(&pts[i], &pts[j]).unwrap();
            prop_assert!(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-12);
        }
    }
}
