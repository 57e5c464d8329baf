//! The graded graph of ordered pairs: floor-n vertices are labels in
//! `I^{D_n}`, a floor-(n+1) label is the concatenation of the labels of its
//! two children, and a path is stored canonically as (top label, edge
//! indices). Lower vertices are always recomputed from that pair.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::dyadic_group::{low_mask, Config, DigitSeq, GroupElem};
use crate::error::{Error, Result};

/// Deepest floor enumerated in exhaustive mode.
pub const EXHAUSTIVE_LIMIT: u32 = 4;

/// A vertex of floor `label.depth()`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Vertex {
    pub label: Config,
}

impl Vertex {
    pub fn floor(&self) -> u32 {
        self.label.depth()
    }

    /// The ordered pair `(v_0, v_1)` below this vertex.
    pub fn children(&self) -> Result<(Vertex, Vertex)> {
        Ok((
            Vertex { label: self.label.lower_half()? },
            Vertex { label: self.label.upper_half()? },
        ))
    }
}

/// A path from floor 0 to floor `depth`, stored as its top label and the
/// edge indices `alpha_1..alpha_depth` (`alpha_{n+1}` is the index of the edge
/// between floors `n` and `n+1`).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PathPrefix {
    top: Config,
    alpha: DigitSeq,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathRecord {
    pub depth: u32,
    pub label: String,
    pub alpha: String,
}

impl PathPrefix {
    pub fn new(top: Config, alpha: DigitSeq) -> Result<Self> {
        if top.depth() != alpha.len() {
            return Err(Error::DepthMismatch(top.depth(), alpha.len()));
        }
        Ok(PathPrefix { top, alpha })
    }

    /// Builds a path from an explicit vertex list `v_0..v_N`, checking that
    /// each `v_n` is the `alpha_{n+1}`-half of `v_{n+1}`.
    pub fn from_vertices(vertices: &[Config], alpha: DigitSeq) -> Result<Self> {
        let n = alpha.len() as usize;
        if vertices.len() != n + 1 {
            return Err(Error::DepthMismatch(vertices.len() as u32, alpha.len() + 1));
        }
        for (i, v) in vertices.iter().enumerate() {
            if v.depth() != i as u32 {
                return Err(Error::DepthMismatch(v.depth(), i as u32));
            }
        }
        for i in 0..n {
            let shift = (alpha.digit(i as u32 + 1)? as u64) << i;
            let upper = &vertices[i + 1];
            for h in 0..(1u64 << i) {
                if vertices[i].get(h) != upper.get(h ^ shift) {
                    return Err(Error::Invalid(format!(
                        "vertex on floor {i} is not the selected half of floor {}",
                        i + 1
                    )));
                }
            }
        }
        PathPrefix::new(vertices[n].clone(), alpha)
    }

    pub fn depth(&self) -> u32 {
        self.alpha.len()
    }

    pub fn top(&self) -> &Config {
        &self.top
    }

    pub fn alpha(&self) -> &DigitSeq {
        &self.alpha
    }

    /// The vertex on floor `n`, obtained by descending from the top and
    /// taking at each floor the half selected by the edge index.
    pub fn vertex(&self, n: u32) -> Result<Config> {
        if n > self.depth() {
            return Err(Error::DepthMismatch(n, self.depth()));
        }
        let mut v = self.top.clone();
        for floor in (n..self.depth()).rev() {
            v = if self.alpha.digit(floor + 1)? == 0 { v.lower_half()? } else { v.upper_half()? };
        }
        Ok(v)
    }

    pub fn vertices(&self) -> Result<Vec<Config>> {
        let mut out = vec![self.top.clone()];
        for floor in (0..self.depth()).rev() {
            let v = out.last().unwrap();
            let next = if self.alpha.digit(floor + 1)? == 0 { v.lower_half()? } else { v.upper_half()? };
            out.push(next);
        }
        out.reverse();
        Ok(out)
    }

    pub fn to_record(&self) -> PathRecord {
        PathRecord { depth: self.depth(), label: self.top.to_hex(), alpha: self.alpha.to_string() }
    }

    pub fn from_record(r: &PathRecord) -> Result<Self> {
        let alpha = DigitSeq::parse(&r.alpha)?;
        PathPrefix::new(Config::from_hex(r.depth, &r.label)?, alpha)
    }
}

/// How counts are obtained.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum CountMode {
    Formula,
    Exhaustive,
}

/// Number of vertices on floor `n`.
pub fn vertex_count(n: u32, mode: CountMode) -> Result<u128> {
    match mode {
        CountMode::Formula => {
            if n > 6 {
                return Err(Error::Limit(format!("2^(2^{n}) does not fit in 128 bits")));
            }
            Ok(1u128 << (1u32 << n))
        }
        CountMode::Exhaustive => Ok(floor_labels(n)?.len() as u128),
    }
}

/// All distinct labels of floor `n`, built as ordered pairs of floor-(n-1)
/// labels.
pub fn floor_labels(n: u32) -> Result<Vec<Config>> {
    if n > EXHAUSTIVE_LIMIT {
        return Err(Error::Limit(format!("floor {n} beyond exhaustive limit {EXHAUSTIVE_LIMIT}")));
    }
    let mut labels = vec![Config::from_u64(0, 0)?, Config::from_u64(0, 1)?];
    for _ in 0..n {
        let mut next = std::collections::HashSet::new();
        for a in &labels {
            for b in &labels {
                next.insert(Config::concat(a, b)?);
            }
        }
        let mut v: Vec<Config> = next.into_iter().collect();
        v.sort_by_key(|c| c.to_hex());
        labels = v;
    }
    Ok(labels)
}

/// Number of paths from floor 0 into `v`, counted recursively through both
/// children.
pub fn paths_into(v: &Vertex) -> Result<u128> {
    if v.floor() == 0 {
        return Ok(1);
    }
    let (a, b) = v.children()?;
    Ok(paths_into(&a)? + paths_into(&b)?)
}

/// Every path of the given depth, ordered by top label then edge indices.
pub fn enumerate_paths(depth: u32) -> Result<Vec<PathPrefix>> {
    let mut out = Vec::new();
    for top in floor_labels(depth)? {
        for a in 0..(1u64 << depth) {
            out.push(PathPrefix::new(top.clone(), DigitSeq::from_bits(a, depth)?)?);
        }
    }
    Ok(out)
}

/// The successor of `x` in the reverse-lexicographic order within its tail
/// class: the first edge with index 0 switches to index 1 and every lower
/// edge switches to index 0.
pub fn adic_successor(x: &PathPrefix) -> Result<PathPrefix> {
    let n = x.depth();
    let first_zero = (1..=n).find(|&i| x.alpha.digit(i) == Ok(0));
    let Some(i) = first_zero else {
        return Err(Error::Undefined { what: "adic successor", resolution: n });
    };
    let mut bits = x.alpha.bits();
    bits |= 1 << (i - 1);
    bits &= !low_mask(i - 1);
    PathPrefix::new(x.top.clone(), DigitSeq::from_bits(bits, n)?)
}

/// The action of `g` on paths: for each generator `g_m` in `g` the edge
/// entering floor `m + 1` changes its index; floors above stay fixed and
/// lower vertices are recomputed.
pub fn kappa(g: GroupElem, x: &PathPrefix) -> Result<PathPrefix> {
    g.check_depth(x.depth())?;
    let mut alpha = x.alpha;
    let mut m = g.mask();
    while m != 0 {
        let i = m.trailing_zeros();
        alpha = alpha.xor_elem(GroupElem::from_mask_unchecked(1 << i))?;
        m &= m - 1;
    }
    PathPrefix::new(x.top.clone(), alpha)
}

/// Reverse-lexicographic comparison of two paths in the same tail class:
/// the order is decided by the highest edge where they differ. Paths with
/// different depths or top vertices are incomparable.
pub fn compare_reverse_lex(x: &PathPrefix, y: &PathPrefix) -> Option<Ordering> {
    if x.depth() != y.depth() || x.top != y.top {
        return None;
    }
    for i in (1..=x.depth()).rev() {
        let (a, b) = (x.alpha.digit(i).ok()?, y.alpha.digit(i).ok()?);
        if a != b {
            return Some(a.cmp(&b));
        }
    }
    Some(Ordering::Equal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::{BTreeSet, HashSet};

    #[test]
    fn vertex_counts() {
        assert_eq!(vertex_count(0, CountMode::Exhaustive).unwrap(), 2);
        assert_eq!(vertex_count(2, CountMode::Exhaustive).unwrap(), 16);
        for n in 0..=EXHAUSTIVE_LIMIT {
            assert_eq!(
                vertex_count(n, CountMode::Exhaustive).unwrap(),
                vertex_count(n, CountMode::Formula).unwrap()
            );
        }
        assert!(vertex_count(5, CountMode::Exhaustive).is_err());
        assert_eq!(vertex_count(6, CountMode::Formula).unwrap(), 1u128 << 64);
        assert!(vertex_count(7, CountMode::Formula).is_err());
    }

    #[test]
    fn paths_into_each_vertex() {
        for n in 0..=3 {
            for v in floor_labels(n).unwrap() {
                assert_eq!(paths_into(&Vertex { label: v }).unwrap(), 1u128 << n);
            }
        }
    }

    #[test]
    fn total_paths_at_depth_three() {
        let paths = enumerate_paths(3).unwrap();
        assert_eq!(paths.len(), 2048);
        let distinct: HashSet<(Vec<Config>, u64)> =
            paths.iter().map(|p| (p.vertices().unwrap(), p.alpha().bits())).collect();
        assert_eq!(distinct.len(), 2048);
        let by_top: u128 = floor_labels(3).unwrap().into_iter().map(|v| paths_into(&Vertex { label: v }).unwrap()).sum();
        assert_eq!(by_top, 2048);
    }

    #[test]
    fn vertices_satisfy_consistency() {
        for p in enumerate_paths(2).unwrap() {
            let vs = p.vertices().unwrap();
            assert_eq!(PathPrefix::from_vertices(&vs, *p.alpha()).unwrap(), p);
            for (n, v) in vs.iter().enumerate() {
                assert_eq!(&p.vertex(n as u32).unwrap(), v);
            }
        }
        let p = &enumerate_paths(2).unwrap()[37];
        let mut vs = p.vertices().unwrap();
        vs[1] = Config::from_u64(1, vs[1].low_word() ^ 1).unwrap();
        assert!(PathPrefix::from_vertices(&vs, *p.alpha()).is_err());
    }

    #[test]
    fn successor_examples() {
        let top = Config::from_fn(3, |h| h % 3 == 0).unwrap();
        let x = PathPrefix::new(top.clone(), DigitSeq::parse("011").unwrap()).unwrap();
        let y = adic_successor(&x).unwrap();
        assert_eq!(y.alpha().to_string(), "111");
        for n in 1..=3 {
            assert_eq!(x.vertex(n).unwrap(), y.vertex(n).unwrap());
        }
        let x = PathPrefix::new(top.clone(), DigitSeq::parse("110").unwrap()).unwrap();
        let y = adic_successor(&x).unwrap();
        assert_eq!(y.alpha().to_string(), "001");
        assert_eq!(x.vertex(3).unwrap(), y.vertex(3).unwrap());
        let x = PathPrefix::new(top, DigitSeq::parse("111").unwrap()).unwrap();
        assert!(matches!(adic_successor(&x), Err(Error::Undefined { .. })));
    }

    #[test]
    fn successor_walks_tail_class_in_order() {
        for n in [1u32, 4, 7, 10] {
            let top = Config::from_fn(n, |h| (h.wrapping_mul(2654435761) >> 7) & 1 == 1).unwrap();
            let mut all: Vec<PathPrefix> = (0..(1u64 << n))
                .map(|a| PathPrefix::new(top.clone(), DigitSeq::from_bits(a, n).unwrap()).unwrap())
                .collect();
            all.sort_by(|a, b| compare_reverse_lex(a, b).unwrap());
            let mut x = PathPrefix::new(top.clone(), DigitSeq::zeros(n).unwrap()).unwrap();
            for expected in all.iter().skip(1) {
                x = adic_successor(&x).unwrap();
                assert_eq!(&x, expected);
            }
            assert!(adic_successor(&x).is_err());
        }
    }

    #[test]
    fn kappa_is_an_action_with_orbits_of_size_2n() {
        let paths = enumerate_paths(4).unwrap();
        for x in paths.iter().step_by(4099) {
            assert_eq!(&kappa(GroupElem::ZERO, x).unwrap(), x);
            for m in 0..4 {
                let g = GroupElem::generator(m).unwrap();
                let y = kappa(g, x).unwrap();
                assert_eq!(&kappa(g, &y).unwrap(), x);
                assert_eq!(y.alpha().digit(m + 1).unwrap(), 1 - x.alpha().digit(m + 1).unwrap());
                for f in (m + 1)..=4 {
                    assert_eq!(y.vertex(f).unwrap(), x.vertex(f).unwrap());
                }
            }
            for n in 0..=4u32 {
                let orbit: BTreeSet<u64> = GroupElem::all(n)
                    .map(|g| kappa(g, x).unwrap().alpha().bits())
                    .collect();
                assert_eq!(orbit.len(), 1 << n);
                // the tail class element: same vertices from floor n upward
                let class: BTreeSet<u64> = (0..16u64)
                    .map(|b| PathPrefix::new(x.top().clone(), DigitSeq::from_bits(b, 4).unwrap()).unwrap())
                    .filter(|y| (n..=4).all(|f| y.vertex(f).unwrap() == x.vertex(f).unwrap()))
                    .filter(|y| y.alpha().bits() >> n == x.alpha().bits() >> n)
                    .map(|y| y.alpha().bits())
                    .collect();
                assert_eq!(orbit, class);
            }
        }
    }

    #[test]
    fn kappa_rejects_out_of_depth() {
        let x = &enumerate_paths(2).unwrap()[5];
        assert!(kappa(GroupElem::new(4).unwrap(), x).is_err());
    }

    #[test]
    fn record_round_trip() {
        for p in enumerate_paths(2).unwrap().iter().step_by(13) {
            let r = p.to_record();
            let s = serde_json::to_string(&r).unwrap();
            let back: PathRecord = serde_json::from_str(&s).unwrap();
            assert_eq!(&PathPrefix::from_record(&back).unwrap(), p);
        }
    }

    proptest! {
        #[test]
        fn successor_is_next_in_order(bits in any::<u64>(), a in 0u64..64) {
            let top = Config::from_u64(6, bits).unwrap();
            let x = PathPrefix::new(top.clone(), DigitSeq::from_bits(a, 6).unwrap()).unwrap();
            if a != 63 {
                let y = adic_successor(&x).unwrap();
                prop_assert_eq!(compare_reverse_lex(&x, &y), Some(Ordering::Less));
                for b in 0u64..64 {
                    let z = PathPrefix::new(top.clone(), DigitSeq::from_bits(b, 6).unwrap()).unwrap();
                    let between = compare_reverse_lex(&x, &z) == Some(Ordering::Less)
                        && compare_reverse_lex(&z, &y) == Some(Ordering::Less);
                    prop_assert!(!between);
                }
            }
        }
    }
}
