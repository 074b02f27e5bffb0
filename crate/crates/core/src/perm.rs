//! Permutation types and the constrained reference-order space.
//!
//! Items, ranks and stages are stored 0-based. Every textual and serialized
//! form (CSV, JSON, `Display`) is 1-based.
//!
//! A reference order `rho` lists, stage by stage, the rank assigned at that
//! stage. It is *constrained* when each stage assigns either the best or the
//! worst rank still free. Such orders are in bijection with binary codes
//! `W` of length `K` whose last flag is fixed to 1, so there are `2^(K-1)`
//! of them.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest `K` accepted by [`enumerate_constrained_space`].
pub const ENUMERATION_CAP: usize = 20;

/// Checks that `values` is a permutation of `0..values.len()`.
pub fn check_permutation(values: &[usize]) -> Result<()> {
    let k = values.len();
    let mut seen = vec![false; k];
    for &v in values {
        if v >= k {
            return Err(Error::NotAPermutation {
                len: k,
                reason: format!("value {} out of range", v + 1),
            });
        }
        if seen[v] {
            return Err(Error::NotAPermutation {
                len: k,
                reason: format!("value {} repeated", v + 1),
            });
        }
        seen[v] = true;
    }
    Ok(())
}

fn from_one_based(values: &[usize]) -> Result<Vec<usize>> {
    let k = values.len();
    values
        .iter()
        .map(|&v| {
            if v == 0 || v > k {
                Err(Error::NotAPermutation {
                    len: k,
                    reason: format!("value {v} out of range"),
                })
            } else {
                Ok(v - 1)
            }
        })
        .collect()
}

fn write_one_based(f: &mut fmt::Formatter<'_>, values: &[usize]) -> fmt::Result {
    write!(f, "(")?;
    for (j, v) in values.iter().enumerate() {
        if j > 0 {
            write!(f, ",")?;
        }
        write!(f, "{}", v + 1)?;
    }
    write!(f, ")")
}

fn invert(values: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; values.len()];
    for (i, &v) in values.iter().enumerate() {
        inv[v] = i;
    }
    inv
}

/// 1-based wire form shared by the permutation newtypes.
#[derive(Serialize, Deserialize)]
#[serde(transparent)]
struct OneBased(Vec<usize>);

macro_rules! permutation_newtype {
    ($name:ident) => {
        impl $name {
            /// Builds from 0-based entries.
            pub fn new(values: Vec<usize>) -> Result<Self> {
                check_permutation(&values)?;
                Ok(Self(values))
            }

            /// Builds from 1-based entries.
            pub fn from_one_based(values: &[usize]) -> Result<Self> {
                Self::new(from_one_based(values)?)
            }

            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }

            /// 0-based entries.
            pub fn as_slice(&self) -> &[usize] {
                &self.0
            }

            pub fn to_one_based(&self) -> Vec<usize> {
                self.0.iter().map(|v| v + 1).collect()
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write_one_based(f, &self.0)
            }
        }

        impl Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                OneBased(self.to_one_based()).serialize(s)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let OneBased(v) = OneBased::deserialize(d)?;
                Self::from_one_based(&v).map_err(serde::de::Error::custom)
            }
        }
    };
}

/// Rank held by each item: entry `i` is the rank of item `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ranking(Vec<usize>);

/// Item held by each rank: entry `j` is the item placed at rank `j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ordering(Vec<usize>);

permutation_newtype!(Ranking);
permutation_newtype!(Ordering);

impl Ordering {
    /// Item placed at `rank` (0-based).
    #[inline]
    pub fn item_at(&self, rank: usize) -> usize {
        self.0[rank]
    }
}

pub fn ranking_to_ordering(r: &Ranking) -> Ordering {
    Ordering(invert(&r.0))
}

pub fn ordering_to_ranking(o: &Ordering) -> Ranking {
    Ranking(invert(&o.0))
}

/// True when every stage of `rho` assigns the smallest or the largest rank
/// not yet assigned. `rho` is expected to be a permutation; anything else
/// returns false.
pub fn is_constrained(rho: &[usize]) -> bool {
    let k = rho.len();
    if k == 0 {
        return false;
    }
    let (mut lo, mut hi) = (0usize, k - 1);
    for &r in rho {
        if r == lo {
            lo += 1;
        } else if r == hi {
            // hi > lo here, so this cannot underflow
            hi -= 1;
        } else {
            return false;
        }
    }
    true
}

/// Binary top-or-bottom code of a constrained reference order.
///
/// `w[t]` is true when stage `t` assigns the best free rank; `f[t]` and
/// `b[t]` count the top and bottom assignments made before stage `t`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TopBottomCode {
    w: Vec<bool>,
    f: Vec<usize>,
    b: Vec<usize>,
}

impl TopBottomCode {
    /// Builds the code from its flags. The final flag must be set.
    pub fn from_w(w: Vec<bool>) -> Result<Self> {
        match w.last() {
            None => return Err(Error::InvalidCode("empty code".into())),
            Some(false) => {
                return Err(Error::InvalidCode("the final flag must be 1".into()));
            }
            Some(true) => {}
        }
        let mut f = Vec::with_capacity(w.len());
        let mut b = Vec::with_capacity(w.len());
        let mut tops = 0;
        for (t, &flag) in w.iter().enumerate() {
            f.push(tops);
            b.push(t - tops);
            if flag {
                tops += 1;
            }
        }
        Ok(Self { w, f, b })
    }

    /// Parses a bit string such as `"01001"`.
    pub fn from_bits(bits: &str) -> Result<Self> {
        let w = bits
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::InvalidCode(format!(
                    "unexpected character {other:?}"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_w(w)
    }

    pub fn w(&self) -> &[bool] {
        &self.w
    }

    pub fn f(&self) -> &[usize] {
        &self.f
    }

    pub fn b(&self) -> &[usize] {
        &self.b
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn bits(&self) -> String {
        self.w.iter().map(|&x| if x { '1' } else { '0' }).collect()
    }
}

/// Encodes a constrained reference order (0-based ranks).
pub fn rho_to_code(rho: &[usize]) -> Result<TopBottomCode> {
    let k = rho.len();
    if k == 0 {
        return Err(Error::InvalidCode("empty reference order".into()));
    }
    let mut w = Vec::with_capacity(k);
    let (mut tops, mut bottoms) = (0usize, 0usize);
    for &r in rho {
        let top = tops;
        let bottom = k - 1 - bottoms;
        if r == top {
            w.push(true);
            tops += 1;
        } else if r == bottom {
            w.push(false);
            bottoms += 1;
        } else {
            return Err(Error::Unconstrained(DisplayRanks(rho).to_string()));
        }
    }
    TopBottomCode::from_w(w)
}

/// Decodes a top-or-bottom code into 0-based ranks by stage.
pub fn code_to_rho(code: &TopBottomCode) -> Vec<usize> {
    let k = code.len();
    code.w
        .iter()
        .enumerate()
        .map(|(t, &top)| if top { code.f[t] } else { k - 1 - code.b[t] })
        .collect()
}

struct DisplayRanks<'a>(&'a [usize]);

impl fmt::Display for DisplayRanks<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_one_based(f, self.0)
    }
}

/// A reference order in the constrained space, with its cached code.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ReferenceOrder {
    ranks: Vec<usize>,
    code: TopBottomCode,
}

impl ReferenceOrder {
    /// Builds from 0-based ranks by stage; rejects orders outside the
    /// constrained space.
    pub fn new(ranks: Vec<usize>) -> Result<Self> {
        check_permutation(&ranks)?;
        let code = rho_to_code(&ranks)?;
        Ok(Self { ranks, code })
    }

    pub fn from_one_based(ranks: &[usize]) -> Result<Self> {
        Self::new(from_one_based(ranks)?)
    }

    pub fn from_code(code: TopBottomCode) -> Self {
        let ranks = code_to_rho(&code);
        Self { ranks, code }
    }

    pub fn from_bits(bits: &str) -> Result<Self> {
        Ok(Self::from_code(TopBottomCode::from_bits(bits)?))
    }

    /// Ranks assigned top-down: the standard Plackett-Luce order.
    pub fn forward(k: usize) -> Self {
        Self::from_code(TopBottomCode::from_w(vec![true; k.max(1)]).expect("valid code"))
    }

    /// Ranks assigned bottom-up.
    pub fn backward(k: usize) -> Self {
        let mut w = vec![false; k.max(1)];
        *w.last_mut().unwrap() = true;
        Self::from_code(TopBottomCode::from_w(w).expect("valid code"))
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    /// 0-based rank assigned at each stage.
    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn code(&self) -> &TopBottomCode {
        &self.code
    }

    pub fn bits(&self) -> String {
        self.code.bits()
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.ranks.iter().map(|r| r + 1).collect()
    }

    /// Position of this order in the lexicographic-by-`W` enumeration.
    pub fn code_index(&self) -> usize {
        let k = self.len();
        self.code.w[..k - 1]
            .iter()
            .fold(0usize, |acc, &bit| (acc << 1) | bit as usize)
    }

    /// The order obtained by exchanging stages `t` and `t + 1`, if it stays
    /// in the constrained space.
    pub fn swapped(&self, t: usize) -> Option<Self> {
        if t + 1 >= self.len() {
            return None;
        }
        let mut ranks = self.ranks.clone();
        ranks.swap(t, t + 1);
        rho_to_code(&ranks).ok().map(|code| Self { ranks, code })
    }
}

impl fmt::Display for ReferenceOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_one_based(f, &self.ranks)
    }
}

impl Serialize for ReferenceOrder {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        OneBased(self.to_one_based()).serialize(s)
    }
}

impl<'de> Deserialize<'de> for ReferenceOrder {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let OneBased(v) = OneBased::deserialize(d)?;
        Self::from_one_based(&v).map_err(serde::de::Error::custom)
    }
}

/// Decodes the `index`-th code (first flag is the most significant bit).
pub fn reference_order_from_index(k: usize, index: usize) -> Result<ReferenceOrder> {
    if k == 0 {
        return Err(Error::param("K must be at least 1"));
    }
    if k > usize::BITS as usize || index >> (k - 1) != 0 {
        return Err(Error::OutOfRange(format!("code index {index} for K = {k}")));
    }
    let w = (0..k)
        .map(|t| t == k - 1 || (index >> (k - 2 - t)) & 1 == 1)
        .collect();
    Ok(ReferenceOrder::from_code(TopBottomCode::from_w(w)?))
}

/// Every constrained reference order for `k` items, ordered
/// lexicographically by `W` read from the first stage.
pub fn enumerate_constrained_space(k: usize) -> Result<Vec<ReferenceOrder>> {
    if k == 0 {
        return Err(Error::param("K must be at least 1"));
    }
    if k > ENUMERATION_CAP {
        return Err(Error::SpaceTooLarge {
            k,
            cap: ENUMERATION_CAP,
        });
    }
    (0..1usize << (k - 1))
        .map(|index| reference_order_from_index(k, index))
        .collect()
}

/// Stages `t` (0-based) at which exchanging `rho[t]` and `rho[t + 1]` keeps
/// the order constrained. The last pair is always included.
pub fn applicable_swaps(rho: &ReferenceOrder) -> Vec<usize> {
    let k = rho.len();
    if k < 2 {
        return Vec::new();
    }
    let mut ranks = rho.ranks.clone();
    (0..k - 1)
        .filter(|&t| {
            ranks.swap(t, t + 1);
            let ok = is_constrained(&ranks);
            ranks.swap(t, t + 1);
            ok
        })
        .collect()
}

/// Items in order of selection: entry `t` is the item holding rank `rho[t]`.
pub fn compose_eta(o: &Ordering, rho: &ReferenceOrder) -> Result<Vec<usize>> {
    if o.len() != rho.len() {
        return Err(Error::DimensionMismatch {
            expected: rho.len(),
            got: o.len(),
        });
    }
    Ok(rho.ranks.iter().map(|&r| o.0[r]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rho(v: &[usize]) -> ReferenceOrder {
        ReferenceOrder::from_one_based(v).unwrap()
    }

    fn all_perms(k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in all_perms(k - 1) {
            for pos in 0..k {
                let mut q = p.clone();
                q.insert(pos, k - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn ranking_ordering_examples() {
        let cases: [(&[usize], &[usize]); 3] = [
            (&[1, 2, 3], &[1, 2, 3]),
            (&[3, 1, 2], &[2, 3, 1]),
            (&[2, 1], &[2, 1]),
        ];
        for (r, o) in cases {
            let got = ranking_to_ordering(&Ranking::from_one_based(r).unwrap());
            assert_eq!(got.to_one_based(), o);
            let back = ordering_to_ranking(&Ordering::from_one_based(o).unwrap());
            assert_eq!(back.to_one_based(), r);
        }
    }

    #[test]
    fn rejects_non_permutations() {
        assert!(Ranking::from_one_based(&[1, 2, 2]).is_err());
        assert!(Ordering::from_one_based(&[0, 1]).is_err());
        assert!(Ordering::from_one_based(&[1, 3]).is_err());
        assert!(ReferenceOrder::from_one_based(&[2, 1, 3]).is_err());
    }

    #[test]
    fn worked_example_encodes() {
        let code = rho(&[5, 1, 4, 3, 2]).code().clone();
        let w: Vec<u8> = code.w().iter().map(|&b| b as u8).collect();
        assert_eq!(w, [0, 1, 0, 0, 1]);
        assert_eq!(code.f(), [0, 0, 1, 1, 1]);
        assert_eq!(code.b(), [0, 1, 1, 2, 3]);
        assert_eq!(code.bits(), "01001");
    }

    #[test]
    fn worked_example_decodes() {
        let code = TopBottomCode::from_bits("01001").unwrap();
        let r = ReferenceOrder::from_code(code);
        assert_eq!(r.to_one_based(), [5, 1, 4, 3, 2]);
    }

    #[test]
    fn forward_and_backward_codes() {
        assert_eq!(ReferenceOrder::forward(5).bits(), "11111");
        assert_eq!(rho(&[5, 4, 3, 2, 1]).bits(), "00001");
        assert_eq!(ReferenceOrder::backward(5).to_one_based(), [5, 4, 3, 2, 1]);
        assert_eq!(
            ReferenceOrder::from_bits("11111").unwrap().to_one_based(),
            [1, 2, 3, 4, 5]
        );
    }

    #[test]
    fn final_flag_must_be_set() {
        assert!(TopBottomCode::from_bits("0100").is_err());
        assert!(TopBottomCode::from_bits("").is_err());
        assert!(TopBottomCode::from_bits("01x1").is_err());
    }

    #[test]
    fn is_constrained_examples() {
        assert!(is_constrained(&[4, 0, 3, 2, 1]));
        assert!(is_constrained(&[0, 2, 1]));
        assert!(!is_constrained(&[1, 0, 2]));
        assert!(is_constrained(&[0, 1, 2, 3]));
        assert!(is_constrained(&[0]));
    }

    #[test]
    fn enumeration_small_cases() {
        let one = enumerate_constrained_space(1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].to_one_based(), [1]);

        let three: Vec<Vec<usize>> = enumerate_constrained_space(3)
            .unwrap()
            .iter()
            .map(|r| r.to_one_based())
            .collect();
        assert_eq!(
            three,
            vec![vec![3, 2, 1], vec![3, 1, 2], vec![1, 3, 2], vec![1, 2, 3]]
        );
        assert_eq!(enumerate_constrained_space(5).unwrap().len(), 16);
    }

    #[test]
    fn enumeration_cap() {
        assert!(matches!(
            enumerate_constrained_space(21),
            Err(Error::SpaceTooLarge { k: 21, .. })
        ));
        assert!(enumerate_constrained_space(0).is_err());
    }

    #[test]
    fn enumeration_matches_brute_force_filter() {
        for k in 1..=7 {
            let mut brute: Vec<Vec<usize>> = all_perms(k)
                .into_iter()
                .filter(|p| is_constrained(p))
                .collect();
            let mut fast: Vec<Vec<usize>> = enumerate_constrained_space(k)
                .unwrap()
                .into_iter()
                .map(|r| r.ranks().to_vec())
                .collect();
            brute.sort();
            fast.sort();
            assert_eq!(brute, fast, "K = {k}");
        }
    }

    #[test]
    fn code_index_matches_enumeration_position() {
        for (i, r) in enumerate_constrained_space(6).unwrap().iter().enumerate() {
            assert_eq!(r.code_index(), i);
        }
    }

    #[test]
    fn applicable_swaps_examples() {
        assert_eq!(applicable_swaps(&rho(&[5, 1, 4, 3, 2])), [0, 1, 3]);
        assert_eq!(applicable_swaps(&rho(&[1, 2])), [0]);
        for r in enumerate_constrained_space(4).unwrap() {
            assert!(applicable_swaps(&r).contains(&2));
        }
    }

    #[test]
    fn applicable_swaps_exhaustive() {
        for k in 2..=7 {
            let space = enumerate_constrained_space(k).unwrap();
            for r in &space {
                let ok = applicable_swaps(r);
                for t in 0..k - 1 {
                    let mut ranks = r.ranks().to_vec();
                    ranks.swap(t, t + 1);
                    let member = space.iter().any(|s| s.ranks() == ranks.as_slice());
                    assert_eq!(ok.contains(&t), member, "{r} at {t}");
                    assert_eq!(r.swapped(t).is_some(), member);
                }
            }
        }
    }

    #[test]
    fn compose_eta_examples() {
        let o = |v: &[usize]| Ordering::from_one_based(v).unwrap();
        let id = compose_eta(&o(&[1, 2, 3]), &rho(&[1, 2, 3])).unwrap();
        assert_eq!(id, [0, 1, 2]);
        let e = compose_eta(&o(&[1, 2, 3]), &rho(&[3, 1, 2])).unwrap();
        assert_eq!(e, [2, 0, 1]);
        let e = compose_eta(&o(&[2, 3, 1]), &rho(&[3, 2, 1])).unwrap();
        assert_eq!(e, [0, 2, 1]);
        assert!(compose_eta(&o(&[1, 2]), &rho(&[1, 2, 3])).is_err());
    }

    #[test]
    fn display_and_serde_are_one_based() {
        let r = rho(&[5, 1, 4, 3, 2]);
        assert_eq!(r.to_string(), "(5,1,4,3,2)");
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(json, "[5,1,4,3,2]");
        let back: ReferenceOrder = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        assert!(serde_json::from_str::<ReferenceOrder>("[2,1,3]").is_err());
    }
}
