//! Hypercube corners and Hamming packings of sign vectors.
//!
//! A corner `z ∈ {0,1}^d` is identified with its little-endian rank: bit `i` of
//! the rank is coordinate `i` of `z`. Sign vectors (`α`) are indexed by that
//! rank, so `α[r]` is the sign attached to the corner of rank `r`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;

/// Largest dimension accepted by default. Everything that enumerates corners
/// allocates `2^d` entries, so this is a memory guard rather than a modelling
/// limit.
pub const DEFAULT_DIMENSION_CAP: u32 = 20;

/// Default number of draws attempted per packing slot before giving up.
pub const DEFAULT_RETRY_BUDGET: usize = 10_000;

/// Packing targets above this size are refused outright: greedy construction
/// is quadratic in the target.
pub const MAX_PACKING_TARGET: usize = 100_000;

pub fn check_dimension(d: u32, cap: u32) -> Result<()> {
    if d == 0 || d > cap {
        Err(Error::DimensionOutOfRange { d, cap })
    } else {
        Ok(())
    }
}

/// `2^d`, the number of corners.
pub fn corner_count(d: u32) -> usize {
    1usize << d
}

/// A corner `z` of `{0,1}^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CornerIndex {
    rank: usize,
    d: u32,
}

impl CornerIndex {
    pub fn new(rank: usize, d: u32) -> Result<Self> {
        if rank >= corner_count(d) {
            return Err(invalid("rank", format!("{rank} >= 2^{d}")));
        }
        Ok(Self { rank, d })
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        let mut rank = 0usize;
        for (i, &b) in bits.iter().enumerate() {
            match b {
                0 => {}
                1 => rank |= 1 << i,
                other => return Err(invalid("bits", format!("digit {other} at {i}"))),
            }
        }
        Self::new(rank, bits.len() as u32)
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> u32 {
        self.d
    }

    pub fn bit(&self, i: usize) -> u8 {
        ((self.rank >> i) & 1) as u8
    }

    pub fn bits(&self) -> Vec<u8> {
        (0..self.d as usize).map(|i| self.bit(i)).collect()
    }
}

/// All `2^d` corners in rank order.
pub fn enumerate_corners(d: u32) -> Result<Vec<CornerIndex>> {
    enumerate_corners_capped(d, DEFAULT_DIMENSION_CAP)
}

pub fn enumerate_corners_capped(d: u32, cap: u32) -> Result<Vec<CornerIndex>> {
    check_dimension(d, cap)?;
    Ok((0..corner_count(d))
        .map(|rank| CornerIndex { rank, d })
        .collect())
}

/// A sign vector `α ∈ {−1,+1}^{2^d}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<i64>", into = "Vec<i64>")]
pub struct AlphaVector {
    signs: Vec<i8>,
}

impl AlphaVector {
    pub fn new(signs: Vec<i8>) -> Result<Self> {
        if let Some((index, &v)) = signs.iter().enumerate().find(|(_, &s)| s != 1 && s != -1) {
            return Err(Error::InvalidSign {
                index,
                value: v as i64,
            });
        }
        Ok(Self { signs })
    }

    /// Builds a sign vector from the low `len` bits of packed words (bit set → +1).
    fn from_words(words: &[u64], len: usize) -> Self {
        let signs = (0..len)
            .map(|i| if (words[i / 64] >> (i % 64)) & 1 == 1 { 1 } else { -1 })
            .collect();
        Self { signs }
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    pub fn sign(&self, rank: usize) -> i8 {
        self.signs[rank]
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    fn words(&self) -> Vec<u64> {
        let mut words = vec![0u64; self.signs.len().div_ceil(64)];
        for (i, &s) in self.signs.iter().enumerate() {
            if s > 0 {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        words
    }
}

impl TryFrom<Vec<i64>> for AlphaVector {
    type Error = Error;

    fn try_from(v: Vec<i64>) -> Result<Self> {
        let mut signs = Vec::with_capacity(v.len());
        for (index, value) in v.into_iter().enumerate() {
            match value {
                1 => signs.push(1),
                -1 => signs.push(-1),
                value => return Err(Error::InvalidSign { index, value }),
            }
        }
        Ok(Self { signs })
    }
}

impl From<AlphaVector> for Vec<i64> {
    fn from(a: AlphaVector) -> Self {
        a.signs.into_iter().map(i64::from).collect()
    }
}

impl std::fmt::Display for AlphaVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for s in &self.signs {
            f.write_str(if *s > 0 { "+" } else { "-" })?;
        }
        Ok(())
    }
}

/// Number of positions where the two sign vectors differ.
pub fn hamming(a: &AlphaVector, b: &AlphaVector) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(a
        .signs
        .iter()
        .zip(&b.signs)
        .filter(|(x, y)| x != y)
        .count())
}

fn packed_distance(a: &[u64], b: &[u64]) -> usize {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x ^ y).count_ones() as usize)
        .sum()
}

/// Required pairwise separation `⌈2^d / 4⌉`.
pub fn required_distance(d: u32) -> usize {
    corner_count(d).div_ceil(4)
}

/// Default packing size `⌈(2/√e)^{2^d/2}⌉`.
pub fn packing_target(d: u32) -> f64 {
    let half = corner_count(d) as f64 / 2.0;
    (half * (std::f64::consts::LN_2 - 0.5)).exp().ceil()
}

/// A family of sign vectors with pairwise Hamming distance at least
/// `min_distance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackingSet {
    pub d: u32,
    pub min_distance: usize,
    pub members: Vec<AlphaVector>,
}

impl PackingSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Every sign vector of length `2^d`. Only a valid packing while
    /// `⌈2^d/4⌉ ≤ 1`, i.e. for `d ≤ 2`.
    pub fn all_sign_vectors(d: u32) -> Result<Self> {
        check_dimension(d, 2)?;
        let n = corner_count(d);
        let members = (0..1u64 << n)
            .map(|code| AlphaVector::from_words(&[code], n))
            .collect();
        Ok(Self {
            d,
            min_distance: required_distance(d),
            members,
        })
    }

    /// Smallest pairwise distance actually realised (`None` with fewer than two members).
    pub fn achieved_min_distance(&self) -> Option<usize> {
        let words: Vec<Vec<u64>> = self.members.iter().map(AlphaVector::words).collect();
        let mut best: Option<usize> = None;
        for i in 0..words.len() {
            for j in i + 1..words.len() {
                let dist = packed_distance(&words[i], &words[j]);
                best = Some(best.map_or(dist, |b| b.min(dist)));
            }
        }
        best
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Randomized greedy packing: draw uniform sign vectors and keep any that
/// are at least `⌈2^d/4⌉` away from every kept member.
pub fn build_packing(d: u32, seed: u64, target_size: Option<usize>) -> Result<PackingSet> {
    build_packing_with_budget(d, seed, target_size, DEFAULT_RETRY_BUDGET)
}

pub fn build_packing_with_budget(
    d: u32,
    seed: u64,
    target_size: Option<usize>,
    retries: usize,
) -> Result<PackingSet> {
    check_dimension(d, DEFAULT_DIMENSION_CAP)?;
    let target = match target_size {
        Some(0) => return Err(invalid("target_size", "must be positive")),
        Some(t) => t,
        None => {
            let t = packing_target(d);
            if t > MAX_PACKING_TARGET as f64 {
                return Err(invalid(
                    "d",
                    format!("default packing target {t:e} exceeds {MAX_PACKING_TARGET}"),
                ));
            }
            t as usize
        }
    };
    if target > MAX_PACKING_TARGET {
        return Err(invalid("target_size", format!("exceeds {MAX_PACKING_TARGET}")));
    }

    let n = corner_count(d);
    let n_words = n.div_ceil(64);
    let tail_mask = if n.is_multiple_of(64) { u64::MAX } else { (1u64 << (n % 64)) - 1 };
    let threshold = required_distance(d);
    let mut rng = rng::stream(seed, rng::PACKING_DOMAIN);
    let mut kept: Vec<Vec<u64>> = Vec::with_capacity(target);

    while kept.len() < target {
        let mut accepted = false;
        for _ in 0..retries {
            let mut cand: Vec<u64> = (0..n_words).map(|_| rng.gen::<u64>()).collect();
            *cand.last_mut().expect("at least one word") &= tail_mask;
            if kept.iter().all(|k| packed_distance(k, &cand) >= threshold) {
                kept.push(cand);
                accepted = true;
                break;
            }
        }
        if !accepted {
            return Err(Error::ConstructionFailure {
                achieved: kept.len(),
                target,
                retries,
            });
        }
    }

    Ok(PackingSet {
        d,
        min_distance: threshold,
        members: kept.iter().map(|w| AlphaVector::from_words(w, n)).collect(),
    })
}

/// What `verify_packing` found wrong.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum PackingViolation {
    WrongLength { member: usize, len: usize },
    ThresholdTooSmall { declared: usize, required: usize },
    Duplicate { first: usize, second: usize },
    TooClose { first: usize, second: usize, distance: usize },
}

impl std::fmt::Display for PackingViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::WrongLength { member, len } => write!(f, "member {member} has length {len}"),
            Self::ThresholdTooSmall { declared, required } => {
                write!(f, "declared min_distance {declared} < required {required}")
            }
            Self::Duplicate { first, second } => {
                write!(f, "members {first} and {second} are identical")
            }
            Self::TooClose {
                first,
                second,
                distance,
            } => write!(f, "members {first} and {second} at distance {distance}"),
        }
    }
}

/// Checks every packing invariant; returns the first violation, if any.
pub fn verify_packing(p: &PackingSet) -> std::result::Result<(), PackingViolation> {
    let n = corner_count(p.d);
    if let Some(member) = p.members.iter().position(|m| m.len() != n) {
        return Err(PackingViolation::WrongLength {
            member,
            len: p.members[member].len(),
        });
    }
    let required = required_distance(p.d);
    if p.min_distance < required {
        return Err(PackingViolation::ThresholdTooSmall {
            declared: p.min_distance,
            required,
        });
    }
    let words: Vec<Vec<u64>> = p.members.iter().map(AlphaVector::words).collect();
    for i in 0..words.len() {
        for j in i + 1..words.len() {
            let distance = packed_distance(&words[i], &words[j]);
            if distance == 0 {
                return Err(PackingViolation::Duplicate { first: i, second: j });
            }
            if distance < p.min_distance {
                return Err(PackingViolation::TooClose {
                    first: i,
                    second: j,
                    distance,
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn alpha(v: &[i8]) -> AlphaVector {
        AlphaVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn corners_in_rank_order() {
        let c1: Vec<Vec<u8>> = enumerate_corners(1).unwrap().iter().map(|c| c.bits()).collect();
        assert_eq!(c1, vec![vec![0], vec![1]]);
        let c2: Vec<Vec<u8>> = enumerate_corners(2).unwrap().iter().map(|c| c.bits()).collect();
        assert_eq!(c2, vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![1, 1]]);
        for (r, c) in enumerate_corners(5).unwrap().iter().enumerate() {
            assert_eq!(c.rank(), r);
            assert_eq!(CornerIndex::from_bits(&c.bits()).unwrap(), *c);
        }
    }

    #[test]
    fn corner_cap_is_enforced() {
        assert_eq!(
            enumerate_corners_capped(20, 16),
            Err(Error::DimensionOutOfRange { d: 20, cap: 16 })
        );
        assert!(enumerate_corners(0).is_err());
    }

    #[test]
    fn hamming_examples() {
        let a = alpha(&[1, 1, -1, 1]);
        assert_eq!(hamming(&a, &a).unwrap(), 0);
        assert_eq!(hamming(&a, &alpha(&[1, -1, -1, -1])).unwrap(), 2);
        assert_eq!(
            hamming(&a, &alpha(&[1, 1])),
            Err(Error::LengthMismatch {
                expected: 4,
                actual: 2
            })
        );
    }

    #[test]
    fn rejects_non_sign_entries() {
        assert!(AlphaVector::new(vec![1, 0]).is_err());
        assert!(serde_json::from_str::<AlphaVector>("[1,2]").is_err());
    }

    #[test]
    fn default_targets() {
        let t: Vec<f64> = (1..=4).map(packing_target).collect();
        assert_eq!(t, vec![2.0, 2.0, 3.0, 5.0]);
        assert_eq!(required_distance(1), 1);
        assert_eq!(required_distance(3), 2);
        assert_eq!(required_distance(4), 4);
    }

    #[test]
    fn d1_packing_is_exhaustively_valid() {
        // Only four sign vectors of length 2 exist; check the greedy output
        // against all of them.
        let p = build_packing(1, 11, None).unwrap();
        assert!(p.len() >= 2);
        let universe = PackingSet::all_sign_vectors(1).unwrap();
        for m in &p.members {
            assert!(universe.members.contains(m));
        }
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                assert!(hamming(&p.members[i], &p.members[j]).unwrap() >= 1);
            }
        }
    }

    #[test]
    fn d4_packing_meets_target() {
        let p = build_packing(4, 99, None).unwrap();
        assert!(p.len() >= 5);
        assert_eq!(verify_packing(&p), Ok(()));
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                assert!(hamming(&p.members[i], &p.members[j]).unwrap() >= 4);
            }
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let a = build_packing(3, 42, Some(4)).unwrap();
        let b = build_packing(3, 42, Some(4)).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn construction_failure_reports_best_size() {
        // Only 16 sign vectors of length 4 exist.
        match build_packing_with_budget(2, 1, Some(17), 50) {
            Err(Error::ConstructionFailure { achieved, target, .. }) => {
                assert_eq!(target, 17);
                assert!(achieved <= 16);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn verify_reports_violations() {
        let ok = build_packing(3, 5, None).unwrap();
        assert_eq!(verify_packing(&ok), Ok(()));

        let m = alpha(&[1, 1, 1, 1, -1, -1, -1, -1]);
        let dup = PackingSet {
            d: 3,
            min_distance: 2,
            members: vec![m.clone(), m.clone()],
        };
        assert_eq!(
            verify_packing(&dup),
            Err(PackingViolation::Duplicate { first: 0, second: 1 })
        );

        let close = PackingSet {
            d: 3,
            min_distance: 2,
            members: vec![m, alpha(&[1, 1, 1, 1, -1, -1, -1, 1])],
        };
        assert_eq!(
            verify_packing(&close),
            Err(PackingViolation::TooClose {
                first: 0,
                second: 1,
                distance: 1
            })
        );
    }

    #[test]
    fn json_shape() {
        let p = PackingSet {
            d: 1,
            min_distance: 1,
            members: vec![alpha(&[1, -1])],
        };
        assert_eq!(p.to_json().unwrap(), r#"{"d":1,"min_distance":1,"members":[[1,-1]]}"#);
        assert_eq!(PackingSet::from_json(&p.to_json().unwrap()).unwrap(), p);
    }

    fn sign_vec(len: usize) -> impl Strategy<Value = AlphaVector> {
        proptest::collection::vec(prop_oneof![Just(1i8), Just(-1i8)], len)
            .prop_map(|v| AlphaVector::new(v).unwrap())
    }

    proptest! {
        #[test]
        fn hamming_is_a_metric((a, b, c) in (sign_vec(16), sign_vec(16), sign_vec(16))) {
            let ab = hamming(&a, &b).unwrap();
            prop_assert_eq!(ab, hamming(&b, &a).unwrap());
            prop_assert_eq!(ab == 0, a == b);
            prop_assert!(hamming(&a, &c).unwrap() <= ab + hamming(&b, &c).unwrap());
        }

        #[test]
        fn greedy_output_always_verifies(d in 1u32..=4, seed in 0u64..100) {
            let p = build_packing(d, seed, None).unwrap();
            prop_assert!(p.len() as f64 >= packing_target(d));
            prop_assert_eq!(verify_packing(&p), Ok(()));
        }
    }
}
