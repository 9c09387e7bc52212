//! Turning an algorithm-view transcript into a reconstruction set.

use std::collections::HashMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::discrepancy::ReconstructionSet;
use crate::error::{invalid, Error, Result};
use crate::instance::{center, distance_to_center, orthant_corner, HardnessParams, Pick};
use crate::oracle::AlgorithmRound;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum ReconstructionPolicy {
    /// One lattice candidate per corner, chosen by estimated depth.
    #[default]
    SnapBest,
    /// The `k` best visited points after separation filtering.
    VisitedTopK { k: usize },
}

impl FromStr for ReconstructionPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "snap_best" {
            return Ok(Self::SnapBest);
        }
        if let Some(k) = s.strip_prefix("visited_topk") {
            let k = k.trim_start_matches([':', '=']);
            let k = if k.is_empty() {
                1
            } else {
                k.parse().map_err(|_| invalid("policy", format!("bad k in `{s}`")))?
            };
            if k == 0 {
                return Err(invalid("policy", "k must be positive"));
            }
            return Ok(Self::VisitedTopK { k });
        }
        Err(invalid("policy", format!("unknown policy `{s}`")))
    }
}

impl std::fmt::Display for ReconstructionPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::SnapBest => f.write_str("snap_best"),
            Self::VisitedTopK { k } => write!(f, "visited_topk:{k}"),
        }
    }
}

/// Incremental reconstruction state fed one round at a time.
#[derive(Debug, Clone)]
pub enum Reconstructor {
    SnapBest(SnapBest),
    VisitedTopK(VisitedTopK),
}

impl Reconstructor {
    pub fn new(params: &HardnessParams, policy: ReconstructionPolicy) -> Self {
        match policy {
            ReconstructionPolicy::SnapBest => Self::SnapBest(SnapBest::new(params.d, params.c)),
            ReconstructionPolicy::VisitedTopK { k } => Self::VisitedTopK(VisitedTopK::new(k, params.c)),
        }
    }

    pub fn observe(&mut self, x: &[f64], value: f64) {
        match self {
            Self::SnapBest(s) => s.observe(x, value),
            Self::VisitedTopK(v) => v.observe(x, value),
        }
    }

    pub fn snapshot(&self) -> ReconstructionSet {
        match self {
            Self::SnapBest(s) => s.snapshot(),
            Self::VisitedTopK(v) => v.snapshot(),
        }
    }
}

/// Ratio estimate of each candidate's weight.
///
/// Inside a cone of radius `c`, `E[ĝ] = c − w (c − r)/2^d`, so
/// `ŵ = 2^d Σ(c − ĝ) / Σ(c − r)` over observations within the cone.
/// A candidate never observed gets the neutral `1/2`; equal estimates
/// resolve to the deep candidate.
#[derive(Debug, Clone)]
pub struct SnapBest {
    d: u32,
    c: f64,
    /// `[num, den]` per candidate, index `2·rank + (pick == Shallow)`.
    sums: Vec<[f64; 2]>,
}

impl SnapBest {
    pub fn new(d: u32, c: f64) -> Self {
        Self {
            d,
            c,
            sums: vec![[0.0; 2]; 2 << d],
        }
    }

    pub fn observe(&mut self, x: &[f64], value: f64) {
        let rank = orthant_corner(x);
        for (slot, pick) in Pick::BOTH.into_iter().enumerate() {
            let r = distance_to_center(x, rank, pick);
            if r < self.c {
                let s = &mut self.sums[2 * rank + slot];
                s[0] += self.c - value;
                s[1] += self.c - r;
            }
        }
    }

    pub fn weight_estimate(&self, rank: usize, pick: Pick) -> f64 {
        let [num, den] = self.sums[2 * rank + usize::from(pick == Pick::Shallow)];
        if den > 0.0 {
            num * (1u64 << self.d) as f64 / den
        } else {
            0.5
        }
    }

    pub fn picks(&self) -> Vec<Pick> {
        (0..1usize << self.d)
            .map(|z| {
                if self.weight_estimate(z, Pick::Deep) >= self.weight_estimate(z, Pick::Shallow) {
                    Pick::Deep
                } else {
                    Pick::Shallow
                }
            })
            .collect()
    }

    pub fn snapshot(&self) -> ReconstructionSet {
        let points = self
            .picks()
            .into_iter()
            .enumerate()
            .map(|(z, p)| center(z, self.d, p))
            .collect();
        ReconstructionSet::complete(points).expect("one lattice point per corner")
    }
}

/// Mean observed value per distinct visited point.
#[derive(Debug, Clone)]
pub struct VisitedTopK {
    k: usize,
    c: f64,
    index: HashMap<Vec<u64>, usize>,
    /// `(point, sum, count)` in first-visit order.
    visits: Vec<(Vec<f64>, f64, u64)>,
}

impl VisitedTopK {
    pub fn new(k: usize, c: f64) -> Self {
        Self {
            k,
            c,
            index: HashMap::new(),
            visits: Vec::new(),
        }
    }

    pub fn observe(&mut self, x: &[f64], value: f64) {
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        match self.index.get(&key) {
            Some(&i) => {
                self.visits[i].1 += value;
                self.visits[i].2 += 1;
            }
            None => {
                self.index.insert(key, self.visits.len());
                self.visits.push((x.to_vec(), value, 1));
            }
        }
    }

    pub fn snapshot(&self) -> ReconstructionSet {
        let mut order: Vec<usize> = (0..self.visits.len()).collect();
        let mean = |i: usize| self.visits[i].1 / self.visits[i].2 as f64;
        order.sort_by(|&a, &b| mean(a).total_cmp(&mean(b)).then(a.cmp(&b)));
        let mut kept: Vec<Vec<f64>> = Vec::with_capacity(self.k);
        for i in order {
            if kept.len() == self.k {
                break;
            }
            let p = &self.visits[i].0;
            let far = kept
                .iter()
                .all(|q| q.iter().zip(p).map(|(a, b)| (a - b).abs()).sum::<f64>() > self.c);
            if far {
                kept.push(p.clone());
            }
        }
        ReconstructionSet::new(kept).expect("points share a dimension")
    }
}

/// Builds the reconstruction for a finished transcript.
pub fn reconstruct_set<'a, I>(rounds: I, params: &HardnessParams, policy: ReconstructionPolicy) -> ReconstructionSet
where
    I: IntoIterator<Item = AlgorithmRound<'a>>,
{
    let mut r = Reconstructor::new(params, policy);
    for round in rounds {
        r.observe(round.x, round.value);
    }
    r.snapshot()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::AlphaVector;
    use crate::instance::{Coupling, HardInstance, ThetaVector, DEFAULT_C};

    fn instance() -> HardInstance {
        let p = HardnessParams::new(2, 0.2, DEFAULT_C, Coupling::Signed).unwrap();
        HardInstance::new(
            AlphaVector::new(vec![1, -1, -1, 1]).unwrap(),
            ThetaVector::zeros(2),
            p,
            0,
        )
        .unwrap()
    }

    fn round(x: &[f64], value: f64) -> AlgorithmRound<'_> {
        AlgorithmRound {
            t: 0,
            x,
            value,
            subgradient: &[],
        }
    }

    #[test]
    fn exact_values_give_correct_picks() {
        let g = instance();
        let points: Vec<Vec<f64>> = (0..4)
            .flat_map(|z| Pick::BOTH.map(|p| center(z, 2, p)))
            .collect();
        let values: Vec<f64> = points.iter().map(|x| g.evaluate(x).unwrap()).collect();
        let s = reconstruct_set(
            points.iter().zip(&values).map(|(x, &v)| round(x, v)),
            g.params(),
            ReconstructionPolicy::SnapBest,
        );
        assert!(s.is_complete());
        for z in 0..4 {
            let want = center(z, 2, Pick::designated(g.alpha().sign(z)));
            assert_eq!(s.points()[z], want);
        }
        assert_eq!(crate::identify::error_e_t(&g, &s).unwrap(), 0.0);
    }

    #[test]
    fn empty_transcript_defaults_to_deep() {
        let g = instance();
        let s = reconstruct_set(std::iter::empty(), g.params(), ReconstructionPolicy::SnapBest);
        for z in 0..4 {
            assert_eq!(s.points()[z], center(z, 2, Pick::Deep));
        }
        s.check_separation(DEFAULT_C).unwrap();
    }

    #[test]
    fn top_one_is_the_best_visit() {
        let g = instance();
        let best = g.global_min().point.clone();
        let others = [vec![0.3, 0.3], vec![-0.5, 0.5], vec![0.0, 0.0]];
        let mut rounds: Vec<(Vec<f64>, f64)> = others.iter().map(|x| (x.clone(), g.evaluate(x).unwrap())).collect();
        rounds.insert(1, (best.clone(), g.evaluate(&best).unwrap()));
        let s = reconstruct_set(
            rounds.iter().map(|(x, v)| round(x, *v)),
            g.params(),
            ReconstructionPolicy::VisitedTopK { k: 1 },
        );
        assert_eq!(s.points(), &[best]);
    }

    #[test]
    fn top_k_is_separated() {
        let xs = [vec![0.5, 0.5], vec![0.52, 0.5], vec![0.25, 0.25], vec![-0.5, -0.5]];
        let vals = [0.01, 0.0, 0.02, 0.03];
        let s = reconstruct_set(
            xs.iter().zip(vals).map(|(x, v)| round(x, v)),
            instance().params(),
            ReconstructionPolicy::VisitedTopK { k: 3 },
        );
        assert_eq!(s.points(), &[vec![0.52, 0.5], vec![0.25, 0.25], vec![-0.5, -0.5]]);
        s.check_separation(DEFAULT_C).unwrap();
    }

    #[test]
    fn policy_parsing() {
        assert_eq!("snap_best".parse::<ReconstructionPolicy>().unwrap(), ReconstructionPolicy::SnapBest);
        assert_eq!(
            "visited_topk:4".parse::<ReconstructionPolicy>().unwrap(),
            ReconstructionPolicy::VisitedTopK { k: 4 }
        );
        assert!("visited_topk:0".parse::<ReconstructionPolicy>().is_err());
        assert!("best".parse::<ReconstructionPolicy>().is_err());
        let p = ReconstructionPolicy::VisitedTopK { k: 2 };
        assert_eq!(p.to_string().parse::<ReconstructionPolicy>().unwrap(), p);
    }
}
