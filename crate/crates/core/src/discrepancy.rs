//! The discrepancy premetric ρ between two instances, its minimum Ψ over a
//! packing, and the uniqueness check built on it.
//!
//! Errors are summed per element: every point of a reconstruction contributes
//! `g(x) − inf g`, so ρ is non-negative and a complete reconstruction collects
//! one term per corner.

use std::io::Write;

use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geometry::{check_dimension, corner_count, PackingSet};
use crate::instance::{center, HardInstance, HardnessParams, Pick, ThetaVector};
use crate::rng;

/// Cap on states visited by [`psi_bruteforce`].
pub const PSI_WORK_LIMIT: u128 = 1 << 31;

/// Candidate minimizers proposed by an optimizer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReconstructionSet {
    points: Vec<Vec<f64>>,
    /// `assignment[z]` is the index of the point assigned to corner `z`.
    assignment: Option<Vec<usize>>,
}

impl ReconstructionSet {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(first) = points.first() {
            for p in &points {
                if p.len() != first.len() {
                    return Err(Error::LengthMismatch {
                        expected: first.len(),
                        actual: p.len(),
                    });
                }
            }
        }
        Ok(Self {
            points,
            assignment: None,
        })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// A complete set whose `z`-th point belongs to corner `z`.
    pub fn complete(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        if n == 0 || !n.is_power_of_two() {
            return Err(invalid("points", format!("{n} points cannot cover a corner set")));
        }
        let d = n.trailing_zeros() as usize;
        let mut s = Self::new(points)?;
        if s.points[0].len() != d {
            return Err(Error::LengthMismatch {
                expected: d,
                actual: s.points[0].len(),
            });
        }
        s.assignment = Some((0..n).collect());
        Ok(s)
    }

    /// The complete lattice reconstruction taking `picks[z]` at corner `z`.
    pub fn from_picks(d: u32, picks: &[Pick]) -> Result<Self> {
        if picks.len() != corner_count(d) {
            return Err(Error::LengthMismatch {
                expected: corner_count(d),
                actual: picks.len(),
            });
        }
        Self::complete(
            picks
                .iter()
                .enumerate()
                .map(|(z, &p)| center(z, d, p))
                .collect(),
        )
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.assignment.is_some()
    }

    pub fn assignment(&self) -> Option<&[usize]> {
        self.assignment.as_deref()
    }

    /// Every pair of points must be more than `c` apart in L1.
    pub fn check_separation(&self, c: f64) -> Result<()> {
        for (i, a) in self.points.iter().enumerate() {
            for (j, b) in self.points.iter().enumerate().skip(i + 1) {
                let distance: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
                if distance <= c {
                    return Err(Error::SeparationViolation {
                        first: i,
                        second: j,
                        distance,
                        required: c,
                    });
                }
            }
        }
        Ok(())
    }
}

/// `Σ_{x∈S} (g(x) − inf g)` without the separation check.
pub(crate) fn error_sum(g: &HardInstance, s: &ReconstructionSet) -> Result<f64> {
    let inf = g.global_min().value;
    s.points()
        .iter()
        .map(|x| g.evaluate(x).map(|v| (v - inf).max(0.0)))
        .sum()
}

/// `ρ(g_A, g_B; S) = Σ_{x∈S} [(g_A(x) − inf g_A) + (g_B(x) − inf g_B)]`.
pub fn rho(ga: &HardInstance, gb: &HardInstance, s: &ReconstructionSet) -> Result<f64> {
    if ga.params() != gb.params() {
        return Err(Error::ParameterMismatch);
    }
    if s.is_empty() {
        return Err(invalid("S", "reconstruction set is empty"));
    }
    s.check_separation(ga.params().c)?;
    Ok(error_sum(ga, s)? + error_sum(gb, s)?)
}

/// One minimizing configuration per packing pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsiWitness {
    pub alpha_idx: usize,
    pub beta_idx: usize,
    /// Grid index per corner for each of the two depth vectors, `a/b`.
    pub theta_config: String,
    /// `D` or `S` per corner, in rank order.
    pub s_config: String,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsiReport {
    pub psi: f64,
    pub witnesses: Vec<PsiWitness>,
}

impl PsiReport {
    /// The witness that attains Ψ.
    pub fn argmin(&self) -> &PsiWitness {
        self.witnesses
            .iter()
            .min_by(|a, b| a.rho.total_cmp(&b.rho))
            .expect("at least one pair")
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.witnesses {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn digits(mut code: usize, base: usize, len: usize) -> Vec<usize> {
    let mut v = Vec::with_capacity(len);
    for _ in 0..len {
        v.push(code % base);
        code /= base;
    }
    v
}

fn picks_of(code: usize, n: usize) -> Vec<Pick> {
    (0..n)
        .map(|z| if (code >> z) & 1 == 0 { Pick::Deep } else { Pick::Shallow })
        .collect()
}

fn pick_string(code: usize, n: usize) -> String {
    picks_of(code, n)
        .iter()
        .map(|p| match p {
            Pick::Deep => 'D',
            Pick::Shallow => 'S',
        })
        .collect()
}

fn grid_string(code: usize, base: usize, n: usize) -> String {
    digits(code, base, n)
        .iter()
        .map(|k| char::from_digit(*k as u32, 36).unwrap_or('?'))
        .collect()
}

/// `Ψ`: the smallest ρ over distinct packing pairs, depth vectors on a grid
/// over `[0, 1/4 − δ/2]` (endpoints included, each corner independently) and
/// complete lattice reconstructions.
///
/// ρ splits into one term per instance, so the depth infimum is taken per
/// member and per reconstruction before pairing.
pub fn psi_bruteforce(
    params: &HardnessParams,
    packing: &PackingSet,
    theta_grid_steps: usize,
) -> Result<PsiReport> {
    params.validate()?;
    check_dimension(params.d, 3)?;
    if theta_grid_steps < 2 {
        return Err(invalid("theta_grid_steps", "need at least the two endpoints"));
    }
    if packing.d != params.d {
        return Err(Error::ParameterMismatch);
    }
    if packing.len() < 2 {
        return Err(invalid("packing", "need at least two members"));
    }
    let n = params.corners();
    let s_count = 1usize << n;
    let theta_count = (theta_grid_steps as u128).pow(n as u32);
    let work = packing.len() as u128 * theta_count * s_count as u128 * n as u128;
    if work > PSI_WORK_LIMIT {
        return Err(Error::WorkLimit {
            work,
            limit: PSI_WORK_LIMIT,
        });
    }
    let theta_count = theta_count as usize;
    let grid: Vec<f64> = (0..theta_grid_steps)
        .map(|k| params.theta_max() * k as f64 / (theta_grid_steps - 1) as f64)
        .collect();

    // best[m][s] = (min over depth configs of Σ_z (D* − w_z), argmin config),
    // with weights kept as offsets from 1/2
    let mut best = vec![vec![(f64::INFINITY, 0usize); s_count]; packing.len()];
    let mut weights = vec![[0.0f64; 2]; n];
    for (m, alpha) in packing.members.iter().enumerate() {
        for tc in 0..theta_count {
            let ks = digits(tc, theta_grid_steps, n);
            let mut top = f64::NEG_INFINITY;
            for z in 0..n {
                let (a, t) = (alpha.sign(z), grid[ks[z]]);
                weights[z] = [
                    params.candidate_tilt(a, t, Pick::Deep),
                    params.candidate_tilt(a, t, Pick::Shallow),
                ];
                top = top.max(weights[z][0]).max(weights[z][1]);
            }
            for (sc, slot) in best[m].iter_mut().enumerate() {
                let deficit: f64 = (0..n).map(|z| top - weights[z][(sc >> z) & 1]).sum();
                if deficit < slot.0 {
                    *slot = (deficit, tc);
                }
            }
        }
    }

    let scale = params.c / n as f64;
    let mut witnesses = Vec::new();
    let mut psi = f64::INFINITY;
    for a in 0..packing.len() {
        for b in a + 1..packing.len() {
            let (sc, total) = (0..s_count)
                .map(|sc| (sc, best[a][sc].0 + best[b][sc].0))
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .expect("non-empty");
            let rho = total * scale;
            psi = psi.min(rho);
            witnesses.push(PsiWitness {
                alpha_idx: a,
                beta_idx: b,
                theta_config: format!(
                    "{}/{}",
                    grid_string(best[a][sc].1, theta_grid_steps, n),
                    grid_string(best[b][sc].1, theta_grid_steps, n)
                ),
                s_config: pick_string(sc, n),
                rho,
            });
        }
    }
    Ok(PsiReport { psi, witnesses })
}

/// Lower floor `δc/2` that Ψ must clear for any packing at the required distance.
pub fn psi_floor(params: &HardnessParams) -> f64 {
    params.delta * params.c / 2.0
}

/// Indices of the instances whose error on `S` is at most `psi/3`.
pub fn instances_within(instances: &[HardInstance], s: &ReconstructionSet, psi: f64) -> Result<Vec<usize>> {
    if let Some(first) = instances.first() {
        s.check_separation(first.params().c)?;
    }
    let mut hits = Vec::new();
    for (i, g) in instances.iter().enumerate() {
        if error_sum(g, s)? <= psi / 3.0 {
            hits.push(i);
        }
    }
    Ok(hits)
}

/// How many instances reconstruct within `psi/3` on `S`; at most one when the
/// uniqueness property holds.
pub fn lemma1_check(instances: &[HardInstance], s: &ReconstructionSet, psi: f64) -> Result<usize> {
    Ok(instances_within(instances, s, psi)?.len())
}

/// Outcome of [`verify_lemma1_exhaustive`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lemma1Report {
    pub psi: f64,
    pub pairs_checked: u64,
    pub fuzz_sets: u64,
    pub max_count: usize,
    pub violations: u64,
}

impl Lemma1Report {
    pub fn pass(&self) -> bool {
        self.violations == 0 && self.max_count <= 1
    }
}

/// Exhaustive check of the uniqueness property at `d ≤ 2`:
///
/// * every pair of packing members, every depth configuration at the grid
///   endpoints for each, and every complete lattice reconstruction: the two
///   members never both come within `Ψ/3`;
/// * `fuzz` random complete reconstructions (random picks, jittered points,
///   sampled depths): at most one member within `Ψ/3`.
pub fn verify_lemma1_exhaustive(
    params: &HardnessParams,
    packing: &PackingSet,
    fuzz: usize,
    seed: u64,
) -> Result<Lemma1Report> {
    check_dimension(params.d, 2)?;
    let psi = psi_bruteforce(params, packing, 2)?.psi;
    let d = params.d;
    let n = params.corners();
    let ends = [0.0, params.theta_max()];
    let sets: Vec<ReconstructionSet> = (0..1usize << n)
        .map(|sc| ReconstructionSet::from_picks(d, &picks_of(sc, n)))
        .collect::<Result<_>>()?;

    // errs[m][t][s]: error of member m under endpoint config t on set s.
    let mut errs = Vec::with_capacity(packing.len());
    for alpha in &packing.members {
        let mut per_theta = Vec::with_capacity(1 << n);
        for tc in 0..1usize << n {
            let theta = (0..n).map(|z| ends[(tc >> z) & 1]).collect();
            let g = HardInstance::new(alpha.clone(), ThetaVector::explicit(theta, params.delta)?, *params, 0)?;
            per_theta.push(sets.iter().map(|s| error_sum(&g, s)).collect::<Result<Vec<_>>>()?);
        }
        errs.push(per_theta);
    }
    let mut report = Lemma1Report {
        psi,
        pairs_checked: 0,
        fuzz_sets: 0,
        max_count: 0,
        violations: 0,
    };
    let bar = psi / 3.0;
    for a in 0..packing.len() {
        for b in a + 1..packing.len() {
            for s in 0..sets.len() {
                let best_a = errs[a].iter().map(|e| e[s]).fold(f64::INFINITY, f64::min);
                let best_b = errs[b].iter().map(|e| e[s]).fold(f64::INFINITY, f64::min);
                report.pairs_checked += 1;
                if best_a <= bar && best_b <= bar {
                    report.violations += 1;
                    report.max_count = report.max_count.max(2);
                }
            }
        }
    }

    let mut rng = rng::stream(seed, 0);
    for f in 0..fuzz {
        let members: Vec<HardInstance> = packing
            .members
            .iter()
            .enumerate()
            .map(|(i, a)| HardInstance::sampled(a.clone(), *params, seed, (f * packing.len() + i) as u64))
            .collect::<Result<_>>()?;
        let s = random_complete_set(d, &mut rng)?;
        let count = lemma1_check(&members, &s, psi)?;
        report.fuzz_sets += 1;
        report.max_count = report.max_count.max(count);
        if count > 1 {
            report.violations += 1;
        }
    }
    Ok(report)
}

/// A random complete reconstruction: one random pick per corner, each point
/// moved by less than 0.06 in L1 so the set stays separated.
pub fn random_complete_set<R: Rng>(d: u32, rng: &mut R) -> Result<ReconstructionSet> {
    let n = corner_count(d);
    let step = 0.06 / d as f64;
    let points = (0..n)
        .map(|z| {
            let pick = if rng.gen_bool(0.5) { Pick::Deep } else { Pick::Shallow };
            let mut p = center(z, d, pick);
            for v in p.iter_mut() {
                *v += rng.gen_range(-step..step) * 0.999;
            }
            p
        })
        .collect();
    ReconstructionSet::complete(points)
}
