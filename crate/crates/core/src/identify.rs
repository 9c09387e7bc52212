//! Optimization error, the threshold identification test, a likelihood
//! estimator over coin records, and the empirical minimax risk.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::discrepancy::{error_sum, ReconstructionSet};
use crate::error::{invalid, Error, Result};
use crate::geometry::PackingSet;
use crate::harness::{run_checkpoints, BenchmarkConfig, BenchmarkContext, OptimizerSpec, TrialSetup};
use crate::instance::{HardnessParams, ThetaVector};
use crate::oracle::{CoinRecord, Transcript};
use crate::stats::RunningMean;

/// `ε_T = Σ_{x∈S} (g(x) − inf g)`; zero for the empty set.
pub fn error_e_t(g: &crate::instance::HardInstance, s: &ReconstructionSet) -> Result<f64> {
    s.check_separation(g.params().c)?;
    error_sum(g, s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentificationResult {
    pub index: usize,
    /// True when the threshold test fired; false for the random fallback.
    pub matched: bool,
    pub error: f64,
}

/// Returns the unique candidate within `psi/3` of `S`, or a uniform random
/// index when there is none. Two passing candidates contradict uniqueness and
/// are reported as an error.
pub fn hypothesis_test<R: Rng>(
    s: &ReconstructionSet,
    candidates: &[crate::instance::HardInstance],
    psi: f64,
    rng: &mut R,
) -> Result<IdentificationResult> {
    if candidates.is_empty() {
        return Err(invalid("candidates", "empty candidate list"));
    }
    if !(psi > 0.0) {
        return Err(invalid("psi", format!("{psi} must be positive")));
    }
    let params = candidates[0].params();
    if candidates.iter().any(|g| g.params() != params) {
        return Err(Error::ParameterMismatch);
    }
    s.check_separation(params.c)?;
    let errors: Vec<f64> = candidates.iter().map(|g| error_sum(g, s)).collect::<Result<_>>()?;
    let mut passing = errors.iter().enumerate().filter(|(_, &e)| e <= psi / 3.0).map(|(i, _)| i);
    match (passing.next(), passing.next()) {
        (Some(first), Some(second)) => Err(Error::BrokenInvariant { first, second }),
        (Some(index), None) => Ok(IdentificationResult {
            index,
            matched: true,
            error: errors[index],
        }),
        (None, _) => {
            let index = rng.gen_range(0..candidates.len());
            Ok(IdentificationResult {
                index,
                matched: false,
                error: errors[index],
            })
        }
    }
}

/// What the likelihood estimator assumes about the depths.
#[derive(Debug, Clone, Copy)]
pub enum ThetaHypothesis<'a> {
    /// All depths zero.
    Zero,
    /// The true depth vector of each packing member, in packing order.
    Known(&'a [ThetaVector]),
}

/// Heads and tails per corner.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CoinCounts {
    pub heads: Vec<u64>,
    pub tails: Vec<u64>,
}

impl CoinCounts {
    pub fn new(corners: usize) -> Self {
        Self {
            heads: vec![0; corners],
            tails: vec![0; corners],
        }
    }

    pub fn add(&mut self, record: &CoinRecord) {
        for (&z, &b) in record.chosen.iter().zip(&record.outcomes) {
            if b == 1 {
                self.heads[z] += 1;
            } else {
                self.tails[z] += 1;
            }
        }
    }
}

/// Maximum-likelihood member given per-corner coin counts. Ties go to the
/// lowest index.
pub fn ml_alpha_from_counts(
    counts: &CoinCounts,
    packing: &PackingSet,
    params: &HardnessParams,
    theta: ThetaHypothesis<'_>,
) -> Result<usize> {
    let n = params.corners();
    if counts.heads.len() != n || counts.tails.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: counts.heads.len(),
        });
    }
    if let ThetaHypothesis::Known(t) = theta {
        if t.len() != packing.len() {
            return Err(Error::LengthMismatch {
                expected: packing.len(),
                actual: t.len(),
            });
        }
    }
    let mut best = (f64::NEG_INFINITY, 0);
    for (m, alpha) in packing.members.iter().enumerate() {
        let mut ll = 0.0;
        for z in 0..n {
            let depth = match theta {
                ThetaHypothesis::Zero => 0.0,
                ThetaHypothesis::Known(t) => t[m].get(z),
            };
            let p = params.deep_weight(alpha.sign(z), depth);
            if counts.heads[z] > 0 {
                ll += counts.heads[z] as f64 * p.ln();
            }
            if counts.tails[z] > 0 {
                ll += counts.tails[z] as f64 * (1.0 - p).ln();
            }
        }
        if ll > best.0 {
            best = (ll, m);
        }
    }
    Ok(best.1)
}

/// Maximum-likelihood member given the analyst view of a transcript.
pub fn ml_alpha_estimator(
    transcript: &Transcript,
    packing: &PackingSet,
    params: &HardnessParams,
    theta: ThetaHypothesis<'_>,
) -> Result<usize> {
    let mut counts = CoinCounts::new(params.corners());
    for record in transcript.coin_records()? {
        counts.add(record);
    }
    ml_alpha_from_counts(&counts, packing, params, theta)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskRow {
    pub optimizer: String,
    pub alpha_idx: usize,
    pub trials: usize,
    pub mean_eps: f64,
    pub stderr: f64,
    /// Set on the member with the largest mean for this optimizer.
    pub worst_case_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskTable {
    pub rows: Vec<RiskRow>,
    /// `(optimizer, worst-case mean, its standard error)`.
    pub worst_case: Vec<(String, f64, f64)>,
    /// The smallest worst-case mean over optimizers.
    pub minimax: (String, f64, f64),
}

impl RiskTable {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Plug-in minimax risk: for each optimizer, the largest (over packing
/// members) trial-mean `ε_T`; then the smallest of those over optimizers.
/// The supremum runs over packing members only, so it under-estimates the
/// supremum over the whole class.
pub fn minimax_risk_estimate(
    optimizers: &[OptimizerSpec],
    packing: &PackingSet,
    params: &HardnessParams,
    t: u64,
    trials: usize,
    seed: u64,
) -> Result<RiskTable> {
    if trials < 10 {
        return Err(invalid("trials", "need at least 10 trials"));
    }
    if optimizers.is_empty() {
        return Err(invalid("optimizers", "need at least one optimizer"));
    }
    let config = BenchmarkConfig::new(*params, t, trials, seed).with_optimizers(optimizers.to_vec());
    let mut ctx = BenchmarkContext::new(&config)?;
    if packing.d != params.d {
        return Err(Error::ParameterMismatch);
    }
    ctx.packing = packing.clone();
    let mut rows = Vec::new();
    let mut worst_case = Vec::new();
    for spec in optimizers {
        let mut per_member = Vec::with_capacity(packing.len());
        for m in 0..packing.len() {
            let eps: Vec<f64> = (0..trials as u64)
                .into_par_iter()
                .map(|trial| {
                    let setup = TrialSetup::new(&config, &ctx, trial, Some(m))?;
                    Ok(run_checkpoints(spec, &config, &ctx, &setup, &[t])?[0].eps)
                })
                .collect::<Result<_>>()?;
            let stats: RunningMean = eps.into_iter().collect();
            per_member.push(RiskRow {
                optimizer: spec.name().to_string(),
                alpha_idx: m,
                trials,
                mean_eps: stats.mean(),
                stderr: stats.std_error(),
                worst_case_flag: false,
            });
        }
        let worst = per_member
            .iter()
            .enumerate()
            .fold(0, |w, (i, r)| if r.mean_eps > per_member[w].mean_eps { i } else { w });
        per_member[worst].worst_case_flag = true;
        worst_case.push((spec.name().to_string(), per_member[worst].mean_eps, per_member[worst].stderr));
        rows.extend(per_member);
    }
    let minimax = worst_case
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .cloned()
        .expect("at least one optimizer");
    Ok(RiskTable {
        rows,
        worst_case,
        minimax,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrepancy::psi_bruteforce;
    use crate::geometry::AlphaVector;
    use crate::instance::{center, Coupling, HardInstance, Pick, DEFAULT_C};
    use crate::oracle::{CoinOracle, OracleConfig};
    use crate::rng;
    use approx::assert_abs_diff_eq;

    fn params(d: u32, delta: f64) -> HardnessParams {
        HardnessParams::new(d, delta, DEFAULT_C, Coupling::Signed).unwrap()
    }

    fn flat_members(p: HardnessParams, packing: &PackingSet) -> Vec<HardInstance> {
        packing
            .members
            .iter()
            .map(|a| HardInstance::new(a.clone(), ThetaVector::zeros(p.d), p, 0).unwrap())
            .collect()
    }

    #[test]
    fn error_examples() {
        let p = params(1, 0.1);
        let g = HardInstance::new(AlphaVector::new(vec![1, 1]).unwrap(), ThetaVector::zeros(1), p, 0).unwrap();
        let at_min = ReconstructionSet::new(vec![g.global_min().point.clone()]).unwrap();
        assert_eq!(error_e_t(&g, &at_min).unwrap(), 0.0);
        let s = ReconstructionSet::new(vec![vec![0.5], vec![-0.25]]).unwrap();
        assert_abs_diff_eq!(error_e_t(&g, &s).unwrap(), 0.0125, epsilon = 1e-15);
        assert_eq!(error_e_t(&g, &ReconstructionSet::empty()).unwrap(), 0.0);
    }

    #[test]
    fn threshold_test_cases() {
        let p = params(2, 0.1);
        let full = PackingSet::all_sign_vectors(2).unwrap();
        let psi = psi_bruteforce(&p, &full, 2).unwrap().psi;
        let members = flat_members(p, &full);
        let mut coin = rng::stream(0, 0);
        for (i, g) in members.iter().enumerate() {
            let picks: Vec<Pick> = (0..4).map(|z| Pick::designated(g.alpha().sign(z))).collect();
            let s = ReconstructionSet::from_picks(2, &picks).unwrap();
            let r = hypothesis_test(&s, &members, psi, &mut coin).unwrap();
            assert_eq!((r.index, r.matched), (i, true));
        }
        let far = ReconstructionSet::new(vec![vec![2.0, 2.0]]).unwrap();
        let r = hypothesis_test(&far, &members, psi, &mut coin).unwrap();
        assert!(!r.matched && r.index < members.len());

        let doubled = vec![members[3].clone(), members[3].clone()];
        let picks: Vec<Pick> = (0..4).map(|z| Pick::designated(members[3].alpha().sign(z))).collect();
        let s = ReconstructionSet::from_picks(2, &picks).unwrap();
        assert_eq!(
            hypothesis_test(&s, &doubled, psi, &mut coin),
            Err(Error::BrokenInvariant { first: 0, second: 1 })
        );
        assert!(hypothesis_test(&s, &members, 0.0, &mut coin).is_err());
    }

    #[test]
    fn threshold_test_succeeds_whenever_error_is_small() {
        let p = params(2, 0.1);
        let full = PackingSet::all_sign_vectors(2).unwrap();
        let psi = psi_bruteforce(&p, &full, 2).unwrap().psi;
        let members = flat_members(p, &full);
        let mut coin = rng::stream(1, 1);
        for sc in 0..16usize {
            let picks: Vec<Pick> = (0..4).map(|z| if (sc >> z) & 1 == 0 { Pick::Deep } else { Pick::Shallow }).collect();
            let s = ReconstructionSet::from_picks(2, &picks).unwrap();
            for (i, g) in members.iter().enumerate() {
                if error_e_t(g, &s).unwrap() <= psi / 3.0 {
                    assert_eq!(hypothesis_test(&s, &members, psi, &mut coin).unwrap().index, i);
                }
            }
        }
    }

    fn ml_success_rate(delta: f64, ell: usize, t: usize, trials: u64) -> f64 {
        let p = params(2, delta);
        let full = PackingSet::all_sign_vectors(2).unwrap();
        let members = flat_members(p, &full);
        let mut hits = 0;
        for trial in 0..trials {
            let truth = (trial as usize * 7) % members.len();
            let oracle = CoinOracle::new(&members[truth], OracleConfig::new(ell, 1000 + trial)).unwrap();
            let mut tr = Transcript::new(t);
            for _ in 0..t {
                oracle.query(&center(0, 2, Pick::Deep), &mut tr).unwrap();
            }
            if ml_alpha_estimator(&tr, &full, &p, ThetaHypothesis::Zero).unwrap() == truth {
                hits += 1;
            }
        }
        hits as f64 / trials as f64
    }

    #[test]
    fn ml_recovers_strong_signal() {
        assert!(ml_success_rate(0.2, 4, 2000, 200) >= 0.95);
    }

    #[test]
    fn ml_without_data_picks_first() {
        let p = params(2, 0.1);
        let full = PackingSet::all_sign_vectors(2).unwrap();
        assert_eq!(ml_alpha_estimator(&Transcript::new(0), &full, &p, ThetaHypothesis::Zero).unwrap(), 0);
        let blind = ml_success_rate(0.0, 1, 50, 160);
        assert_abs_diff_eq!(blind, 1.0 / 16.0, epsilon = 1e-12);
    }

    #[test]
    fn ml_with_known_depths() {
        let p = params(2, 0.05);
        let full = PackingSet::all_sign_vectors(2).unwrap();
        let thetas: Vec<ThetaVector> = (0..full.len() as u64)
            .map(|i| crate::instance::sample_theta(3, i, 2, 0.05))
            .collect();
        let truth = 9;
        let g = HardInstance::new(full.members[truth].clone(), thetas[truth].clone(), p, 0).unwrap();
        let oracle = CoinOracle::new(&g, OracleConfig::new(4, 2)).unwrap();
        let mut counts = CoinCounts::new(4);
        for t in 0..4000 {
            counts.add(&oracle.draw_coins(t));
        }
        assert_eq!(
            ml_alpha_from_counts(&counts, &full, &p, ThetaHypothesis::Known(&thetas)).unwrap(),
            truth
        );
        let mut missing = Transcript::new(1);
        let rows = [r#"{"t":0,"x":[0.5,0.5],"g_hat":0.1,"v_hat":[0.0,0.0]}"#];
        missing = Transcript::read_jsonl(rows.join("\n").as_bytes(), missing.budget()).unwrap();
        assert_eq!(
            ml_alpha_estimator(&missing, &full, &p, ThetaHypothesis::Zero),
            Err(Error::MissingCoinView { round: 0 })
        );
    }

    #[test]
    fn minimax_is_column_minimum() {
        let p = params(2, 0.2);
        let packing = crate::geometry::build_packing(2, 17, None).unwrap();
        let specs = vec![OptimizerSpec::LatticeSweep, OptimizerSpec::random_search()];
        let table = minimax_risk_estimate(&specs, &packing, &p, 400, 10, 17).unwrap();
        assert_eq!(table.rows.len(), specs.len() * packing.len());
        for (_, worst, _) in &table.worst_case {
            assert!(table.minimax.1 <= *worst);
        }
        let mut csv = Vec::new();
        table.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv)
            .unwrap()
            .starts_with("optimizer,alpha_idx,trials,mean_eps,stderr,worst_case_flag\n"));
        assert!(minimax_risk_estimate(&specs, &packing, &p, 400, 9, 17).is_err());
    }

    #[test]
    fn minimax_at_zero_budget_is_default_error() {
        let p = params(2, 0.2);
        let packing = crate::geometry::build_packing(2, 17, None).unwrap();
        let table = minimax_risk_estimate(&[OptimizerSpec::sgd()], &packing, &p, 0, 10, 1).unwrap();
        let default = ReconstructionSet::from_picks(2, &[Pick::Deep; 4]).unwrap();
        for row in &table.rows {
            let g = HardInstance::new(packing.members[row.alpha_idx].clone(), ThetaVector::zeros(2), p, 0).unwrap();
            assert_eq!(row.mean_eps, error_e_t(&g, &default).unwrap());
            assert_eq!(row.stderr, 0.0);
        }
    }
}
