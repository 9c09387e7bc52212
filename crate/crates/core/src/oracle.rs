//! Stochastic first-order oracle realized by coin tosses.
//!
//! Round `t` of the protocol:
//!
//! 1. pick `ℓ` corners uniformly without replacement (`U_t`), independent of the query point;
//! 2. toss one coin per chosen corner with bias `w₁(z)` (`X_t`);
//! 3. answer `ĝ = (1/ℓ) Σ_{z∈U_t} b_z·f₁(x,z) + (1−b_z)·f₂(x,z)` together with the
//!    matching subgradient `v̂` built from the same coins.
//!
//! The coins of round `t` are drawn from a ChaCha stream keyed by `(seed, t)`, so a
//! round is reproducible in isolation and transcripts replay bit-for-bit.

use std::io::{BufRead, Write};

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::instance::{add_cone_subgradient, check_point, distance_to_center, HardInstance, Pick};
use crate::rng;
use crate::stats::RunningMean;

/// Norm used for the `E‖v̂‖_p` certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormOrder {
    L1,
    L2,
    #[default]
    Inf,
}

impl NormOrder {
    pub fn norm(self, v: &[f64]) -> f64 {
        match self {
            NormOrder::L1 => v.iter().map(|x| x.abs()).sum(),
            NormOrder::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            NormOrder::Inf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }
}

impl std::str::FromStr for NormOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" | "l1" => Ok(Self::L1),
            "2" | "l2" => Ok(Self::L2),
            "inf" | "linf" => Ok(Self::Inf),
            other => Err(invalid("norm", format!("unknown norm `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Coins revealed per round, `1 ≤ ℓ ≤ 2^d`.
    pub ell: usize,
    pub norm: NormOrder,
    pub seed: u64,
}

impl OracleConfig {
    pub fn new(ell: usize, seed: u64) -> Self {
        Self {
            ell,
            norm: NormOrder::default(),
            seed,
        }
    }

    pub fn validate(&self, d: u32) -> Result<()> {
        let n = 1usize << d;
        if self.ell == 0 || self.ell > n {
            return Err(invalid("ell", format!("{} not in [1, {n}]", self.ell)));
        }
        Ok(())
    }
}

/// What an optimizer sees from one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleAnswer {
    pub t: usize,
    pub value: f64,
    pub subgradient: Vec<f64>,
}

/// The hidden coin data behind one round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoinRecord {
    /// `U_t`: chosen corner ranks, in draw order.
    pub chosen: Vec<usize>,
    /// `X_t`: the outcome of each chosen coin.
    pub outcomes: Vec<u8>,
}

impl CoinRecord {
    /// `Y_t`: outcome at chosen ranks, zero elsewhere.
    pub fn padded(&self, corners: usize) -> Vec<u8> {
        let mut y = vec![0; corners];
        for (&z, &b) in self.chosen.iter().zip(&self.outcomes) {
            y[z] = b;
        }
        y
    }
}

/// Bias of corner `rank`'s coin, `1/2 + θ̃_z`.
pub fn coin_bias(g: &HardInstance, rank: usize) -> f64 {
    g.weights(rank).0
}

/// `(ĝ, v̂)` for given coin data. Each chosen corner contributes its deep cone
/// when the coin shows 1 and its shallow cone otherwise.
pub fn answer_from_coins(g: &HardInstance, x: &[f64], coins: &CoinRecord) -> Result<(f64, Vec<f64>)> {
    check_point(x, g.dim())?;
    if coins.chosen.is_empty() || coins.chosen.len() != coins.outcomes.len() {
        return Err(invalid("coins", "chosen and outcome lists must be non-empty and aligned"));
    }
    let c = g.params().c;
    let ell = coins.chosen.len() as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; x.len()];
    for (&z, &b) in coins.chosen.iter().zip(&coins.outcomes) {
        let pick = if b == 1 { Pick::Deep } else { Pick::Shallow };
        value += distance_to_center(x, z, pick).min(c);
        add_cone_subgradient(x, z, pick, c, 1.0, &mut grad);
    }
    grad.iter_mut().for_each(|v| *v /= ell);
    Ok((value / ell, grad))
}

/// The coin-tossing oracle for one instance.
#[derive(Debug, Clone)]
pub struct CoinOracle<'a> {
    instance: &'a HardInstance,
    config: OracleConfig,
    stream_seed: u64,
}

impl<'a> CoinOracle<'a> {
    pub fn new(instance: &'a HardInstance, config: OracleConfig) -> Result<Self> {
        config.validate(instance.dim())?;
        Ok(Self {
            instance,
            config,
            stream_seed: rng::derive_seed(config.seed, rng::ORACLE_DOMAIN, 0),
        })
    }

    pub fn config(&self) -> &OracleConfig {
        &self.config
    }

    pub fn instance(&self) -> &HardInstance {
        self.instance
    }

    /// Coin data of round `t`; a pure function of `(seed, t)`.
    pub fn draw_coins(&self, t: usize) -> CoinRecord {
        let mut rng = rng::stream(self.stream_seed, t as u64);
        let n = self.instance.params().corners();
        let chosen = index::sample(&mut rng, n, self.config.ell).into_vec();
        let outcomes = chosen
            .iter()
            .map(|&z| u8::from(rng.gen_bool(coin_bias(self.instance, z))))
            .collect();
        CoinRecord { chosen, outcomes }
    }

    /// Answers round `t` at `x` without touching any transcript.
    pub fn respond(&self, t: usize, x: &[f64]) -> Result<(OracleAnswer, CoinRecord)> {
        check_point(x, self.instance.dim())?;
        let coins = self.draw_coins(t);
        let (value, subgradient) = answer_from_coins(self.instance, x, &coins)?;
        Ok((
            OracleAnswer {
                t,
                value,
                subgradient,
            },
            coins,
        ))
    }

    /// Answers the next round and appends it to `transcript`.
    pub fn query(&self, x: &[f64], transcript: &mut Transcript) -> Result<OracleAnswer> {
        let t = transcript.len();
        if t >= transcript.budget() {
            return Err(Error::BudgetExhausted {
                budget: transcript.budget(),
            });
        }
        let (answer, coins) = self.respond(t, x)?;
        transcript.push(x.to_vec(), answer.clone(), Some(coins));
        Ok(answer)
    }
}

/// One-shot form of [`CoinOracle::query`].
pub fn query(
    g: &HardInstance,
    x: &[f64],
    config: &OracleConfig,
    transcript: &mut Transcript,
) -> Result<OracleAnswer> {
    CoinOracle::new(g, *config)?.query(x, transcript)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptRound {
    pub x: Vec<f64>,
    pub answer: OracleAnswer,
    pub coins: Option<CoinRecord>,
}

/// The part of a round an optimizer is allowed to see.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgorithmRound<'a> {
    pub t: usize,
    pub x: &'a [f64],
    pub value: f64,
    pub subgradient: &'a [f64],
}

/// Which fields a transcript export carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TranscriptView {
    Algorithm,
    Analyst,
}

#[derive(Serialize, Deserialize)]
struct JsonRound {
    t: usize,
    x: Vec<f64>,
    g_hat: f64,
    v_hat: Vec<f64>,
    #[serde(rename = "U", skip_serializing_if = "Option::is_none", default)]
    u: Option<Vec<usize>>,
    #[serde(rename = "X", skip_serializing_if = "Option::is_none", default)]
    outcomes: Option<Vec<u8>>,
}

/// Ordered query history with a fixed budget.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Transcript {
    budget: usize,
    rounds: Vec<TranscriptRound>,
}

impl Transcript {
    pub fn new(budget: usize) -> Self {
        Self {
            budget,
            rounds: Vec::new(),
        }
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn remaining(&self) -> usize {
        self.budget - self.rounds.len()
    }

    fn push(&mut self, x: Vec<f64>, answer: OracleAnswer, coins: Option<CoinRecord>) {
        debug_assert_eq!(answer.t, self.rounds.len());
        self.rounds.push(TranscriptRound { x, answer, coins });
    }

    /// Everything, including coin data.
    pub fn analyst_view(&self) -> &[TranscriptRound] {
        &self.rounds
    }

    pub fn algorithm_view(&self) -> impl Iterator<Item = AlgorithmRound<'_>> + '_ {
        self.rounds.iter().map(|r| AlgorithmRound {
            t: r.answer.t,
            x: &r.x,
            value: r.answer.value,
            subgradient: &r.answer.subgradient,
        })
    }

    /// Coin records in round order; fails if any round lacks one.
    pub fn coin_records(&self) -> Result<Vec<&CoinRecord>> {
        self.rounds
            .iter()
            .enumerate()
            .map(|(round, r)| r.coins.as_ref().ok_or(Error::MissingCoinView { round }))
            .collect()
    }

    /// JSON-lines export, one round per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W, view: TranscriptView) -> Result<()> {
        for r in &self.rounds {
            let (u, outcomes) = match (view, &r.coins) {
                (TranscriptView::Analyst, Some(c)) => (Some(c.chosen.clone()), Some(c.outcomes.clone())),
                _ => (None, None),
            };
            let line = JsonRound {
                t: r.answer.t,
                x: r.x.clone(),
                g_hat: r.answer.value,
                v_hat: r.answer.subgradient.clone(),
                u,
                outcomes,
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R, budget: usize) -> Result<Self> {
        let mut t = Transcript::new(budget);
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let j: JsonRound = serde_json::from_str(&line)?;
            if j.t != t.len() {
                return Err(Error::Format(format!("round {} out of order", j.t)));
            }
            if t.len() >= budget {
                return Err(Error::BudgetExhausted { budget });
            }
            let coins = match (j.u, j.outcomes) {
                (Some(chosen), Some(outcomes)) => Some(CoinRecord { chosen, outcomes }),
                _ => None,
            };
            let answer = OracleAnswer {
                t: j.t,
                value: j.g_hat,
                subgradient: j.v_hat,
            };
            t.push(j.x, answer, coins);
        }
        Ok(t)
    }
}

/// Monte Carlo check of `E[ĝ(x)] = g(x)` plus the `E‖v̂‖_p` certificate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnbiasednessReport {
    pub target: f64,
    pub mean: f64,
    pub std_error: f64,
    pub pass: bool,
    /// Empirical `E‖v̂‖_p`, reported as the variance certificate `σ²`.
    pub sigma2: f64,
    /// Largest `‖v̂‖_∞` seen; never above 1.
    pub max_sup_norm: f64,
}

/// Draws `n_samples` independent rounds at `x` and compares the mean of `ĝ`
/// with `g(x)` at three standard errors. When every sample is identical the
/// standard error is zero and the comparison falls back to a 1e−12 floor.
pub fn unbiasedness_check(
    g: &HardInstance,
    x: &[f64],
    n_samples: usize,
    config: &OracleConfig,
) -> Result<UnbiasednessReport> {
    if n_samples < 100 {
        return Err(invalid("n_samples", "need at least 100 samples"));
    }
    let oracle = CoinOracle::new(g, *config)?;
    let target = g.evaluate(x)?;
    let mut values = RunningMean::new();
    let mut norms = RunningMean::new();
    let mut max_sup: f64 = 0.0;
    for t in 0..n_samples {
        let (a, _) = oracle.respond(t, x)?;
        values.push(a.value);
        norms.push(config.norm.norm(&a.subgradient));
        max_sup = max_sup.max(NormOrder::Inf.norm(&a.subgradient));
    }
    let se = values.std_error();
    let pass = (values.mean() - target).abs() <= (3.0 * se).max(1e-12);
    Ok(UnbiasednessReport {
        target,
        mean: values.mean(),
        std_error: se,
        pass,
        sigma2: norms.mean(),
        max_sup_norm: max_sup,
    })
}

/// Exact `(E[ĝ], E[v̂])` by enumerating every `ℓ`-subset and every outcome
/// vector. Exponential; limited to `d ≤ 3`.
pub fn exact_expected_answer(g: &HardInstance, x: &[f64], ell: usize) -> Result<(f64, Vec<f64>)> {
    let d = g.dim();
    if d > 3 {
        return Err(Error::DimensionOutOfRange { d, cap: 3 });
    }
    OracleConfig::new(ell, 0).validate(d)?;
    check_point(x, d)?;
    let n = g.params().corners();
    let subsets: Vec<Vec<usize>> = (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == ell)
        .map(|m| (0..n).filter(|&z| (m >> z) & 1 == 1).collect())
        .collect();
    let p_subset = 1.0 / subsets.len() as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; x.len()];
    for chosen in subsets {
        for code in 0u32..1 << ell {
            let outcomes: Vec<u8> = (0..ell).map(|i| ((code >> i) & 1) as u8).collect();
            let p_outcome: f64 = chosen
                .iter()
                .zip(&outcomes)
                .map(|(&z, &b)| {
                    let p = coin_bias(g, z);
                    if b == 1 {
                        p
                    } else {
                        1.0 - p
                    }
                })
                .product();
            let coins = CoinRecord {
                chosen: chosen.clone(),
                outcomes,
            };
            let (v, s) = answer_from_coins(g, x, &coins)?;
            let w = p_subset * p_outcome;
            value += w * v;
            for (gi, si) in grad.iter_mut().zip(s) {
                *gi += w * si;
            }
        }
    }
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::AlphaVector;
    use crate::instance::{Coupling, HardnessParams, ThetaVector, DEFAULT_C};
    use approx::assert_abs_diff_eq;

    fn reference() -> HardInstance {
        HardInstance::new(
            AlphaVector::new(vec![-1, 1]).unwrap(),
            ThetaVector::explicit(vec![0.02, 0.05], 0.1).unwrap(),
            HardnessParams::new(1, 0.1, DEFAULT_C, Coupling::Signed).unwrap(),
            0,
        )
        .unwrap()
    }

    #[test]
    fn bias_examples() {
        let p = HardnessParams::new(1, 0.1, DEFAULT_C, Coupling::Signed).unwrap();
        let g = HardInstance::new(
            AlphaVector::new(vec![1, -1]).unwrap(),
            ThetaVector::explicit(vec![0.05, 0.05], 0.1).unwrap(),
            p,
            0,
        )
        .unwrap();
        assert_abs_diff_eq!(coin_bias(&g, 0), 0.65, epsilon = 1e-15);
        assert_abs_diff_eq!(coin_bias(&g, 1), 0.35, epsilon = 1e-15);
        let flat = HardInstance::new(
            AlphaVector::new(vec![1, -1]).unwrap(),
            ThetaVector::zeros(1),
            HardnessParams::new(1, 0.0, DEFAULT_C, Coupling::Signed).unwrap(),
            0,
        )
        .unwrap();
        assert_eq!(coin_bias(&flat, 0), 0.5);
    }

    #[test]
    fn forced_coins() {
        let g = reference();
        let heads = CoinRecord {
            chosen: vec![1],
            outcomes: vec![1],
        };
        let (v, s) = answer_from_coins(&g, &[0.45], &heads).unwrap();
        assert_abs_diff_eq!(v, 0.05, epsilon = 1e-15);
        assert_eq!(s, vec![-1.0]);
        let tails = CoinRecord {
            chosen: vec![1],
            outcomes: vec![0],
        };
        let (v, s) = answer_from_coins(&g, &[0.45], &tails).unwrap();
        assert_eq!(v, 0.125);
        assert_eq!(s, vec![0.0]);
    }

    #[test]
    fn budget_is_enforced() {
        let g = reference();
        let cfg = OracleConfig::new(1, 5);
        let mut tr = Transcript::new(3);
        for _ in 0..3 {
            query(&g, &[0.5], &cfg, &mut tr).unwrap();
        }
        assert_eq!(
            query(&g, &[0.5], &cfg, &mut tr),
            Err(Error::BudgetExhausted { budget: 3 })
        );
        assert_eq!(tr.len(), 3);
        assert!(query(&g, &[f64::NAN], &cfg, &mut Transcript::new(1)).is_err());
    }

    #[test]
    fn ell_is_validated() {
        let g = reference();
        assert!(CoinOracle::new(&g, OracleConfig::new(0, 1)).is_err());
        assert!(CoinOracle::new(&g, OracleConfig::new(3, 1)).is_err());
        assert!(CoinOracle::new(&g, OracleConfig::new(2, 1)).is_ok());
    }

    #[test]
    fn coin_records_are_well_formed() {
        let g = HardInstance::sampled(
            AlphaVector::new(vec![1, -1, -1, 1, 1, 1, -1, -1]).unwrap(),
            HardnessParams::new(3, 0.1, DEFAULT_C, Coupling::Signed).unwrap(),
            4,
            0,
        )
        .unwrap();
        let o = CoinOracle::new(&g, OracleConfig::new(5, 9)).unwrap();
        for t in 0..50 {
            let rec = o.draw_coins(t);
            assert_eq!(rec.chosen.len(), 5);
            let mut sorted = rec.chosen.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), 5);
            let y = rec.padded(8);
            for (z, &yz) in y.iter().enumerate() {
                if yz == 1 {
                    assert!(rec.chosen.contains(&z));
                }
            }
            assert_eq!(rec, o.draw_coins(t));
        }
    }

    #[test]
    fn monte_carlo_mean_matches_reference() {
        let g = reference();
        let r = unbiasedness_check(&g, &[0.5], 100_000, &OracleConfig::new(1, 1)).unwrap();
        assert!(r.pass, "{r:?}");
        assert_abs_diff_eq!(r.target, 0.084375, epsilon = 1e-15);
        assert!(r.max_sup_norm <= 1.0);
        assert!(r.sigma2 <= 1.0);
    }

    #[test]
    fn exact_expectation_matches_evaluate() {
        let g = reference();
        for x in [0.5, 0.45, -0.3, -0.25, 0.0, 0.3] {
            for ell in [1, 2] {
                let (v, s) = exact_expected_answer(&g, &[x], ell).unwrap();
                assert_abs_diff_eq!(v, g.evaluate(&[x]).unwrap(), epsilon = 1e-12);
                assert_abs_diff_eq!(s[0], g.subgradient(&[x]).unwrap()[0], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn algorithm_export_hides_coins() {
        let g = reference();
        let cfg = OracleConfig::new(1, 2);
        let mut tr = Transcript::new(4);
        for x in [0.5, -0.25, 0.45, 0.1] {
            query(&g, &[x], &cfg, &mut tr).unwrap();
        }
        let mut alg = Vec::new();
        tr.write_jsonl(&mut alg, TranscriptView::Algorithm).unwrap();
        let alg = String::from_utf8(alg).unwrap();
        assert!(!alg.contains("\"U\"") && !alg.contains("\"X\""));
        let back = Transcript::read_jsonl(alg.as_bytes(), 4).unwrap();
        assert_eq!(back.coin_records(), Err(Error::MissingCoinView { round: 0 }));

        let mut full = Vec::new();
        tr.write_jsonl(&mut full, TranscriptView::Analyst).unwrap();
        let back = Transcript::read_jsonl(full.as_slice(), 4).unwrap();
        assert_eq!(back, tr);
    }
}
