//! Closed-form information bounds. Natural logarithms throughout.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{check_dimension, PackingSet};

/// `ln(2/√e) = ln 2 − 1/2`, the per-corner packing rate.
pub const LN_PACKING_RATE: f64 = std::f64::consts::LN_2 - 0.5;

/// A probability-type bound, kept raw and clamped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub raw: f64,
    pub clamped: f64,
    pub vacuous: bool,
    pub inputs: Vec<(&'static str, f64)>,
}

impl BoundReport {
    fn probability(raw: f64, inputs: Vec<(&'static str, f64)>) -> Self {
        Self {
            raw,
            clamped: raw.clamp(0.0, 1.0),
            vacuous: raw < 0.0,
            inputs,
        }
    }
}

fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

/// `KL(Ber(p) ‖ Ber(q))` in nats.
pub fn kl_bernoulli(p: f64, q: f64) -> Result<f64> {
    for (name, v) in [("p", p), ("q", q)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(domain(format!("{name} = {v} not in (0, 1)")));
        }
    }
    let kl = p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
    Ok(kl.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KlChain {
    /// `KL(Ber(1/2+δ+θ₀) ‖ Ber(1/2−δ−θ₀))`.
    pub value: f64,
    /// `8(δ+θ₀)²/(1−2δ−2θ₀)`.
    pub bound1: f64,
    /// `2(1+2δ)²`.
    pub bound2: f64,
    /// `(1+2δ)²/(1−2δ)`: `bound1` with `θ₀` at the top of its support.
    pub sup_form: f64,
}

/// The KL between opposite coins and the two bounds used on it.
pub fn kl_delta_theta(delta: f64, theta0: f64) -> Result<KlChain> {
    if !(0.0..=0.25).contains(&delta) {
        return Err(domain(format!("delta = {delta} not in [0, 1/4]")));
    }
    let top = 0.25 - delta / 2.0;
    if !(theta0 >= 0.0 && (theta0 < top || (theta0 == 0.0 && top == 0.0))) {
        return Err(domain(format!("theta0 = {theta0} not in [0, {top})")));
    }
    let s = delta + theta0;
    let value = if s == 0.0 {
        0.0
    } else {
        kl_bernoulli(0.5 + s, 0.5 - s)?
    };
    Ok(KlChain {
        value,
        bound1: 8.0 * s * s / (1.0 - 2.0 * s),
        bound2: 2.0 * (1.0 + 2.0 * delta).powi(2),
        sup_form: (1.0 + 2.0 * delta).powi(2) / (1.0 - 2.0 * delta),
    })
}

/// `1 − 2(ℓT(1+2δ)² + ln 2) / (2^d ln(2/√e))`.
pub fn fano_rhs(d: u32, ell: u64, t: u64, delta: f64) -> BoundReport {
    let corners = 2f64.powi(d as i32);
    let info = ell as f64 * t as f64 * (1.0 + 2.0 * delta).powi(2);
    let raw = 1.0 - 2.0 * (info + std::f64::consts::LN_2) / (corners * LN_PACKING_RATE);
    BoundReport::probability(
        raw,
        vec![("d", d as f64), ("ell", ell as f64), ("T", t as f64), ("delta", delta)],
    )
}

/// `1 − (I + ln 2)/ln|𝒱|` for a supremum of mutual information `I`.
pub fn fano_latent_rhs(packing_size: usize, mi_sup: f64) -> Result<BoundReport> {
    if packing_size < 2 {
        return Err(domain(format!("packing of size {packing_size} has nothing to confuse")));
    }
    if !(mi_sup >= 0.0) {
        return Err(domain(format!("mutual information {mi_sup} is negative")));
    }
    let raw = 1.0 - (mi_sup + std::f64::consts::LN_2) / (packing_size as f64).ln();
    Ok(BoundReport::probability(
        raw,
        vec![("packing_size", packing_size as f64), ("mi_sup", mi_sup)],
    ))
}

fn xlogy_ratio(p: f64, q: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * (p / q).ln()
    }
}

/// Exact single-round `I((U, Y); α | θ = θ₀)` with `α` uniform over the packing,
/// `U` a uniform `ℓ`-subset and each chosen coin biased `1/2 + α_z(δ + θ₀)`.
pub fn mi_exact_small(d: u32, ell: usize, delta: f64, theta0: f64, packing: &PackingSet) -> Result<f64> {
    check_dimension(d, 3)?;
    let n = 1usize << d;
    if ell == 0 || ell > n {
        return Err(domain(format!("ell = {ell} not in [1, {n}]")));
    }
    if packing.d != d || packing.is_empty() {
        return Err(domain("packing does not match the dimension"));
    }
    let s = delta + theta0;
    if !(delta >= 0.0 && theta0 >= 0.0 && s < 0.5) {
        return Err(domain(format!("delta + theta0 = {s} outside [0, 1/2)")));
    }
    let m = packing.len() as f64;
    let subsets: Vec<Vec<usize>> = (0u32..1 << n)
        .filter(|mask| mask.count_ones() as usize == ell)
        .map(|mask| (0..n).filter(|&z| (mask >> z) & 1 == 1).collect())
        .collect();
    let mut mi = 0.0;
    for u in &subsets {
        let mut inner = 0.0;
        for code in 0u32..1 << ell {
            let likelihoods: Vec<f64> = packing
                .members
                .iter()
                .map(|a| {
                    u.iter()
                        .enumerate()
                        .map(|(i, &z)| {
                            let p = 0.5 + f64::from(a.sign(z)) * s;
                            if (code >> i) & 1 == 1 {
                                p
                            } else {
                                1.0 - p
                            }
                        })
                        .product()
                })
                .collect();
            let marginal = likelihoods.iter().sum::<f64>() / m;
            inner += likelihoods.iter().map(|&l| xlogy_ratio(l, marginal)).sum::<f64>() / m;
        }
        mi += inner;
    }
    Ok((mi / subsets.len() as f64).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QueryLowerBound {
    /// Smallest `T` at which the Fano bound drops to `1/3` with `δ = 144ε`.
    pub t_min: f64,
    /// `2^d / (ℓ ε²)`.
    pub t_order: f64,
}

/// Query count below which no method reaches error `ε` with probability 2/3.
pub fn theorem1_t_lower(d: u32, ell: u64, eps: f64) -> Result<QueryLowerBound> {
    if !(eps > 0.0 && eps <= 1.0 / 576.0) {
        return Err(domain(format!("eps = {eps} not in (0, 1/576]")));
    }
    if ell == 0 {
        return Err(domain("ell must be positive"));
    }
    let corners = 2f64.powi(d as i32);
    let t_min = (corners * LN_PACKING_RATE / 3.0 - std::f64::consts::LN_2)
        / (ell as f64 * (1.0 + 288.0 * eps).powi(2));
    Ok(QueryLowerBound {
        t_min,
        t_order: corners / (ell as f64 * eps * eps),
    })
}

/// `(T^{−1/d}, √(2^d/T))`: the grid-search rate against the adaptive rate.
pub fn compare_nonadaptive(t: u64, d: u32) -> Result<(f64, f64)> {
    if t == 0 || d == 0 {
        return Err(domain("T and d must be positive"));
    }
    let log2_t = (t as f64).log2();
    Ok(((-log2_t / d as f64).exp2(), ((d as f64 - log2_t) / 2.0).exp2()))
}

/// One row of a bound curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub variable: String,
    pub value: f64,
    pub raw: f64,
    pub clamped: f64,
    pub vacuous: bool,
}

/// `fano_rhs` swept over `T`.
pub fn fano_curve(d: u32, ell: u64, delta: f64, ts: &[u64]) -> Vec<CurvePoint> {
    ts.iter()
        .map(|&t| {
            let r = fano_rhs(d, ell, t, delta);
            CurvePoint {
                variable: "T".into(),
                value: t as f64,
                raw: r.raw,
                clamped: r.clamped,
                vacuous: r.vacuous,
            }
        })
        .collect()
}

pub fn write_curve_csv<W: Write>(rows: &[CurvePoint], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}
