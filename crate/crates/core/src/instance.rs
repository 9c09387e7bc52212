//! The hard function family.
//!
//! For a sign vector `α` and depth vector `θ`, each corner `z` owns two
//! truncated L1 cones: a deep candidate at `(2z−1)/2` and a shallow candidate at
//! `(2z−1)/4`. The function is
//!
//! ```text
//! g(x) = 2^-d Σ_z  w₁(z)·min(‖x − (2z−1)/2‖₁, c) + w₂(z)·min(‖x − (2z−1)/4‖₁, c)
//! w₁(z) = 1/2 + θ̃_z,  w₂(z) = 1/2 − θ̃_z
//! θ̃_z = α_z(δ + θ_z)     (signed coupling, the default)
//! θ̃_z = α_z·δ + θ_z      (literal coupling)
//! ```
//!
//! All lattice points are at least 1/4 apart in L1 and `c ≤ 1/8`, so at any `x`
//! at most one cone is below its plateau. Evaluation only looks at the corner
//! whose orthant contains `x`; every other corner contributes exactly `c`.

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{check_dimension, corner_count, AlphaVector, DEFAULT_DIMENSION_CAP};
use crate::rng;

pub const DEFAULT_C: f64 = 0.125;

/// How the depth vector enters the cone weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    #[default]
    Signed,
    Literal,
}

impl std::str::FromStr for Coupling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signed" => Ok(Self::Signed),
            "literal" => Ok(Self::Literal),
            other => Err(invalid("coupling", format!("unknown coupling `{other}`"))),
        }
    }
}

impl std::fmt::Display for Coupling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Signed => "signed",
            Self::Literal => "literal",
        })
    }
}

/// Dimension, gap `δ`, plateau height `c` and coupling mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardnessParams {
    pub d: u32,
    pub delta: f64,
    pub c: f64,
    pub coupling: Coupling,
}

impl HardnessParams {
    pub fn new(d: u32, delta: f64, c: f64, coupling: Coupling) -> Result<Self> {
        let p = Self {
            d,
            delta,
            c,
            coupling,
        };
        p.validate()?;
        Ok(p)
    }

    /// `δ ∈ [0, 1/4]`, `c ∈ (0, 1/8]`. `δ = 0` is accepted as the degenerate
    /// family in which `α` is invisible.
    pub fn validate(&self) -> Result<()> {
        check_dimension(self.d, DEFAULT_DIMENSION_CAP)?;
        if !(0.0..=0.25).contains(&self.delta) {
            return Err(invalid("delta", format!("{} not in [0, 1/4]", self.delta)));
        }
        if !(self.c > 0.0 && self.c <= 0.125) {
            return Err(invalid("c", format!("{} not in (0, 1/8]", self.c)));
        }
        Ok(())
    }

    pub fn corners(&self) -> usize {
        corner_count(self.d)
    }

    /// Upper end of the depth support, `1/4 − δ/2`.
    pub fn theta_max(&self) -> f64 {
        0.25 - self.delta / 2.0
    }

    /// Weight on the deep cone for a corner with sign `alpha` and depth `theta`.
    pub fn deep_weight(&self, alpha: i8, theta: f64) -> f64 {
        0.5 + self.tilt(alpha, theta)
    }

    /// Weight on the shallow cone; the two weights sum to one.
    pub fn shallow_weight(&self, alpha: i8, theta: f64) -> f64 {
        0.5 - self.tilt(alpha, theta)
    }

    /// Signed offset of a candidate's weight from 1/2.
    pub fn candidate_tilt(&self, alpha: i8, theta: f64, pick: Pick) -> f64 {
        match pick {
            Pick::Deep => self.tilt(alpha, theta),
            Pick::Shallow => -self.tilt(alpha, theta),
        }
    }

    fn tilt(&self, alpha: i8, theta: f64) -> f64 {
        let a = f64::from(alpha);
        match self.coupling {
            Coupling::Signed => a * (self.delta + theta),
            Coupling::Literal => a * self.delta + theta,
        }
    }

    /// The weight a lattice candidate carries, i.e. how far its cone dips.
    pub fn candidate_weight(&self, alpha: i8, theta: f64, pick: Pick) -> f64 {
        match pick {
            Pick::Deep => self.deep_weight(alpha, theta),
            Pick::Shallow => self.shallow_weight(alpha, theta),
        }
    }
}

/// Which of a corner's two candidate minimizers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pick {
    /// `(2z−1)/2`
    Deep,
    /// `(2z−1)/4`
    Shallow,
}

impl Pick {
    pub const BOTH: [Pick; 2] = [Pick::Deep, Pick::Shallow];

    pub fn radius(self) -> f64 {
        match self {
            Pick::Deep => 0.5,
            Pick::Shallow => 0.25,
        }
    }

    /// The candidate a sign designates: deep for `+1`, shallow for `−1`.
    pub fn designated(alpha: i8) -> Pick {
        if alpha > 0 {
            Pick::Deep
        } else {
            Pick::Shallow
        }
    }

    pub fn other(self) -> Pick {
        match self {
            Pick::Deep => Pick::Shallow,
            Pick::Shallow => Pick::Deep,
        }
    }
}

#[inline]
fn center_coord(rank: usize, i: usize, pick: Pick) -> f64 {
    if (rank >> i) & 1 == 1 {
        pick.radius()
    } else {
        -pick.radius()
    }
}

/// Location of a lattice candidate of the corner with the given rank.
pub fn center(rank: usize, d: u32, pick: Pick) -> Vec<f64> {
    (0..d as usize).map(|i| center_coord(rank, i, pick)).collect()
}

/// `‖x − center(rank, pick)‖₁` without materializing the center.
#[inline]
pub fn distance_to_center(x: &[f64], rank: usize, pick: Pick) -> f64 {
    x.iter()
        .enumerate()
        .map(|(i, &xi)| (xi - center_coord(rank, i, pick)).abs())
        .sum()
}

/// The corner whose orthant contains `x` (coordinate `i` set iff `x_i > 0`).
#[inline]
pub fn orthant_corner(x: &[f64]) -> usize {
    x.iter()
        .enumerate()
        .fold(0, |acc, (i, &xi)| if xi > 0.0 { acc | (1 << i) } else { acc })
}

pub fn check_point(x: &[f64], d: u32) -> Result<()> {
    if x.len() != d as usize {
        return Err(Error::LengthMismatch {
            expected: d as usize,
            actual: x.len(),
        });
    }
    match x.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

fn cone(x: &[f64], rank: usize, pick: Pick, c: f64) -> Result<f64> {
    if let Some(index) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(distance_to_center(x, rank, pick).min(c))
}

/// `min(‖x − (2z−1)/2‖₁, c)`, where `z` is the corner of rank `rank` and `d = x.len()`.
pub fn deep_cone(x: &[f64], rank: usize, c: f64) -> Result<f64> {
    cone(x, rank, Pick::Deep, c)
}

/// `min(‖x − (2z−1)/4‖₁, c)`.
pub fn shallow_cone(x: &[f64], rank: usize, c: f64) -> Result<f64> {
    cone(x, rank, Pick::Shallow, c)
}

/// Subgradient of `min(‖x − m‖₁, c)`: the sign vector of `x − m` inside or on the
/// boundary of the cone, zero on the plateau, with `sign(0) = 0`. Accumulates
/// `weight · ∂` into `out`.
pub(crate) fn add_cone_subgradient(
    x: &[f64],
    rank: usize,
    pick: Pick,
    c: f64,
    weight: f64,
    out: &mut [f64],
) {
    if distance_to_center(x, rank, pick) > c {
        return;
    }
    for (i, o) in out.iter_mut().enumerate() {
        let diff = x[i] - center_coord(rank, i, pick);
        if diff > 0.0 {
            *o += weight;
        } else if diff < 0.0 {
            *o -= weight;
        }
    }
}

#[derive(Debug, Clone)]
enum ThetaSource {
    /// Drawn on demand from a ChaCha stream keyed by `(seed, instance id)`,
    /// word position = corner rank.
    Keyed { stream_seed: u64, instance_id: u64 },
    Explicit(Arc<[f64]>),
}

/// Per-corner depths `θ_z ∈ [0, 1/4 − δ/2)`.
///
/// Keyed vectors compute each entry from its corner rank alone, so the value
/// does not depend on which entries were read before it. The full vector is
/// cached the first time it is needed as a whole.
#[derive(Debug, Clone)]
pub struct ThetaVector {
    len: usize,
    scale: f64,
    source: ThetaSource,
    cache: OnceLock<Arc<[f64]>>,
}

/// Samples `θ_z = (1/4 − δ/2)·u_z` with `u_z` uniform on `[0, 1)`.
pub fn sample_theta(seed: u64, instance_id: u64, d: u32, delta: f64) -> ThetaVector {
    ThetaVector {
        len: corner_count(d),
        scale: 0.25 - delta / 2.0,
        source: ThetaSource::Keyed {
            stream_seed: rng::derive_seed(seed, rng::THETA_DOMAIN, 0),
            instance_id,
        },
        cache: OnceLock::new(),
    }
}

impl ThetaVector {
    /// Fixed depths, each in the closed support `[0, 1/4 − δ/2]`.
    pub fn explicit(values: Vec<f64>, delta: f64) -> Result<Self> {
        let scale = 0.25 - delta / 2.0;
        if let Some(v) = values
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0 || **v > scale)
        {
            return Err(invalid("theta", format!("{v} outside [0, {scale}]")));
        }
        let values: Arc<[f64]> = values.into();
        Ok(Self {
            len: values.len(),
            scale,
            source: ThetaSource::Explicit(values.clone()),
            cache: OnceLock::from(values),
        })
    }

    pub fn zeros(d: u32) -> Self {
        let values: Arc<[f64]> = vec![0.0; corner_count(d)].into();
        Self {
            len: values.len(),
            scale: 0.0,
            source: ThetaSource::Explicit(values.clone()),
            cache: OnceLock::from(values),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_keyed(&self) -> bool {
        matches!(self.source, ThetaSource::Keyed { .. })
    }

    pub fn get(&self, rank: usize) -> f64 {
        if let Some(all) = self.cache.get() {
            return all[rank];
        }
        match &self.source {
            ThetaSource::Keyed {
                stream_seed,
                instance_id,
            } => {
                self.scale * rng::unit_f64(rng::keyed_u64(*stream_seed, *instance_id, rank as u64))
            }
            ThetaSource::Explicit(v) => v[rank],
        }
    }

    /// Every entry, materialized once.
    pub fn values(&self) -> &[f64] {
        self.cache
            .get_or_init(|| (0..self.len).map(|r| self.get(r)).collect())
    }
}

impl PartialEq for ThetaVector {
    fn eq(&self, other: &Self) -> bool {
        self.len == other.len && self.values() == other.values()
    }
}

/// Location and value of the global minimum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlobalMin {
    pub point: Vec<f64>,
    pub value: f64,
    pub corner: usize,
    pub pick: Pick,
}

/// One member `g_α(· | θ_α)` of the family.
#[derive(Debug, Clone)]
pub struct HardInstance {
    alpha: AlphaVector,
    theta: ThetaVector,
    params: HardnessParams,
    instance_id: u64,
    seed: Option<u64>,
    minimum: OnceLock<GlobalMin>,
}

impl HardInstance {
    pub fn new(
        alpha: AlphaVector,
        theta: ThetaVector,
        params: HardnessParams,
        instance_id: u64,
    ) -> Result<Self> {
        params.validate()?;
        let n = params.corners();
        if alpha.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: alpha.len(),
            });
        }
        if theta.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: theta.len(),
            });
        }
        Ok(Self {
            alpha,
            theta,
            params,
            instance_id,
            seed: None,
            minimum: OnceLock::new(),
        })
    }

    /// An instance whose depths come from `sample_theta(seed, instance_id, …)`.
    pub fn sampled(
        alpha: AlphaVector,
        params: HardnessParams,
        seed: u64,
        instance_id: u64,
    ) -> Result<Self> {
        let theta = sample_theta(seed, instance_id, params.d, params.delta);
        let mut inst = Self::new(alpha, theta, params, instance_id)?;
        inst.seed = Some(seed);
        Ok(inst)
    }

    pub fn alpha(&self) -> &AlphaVector {
        &self.alpha
    }

    pub fn theta(&self) -> &ThetaVector {
        &self.theta
    }

    pub fn params(&self) -> &HardnessParams {
        &self.params
    }

    pub fn instance_id(&self) -> u64 {
        self.instance_id
    }

    pub fn dim(&self) -> u32 {
        self.params.d
    }

    /// `(w₁, w₂)` for the corner of the given rank.
    pub fn weights(&self, rank: usize) -> (f64, f64) {
        let a = self.alpha.sign(rank);
        let t = self.theta.get(rank);
        (self.params.deep_weight(a, t), self.params.shallow_weight(a, t))
    }

    pub fn candidate_weight(&self, rank: usize, pick: Pick) -> f64 {
        self.params
            .candidate_weight(self.alpha.sign(rank), self.theta.get(rank), pick)
    }

    /// `g(x)`, touching only the corner whose orthant contains `x`.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        check_point(x, self.params.d)?;
        let c = self.params.c;
        let rank = orthant_corner(x);
        let r_deep = distance_to_center(x, rank, Pick::Deep);
        let r_shallow = distance_to_center(x, rank, Pick::Shallow);
        if r_deep >= c && r_shallow >= c {
            return Ok(c);
        }
        let (w1, w2) = self.weights(rank);
        let mut dip = 0.0;
        if r_deep < c {
            dip += w1 * (r_deep - c);
        }
        if r_shallow < c {
            dip += w2 * (r_shallow - c);
        }
        Ok(c + dip / self.params.corners() as f64)
    }

    /// A subgradient of `g` at `x`; every component lies in `[−1, 1]`.
    pub fn subgradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_point(x, self.params.d)?;
        let c = self.params.c;
        let rank = orthant_corner(x);
        let mut out = vec![0.0; x.len()];
        let (w1, w2) = self.weights(rank);
        let scale = self.params.corners() as f64;
        add_cone_subgradient(x, rank, Pick::Deep, c, w1 / scale, &mut out);
        add_cone_subgradient(x, rank, Pick::Shallow, c, w2 / scale, &mut out);
        Ok(out)
    }

    /// The deepest lattice candidate. Ties go to the lowest corner rank and,
    /// within a corner, to the candidate designated by `α_z`.
    pub fn global_min(&self) -> &GlobalMin {
        self.minimum.get_or_init(|| {
            let theta = self.theta.values();
            let mut best: Option<(f64, usize, Pick)> = None;
            for (rank, &t) in theta.iter().enumerate() {
                let a = self.alpha.sign(rank);
                let first = Pick::designated(a);
                let mut pick = first;
                let mut weight = self.params.candidate_weight(a, t, first);
                let alt = self.params.candidate_weight(a, t, first.other());
                if alt > weight {
                    pick = first.other();
                    weight = alt;
                }
                if best.is_none_or(|(w, _, _)| weight > w) {
                    best = Some((weight, rank, pick));
                }
            }
            let (_, corner, pick) = best.expect("at least one corner");
            let point = center(corner, self.params.d, pick);
            let value = self.evaluate(&point).expect("lattice points are finite");
            GlobalMin {
                point,
                value,
                corner,
                pick,
            }
        })
    }

    /// `g(x) − inf g`.
    pub fn gap(&self, x: &[f64]) -> Result<f64> {
        Ok(self.evaluate(x)? - self.global_min().value)
    }

    pub fn to_file(&self) -> Result<InstanceFile> {
        let seed = match (&self.theta.source, self.seed) {
            (ThetaSource::Keyed { .. }, Some(seed)) => seed,
            _ => return Err(Error::NotSerializable),
        };
        Ok(InstanceFile {
            d: self.params.d,
            delta: self.params.delta,
            c: self.params.c,
            coupling: self.params.coupling,
            seed,
            instance_id: self.instance_id,
            alpha: self.alpha.clone(),
        })
    }
}

/// On-disk instance description. Depths are never stored: they are recomputed
/// from `(seed, instance_id)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub d: u32,
    pub delta: f64,
    pub c: f64,
    pub coupling: Coupling,
    pub seed: u64,
    pub instance_id: u64,
    pub alpha: AlphaVector,
}

impl InstanceFile {
    pub fn into_instance(self) -> Result<HardInstance> {
        let params = HardnessParams::new(self.d, self.delta, self.c, self.coupling)?;
        HardInstance::sampled(self.alpha, params, self.seed, self.instance_id)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
