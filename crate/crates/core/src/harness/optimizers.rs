//! First-order methods run against an opaque oracle.
//!
//! Optimizers know the public class geometry (dimension, cone radius, the
//! lattice of candidate centers) and nothing about the hidden signs, depths or
//! coin draws. None of them looks at the remaining budget, so a run with budget
//! `T` is the length-`T` prefix of any longer run with the same seed.

use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::instance::{center, Pick};

/// Half-width of the box used for uniform starts.
pub const BOX_HALF_WIDTH: f64 = 0.75;

/// The only interface an optimizer gets.
pub trait FirstOrderOracle {
    fn dim(&self) -> u32;

    /// `(ĝ(x), v̂(x))`, or `None` once the budget is spent.
    fn query(&mut self, x: &[f64]) -> Option<(f64, Vec<f64>)>;
}

/// Public facts about the function class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassInfo {
    pub d: u32,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerSpec {
    /// Constant-step SGD in epochs, each started near a random lattice candidate.
    Sgd { step: f64, epoch: usize },
    /// Mini-batch gradient descent from uniform box restarts.
    GdRestarts { step: f64, steps: usize, batch: usize },
    /// Gradient descent that jumps randomly after `patience` flat answers.
    PerturbedGd { step: f64, radius: f64, patience: usize },
    /// Uniformly random lattice candidates, optionally jittered.
    RandomSearch { jitter: f64 },
    /// All lattice candidates, round-robin.
    LatticeSweep,
}

impl OptimizerSpec {
    pub const NAMES: [&'static str; 5] = ["sgd", "gd_restarts", "perturbed_gd", "random_search", "lattice_sweep"];

    pub fn sgd() -> Self {
        Self::Sgd { step: 0.01, epoch: 8 }
    }

    pub fn gd_restarts() -> Self {
        Self::GdRestarts {
            step: 0.05,
            steps: 20,
            batch: 4,
        }
    }

    pub fn perturbed_gd() -> Self {
        Self::PerturbedGd {
            step: 0.05,
            radius: 0.5,
            patience: 4,
        }
    }

    pub fn random_search() -> Self {
        Self::RandomSearch { jitter: 0.0 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Sgd { .. } => "sgd",
            Self::GdRestarts { .. } => "gd_restarts",
            Self::PerturbedGd { .. } => "perturbed_gd",
            Self::RandomSearch { .. } => "random_search",
            Self::LatticeSweep => "lattice_sweep",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(name, format!("{v} must be positive")))
            }
        };
        let count = |name: &'static str, v: usize| {
            if v > 0 {
                Ok(())
            } else {
                Err(invalid(name, "must be positive"))
            }
        };
        match *self {
            Self::Sgd { step, epoch } => {
                positive("step", step)?;
                count("epoch", epoch)
            }
            Self::GdRestarts { step, steps, batch } => {
                positive("step", step)?;
                count("steps", steps)?;
                count("batch", batch)
            }
            Self::PerturbedGd { step, radius, patience } => {
                positive("step", step)?;
                positive("radius", radius)?;
                count("patience", patience)
            }
            Self::RandomSearch { jitter } => {
                if jitter >= 0.0 && jitter.is_finite() {
                    Ok(())
                } else {
                    Err(invalid("jitter", "must be non-negative"))
                }
            }
            Self::LatticeSweep => Ok(()),
        }
    }

    /// Queries `oracle` until it refuses.
    pub fn run(&self, info: ClassInfo, oracle: &mut dyn FirstOrderOracle, rng: &mut ChaCha8Rng) {
        match *self {
            Self::Sgd { step, epoch } => sgd(info, oracle, rng, step, epoch),
            Self::GdRestarts { step, steps, batch } => gd_restarts(info, oracle, rng, step, steps, batch),
            Self::PerturbedGd { step, radius, patience } => perturbed_gd(info, oracle, rng, step, radius, patience),
            Self::RandomSearch { jitter } => random_search(info, oracle, rng, jitter),
            Self::LatticeSweep => lattice_sweep(info, oracle),
        }
    }
}

impl FromStr for OptimizerSpec {
    type Err = Error;

    /// `name` or `name:key=value,...`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let mut spec = match name {
            "sgd" => Self::sgd(),
            "gd_restarts" => Self::gd_restarts(),
            "perturbed_gd" => Self::perturbed_gd(),
            "random_search" => Self::random_search(),
            "lattice_sweep" => Self::LatticeSweep,
            other => return Err(invalid("optimizer", format!("unknown optimizer `{other}`"))),
        };
        for kv in args.split(',').filter(|a| !a.is_empty()) {
            let (key, value) = kv
                .split_once('=')
                .ok_or_else(|| invalid("optimizer", format!("expected key=value, got `{kv}`")))?;
            let num = |v: &str| -> Result<f64> { v.parse().map_err(|_| invalid("optimizer", format!("bad number `{v}`"))) };
            let int = |v: &str| -> Result<usize> { v.parse().map_err(|_| invalid("optimizer", format!("bad count `{v}`"))) };
            match (&mut spec, key) {
                (Self::Sgd { step, .. } | Self::GdRestarts { step, .. } | Self::PerturbedGd { step, .. }, "step") => {
                    *step = num(value)?
                }
                (Self::Sgd { epoch, .. }, "epoch") => *epoch = int(value)?,
                (Self::GdRestarts { steps, .. }, "steps") => *steps = int(value)?,
                (Self::GdRestarts { batch, .. }, "batch") => *batch = int(value)?,
                (Self::PerturbedGd { radius, .. }, "radius") => *radius = num(value)?,
                (Self::PerturbedGd { patience, .. }, "patience") => *patience = int(value)?,
                (Self::RandomSearch { jitter }, "jitter") => *jitter = num(value)?,
                _ => return Err(invalid("optimizer", format!("`{key}` does not apply to {name}"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn random_candidate(info: ClassInfo, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let rank = rng.gen_range(0..1usize << info.d);
    let pick = if rng.gen_bool(0.5) { Pick::Deep } else { Pick::Shallow };
    center(rank, info.d, pick)
}

/// Moves `x` by a uniform offset of L1 norm below `radius`.
fn jitter_point(x: &mut [f64], radius: f64, rng: &mut ChaCha8Rng) {
    if radius > 0.0 {
        let per = radius / x.len() as f64;
        for v in x.iter_mut() {
            *v += rng.gen_range(-per..per);
        }
    }
}

fn uniform_box(info: ClassInfo, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..info.d)
        .map(|_| rng.gen_range(-BOX_HALF_WIDTH..BOX_HALF_WIDTH))
        .collect()
}

fn descend(x: &mut [f64], grad: &[f64], step: f64) {
    for (xi, gi) in x.iter_mut().zip(grad) {
        *xi = (*xi - step * gi).clamp(-BOX_HALF_WIDTH, BOX_HALF_WIDTH);
    }
}

fn sgd(info: ClassInfo, oracle: &mut dyn FirstOrderOracle, rng: &mut ChaCha8Rng, step: f64, epoch: usize) {
    loop {
        let mut x = random_candidate(info, rng);
        jitter_point(&mut x, info.c / 2.0, rng);
        for _ in 0..epoch {
            let Some((_, v)) = oracle.query(&x) else { return };
            descend(&mut x, &v, step);
        }
    }
}

fn gd_restarts(
    info: ClassInfo,
    oracle: &mut dyn FirstOrderOracle,
    rng: &mut ChaCha8Rng,
    step: f64,
    steps: usize,
    batch: usize,
) {
    loop {
        let mut x = uniform_box(info, rng);
        for _ in 0..steps {
            let mut grad = vec![0.0; x.len()];
            for _ in 0..batch {
                let Some((_, v)) = oracle.query(&x) else { return };
                for (g, vi) in grad.iter_mut().zip(v) {
                    *g += vi / batch as f64;
                }
            }
            descend(&mut x, &grad, step);
        }
    }
}

fn perturbed_gd(
    info: ClassInfo,
    oracle: &mut dyn FirstOrderOracle,
    rng: &mut ChaCha8Rng,
    step: f64,
    radius: f64,
    patience: usize,
) {
    let mut x = uniform_box(info, rng);
    let mut flat = 0;
    loop {
        let Some((_, v)) = oracle.query(&x) else { return };
        if v.iter().all(|&g| g == 0.0) {
            flat += 1;
        } else {
            flat = 0;
        }
        if flat >= patience {
            for xi in x.iter_mut() {
                *xi = (*xi + rng.gen_range(-radius..radius)).clamp(-BOX_HALF_WIDTH, BOX_HALF_WIDTH);
            }
            flat = 0;
        } else {
            descend(&mut x, &v, step);
        }
    }
}

fn random_search(info: ClassInfo, oracle: &mut dyn FirstOrderOracle, rng: &mut ChaCha8Rng, jitter: f64) {
    loop {
        let mut x = random_candidate(info, rng);
        jitter_point(&mut x, jitter, rng);
        if oracle.query(&x).is_none() {
            return;
        }
    }
}

fn lattice_sweep(info: ClassInfo, oracle: &mut dyn FirstOrderOracle) {
    let points: Vec<Vec<f64>> = (0..1usize << info.d)
        .flat_map(|z| Pick::BOTH.map(|p| center(z, info.d, p)))
        .collect();
    for x in points.iter().cycle() {
        if oracle.query(x).is_none() {
            return;
        }
    }
}
