use serde::{Deserialize, Serialize};

use crate::corpus::LabelGrid;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::zar_model::ScoreGrid;

/// Mean negative log-probability of the gold label over every cell.
pub fn compute_loss<F: Scalar>(scores: &ScoreGrid<F>, gold: &LabelGrid) -> Result<f64> {
    if scores.rows() != gold.rows() || scores.cols() != gold.cols() {
        return Err(Error::Shape(format!(
            "scores are {}x{}, labels {}x{}",
            scores.rows(),
            scores.cols(),
            gold.rows(),
            gold.cols()
        )));
    }
    let cells = scores.rows() * scores.cols();
    if cells == 0 {
        return Err(Error::Empty("loss over an empty grid".into()));
    }
    let mut total = 0.0;
    for i in 0..scores.rows() {
        for j in 0..scores.cols() {
            let p = scores.prob(i, j, gold.get(i, j)).as_f64();
            if !p.is_finite() {
                return Err(Error::NonFinite(format!(
                    "probability at ({}, {})",
                    i + 1,
                    j + 1
                )));
            }
            total -= p.ln();
        }
    }
    Ok(total / cells as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decay {
    InverseSqrt,
    Constant,
}

impl std::str::FromStr for Decay {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inverse_sqrt" => Ok(Decay::InverseSqrt),
            "constant" => Ok(Decay::Constant),
            other => Err(Error::Config(format!("unknown decay {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base: f64,
    pub warmup: u64,
    pub decay: Decay,
}

/// Linear warmup to `base` over `warmup` steps, then `base·√(warmup/step)`
/// (or constant). Without warmup the rate starts at `base`.
pub fn lr_schedule(step: u64, s: &LrSchedule) -> f64 {
    if s.warmup == 0 {
        return match s.decay {
            Decay::Constant => s.base,
            Decay::InverseSqrt => s.base / (step.max(1) as f64).sqrt(),
        };
    }
    let (t, w) = (step as f64, s.warmup as f64);
    if step <= s.warmup {
        return s.base * t / w;
    }
    match s.decay {
        Decay::Constant => s.base,
        Decay::InverseSqrt => s.base * (w / t).sqrt(),
    }
}

/// Scales `grad` in place to global norm at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_gradient<F: Scalar>(grad: &mut [F], max_norm: f64) -> f64 {
    let norm = grad
        .iter()
        .map(|g| g.as_f64() * g.as_f64())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = F::of(max_norm / norm);
        for g in grad.iter_mut() {
            *g = *g * s;
        }
    }
    norm
}

pub fn gradient_norm<F: Scalar>(grad: &[F]) -> f64 {
    grad.iter()
        .map(|g| g.as_f64() * g.as_f64())
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, size: usize) -> Self {
        Adam {
            config,
            m: vec![0.0; size],
            v: vec![0.0; size],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step<F: Scalar>(&mut self, params: &mut [F], grad: &[F], lr: f64) {
        assert_eq!(params.len(), self.m.len(), "optimizer state size");
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i].as_f64();
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let update = lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + eps);
            params[i] = params[i] - F::of(update);
        }
    }
}
