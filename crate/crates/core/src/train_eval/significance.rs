use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{sentence_counts, EvalCounts};
use crate::corpus::{AnaphoraType, Sentence};
use crate::error::{Error, Result};
use crate::rng::{keyed_rng, KeyPart};
use crate::zar_model::SlotPrediction;

/// Score compared by the permutation test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    All,
    Zar,
    Dep,
}

impl Metric {
    pub fn f1(self, c: &EvalCounts) -> f64 {
        match self {
            Metric::All => c.all().f1(),
            Metric::Zar => c.total(AnaphoraType::Zar).f1(),
            Metric::Dep => c.total(AnaphoraType::Dep).f1(),
        }
    }
}

pub const MIN_ITERATIONS: usize = 1000;

/// Paired approximate randomization over sentences: each iteration swaps the
/// outputs of A and B per sentence with probability 1/2. Returns
/// `(count(|Δ_perm| ≥ |Δ_obs|) + 1) / (iterations + 1)`.
pub fn permutation_test(
    a: &[Vec<SlotPrediction>],
    b: &[Vec<SlotPrediction>],
    gold: &[Sentence],
    metric: Metric,
    iterations: usize,
    seed: u64,
) -> Result<f64> {
    if a.len() != gold.len() || b.len() != gold.len() {
        return Err(Error::Shape(format!(
            "systems cover {} and {} sentences, gold has {}",
            a.len(),
            b.len(),
            gold.len()
        )));
    }
    if iterations < MIN_ITERATIONS {
        return Err(Error::Config(format!(
            "permutation test needs at least {MIN_ITERATIONS} iterations"
        )));
    }
    let per_sentence = |sys: &[Vec<SlotPrediction>]| -> Result<Vec<EvalCounts>> {
        gold.iter()
            .zip(sys)
            .map(|(s, p)| sentence_counts(s, p))
            .collect()
    };
    let (ca, cb) = (per_sentence(a)?, per_sentence(b)?);
    let total = |c: &[EvalCounts]| {
        let mut t = EvalCounts::default();
        c.iter().for_each(|x| t.merge(x));
        t
    };
    let observed = (metric.f1(&total(&ca)) - metric.f1(&total(&cb))).abs();
    let hits: usize = (0..iterations)
        .into_par_iter()
        .map(|it| {
            let mut rng = keyed_rng(seed, &[KeyPart::Str("permutation"), it.into()]);
            let (mut ta, mut tb) = (EvalCounts::default(), EvalCounts::default());
            for (x, y) in ca.iter().zip(&cb) {
                if rng.gen_bool(0.5) {
                    ta.merge(y);
                    tb.merge(x);
                } else {
                    ta.merge(x);
                    tb.merge(y);
                }
            }
            let d = (metric.f1(&ta) - metric.f1(&tb)).abs();
            // Guard against rounding making an exact tie look smaller.
            usize::from(d >= observed - 1e-12)
        })
        .sum();
    Ok((hits + 1) as f64 / (iterations + 1) as f64)
}
