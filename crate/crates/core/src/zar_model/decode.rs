use serde::{Deserialize, Serialize};

use super::ScoreGrid;
use crate::corpus::Case;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Minimum winning probability per case, indexed NOM, ACC, DAT.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds(pub [f64; 3]);

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds([0.5; 3])
    }
}

impl Thresholds {
    pub fn uniform(theta: f64) -> Self {
        Thresholds([theta; 3])
    }

    pub fn get(&self, case: Case) -> f64 {
        self.0[case.index()]
    }

    pub fn set(&mut self, case: Case, theta: f64) {
        self.0[case.index()] = theta;
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.iter().all(|t| (0.0..=1.0).contains(t)) {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "thresholds must lie in [0, 1], got {:?}",
                self.0
            )))
        }
    }
}

/// Decoded slots of one predicate: 1-based token index per case, or empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SlotPrediction(pub [Option<usize>; 3]);

impl SlotPrediction {
    pub fn get(&self, case: Case) -> Option<usize> {
        self.0[case.index()]
    }
}

/// For every predicate and case, picks the most probable token (lowest index
/// on ties) and keeps it only if its probability is strictly above θ.
pub fn decode_arguments<F: Scalar>(
    grid: &ScoreGrid<F>,
    thresholds: &Thresholds,
) -> Vec<SlotPrediction> {
    (0..grid.cols())
        .map(|j| {
            let mut slots = SlotPrediction::default();
            for case in Case::ALL {
                let label = case.label();
                let mut best: Option<(usize, f64)> = None;
                for i in 0..grid.rows() {
                    let p = grid.prob(i, j, label).as_f64();
                    if best.is_none_or(|(_, b)| p > b) {
                        best = Some((i, p));
                    }
                }
                slots.0[case.index()] = best
                    .filter(|&(_, p)| p > thresholds.get(case))
                    .map(|(i, _)| i + 1);
            }
            slots
        })
        .collect()
}
