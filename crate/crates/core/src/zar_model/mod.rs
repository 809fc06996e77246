//! Multi-predicate argument scorer over frozen encoder states.
//!
//! For target predicate `j`, every token row of the encoder output gets two
//! indicator bits (is the target predicate, is any predicate). The rows go
//! through `k` unidirectional GRU layers: layer 1 runs left to right without
//! a residual connection, each later layer adds its output to its input and
//! alternates direction (odd layers left to right, even right to left).
//! A linear layer with softmax over {NOM, ACC, DAT, NONE} scores each row.

mod checkpoint;
mod decode;
mod features;
mod network;

pub use checkpoint::{
    checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
};
pub use decode::{decode_arguments, SlotPrediction, Thresholds};
pub use features::{build_features, FeatureSequence};
pub use network::{ForwardCache, ParamLayout, TensorSpec, ZarModel};

use serde::{Deserialize, Serialize};

use crate::config::KvConfig;
use crate::corpus::ArgLabel;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Number of recurrent layers.
    pub layers: usize,
    /// Recurrent state width.
    pub hidden: usize,
    pub thresholds: Thresholds,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers: 10,
            hidden: 32,
            thresholds: Thresholds::default(),
            seed: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers < 1 || self.hidden < 1 {
            return Err(Error::Config(
                "model needs at least one layer of width ≥ 1".into(),
            ));
        }
        self.thresholds.validate()
    }

    /// Reads `model.layers`, `model.hidden` and `model.seed`.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let d = ModelConfig::default();
        let c = ModelConfig {
            layers: kv.get_or("model.layers", d.layers)?,
            hidden: kv.get_or("model.hidden", d.hidden)?,
            thresholds: d.thresholds,
            seed: kv.get_or("model.seed", d.seed)?,
        };
        c.validate()?;
        Ok(c)
    }
}

/// Probabilities P(y_{i,j}) for every (token, predicate) cell of a sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGrid<F> {
    rows: usize,
    cols: usize,
    cells: Vec<[F; 4]>,
}

impl<F: Scalar> ScoreGrid<F> {
    /// Builds a grid from one column of row distributions per predicate.
    pub fn from_columns(rows: usize, columns: Vec<Vec<[F; 4]>>) -> Result<Self> {
        let cols = columns.len();
        let mut cells = vec![[F::zero(); 4]; rows * cols];
        for (j, col) in columns.into_iter().enumerate() {
            if col.len() != rows {
                return Err(Error::Shape(format!(
                    "column {j} has {} rows, expected {rows}",
                    col.len()
                )));
            }
            for (i, c) in col.into_iter().enumerate() {
                cells[i * cols + j] = c;
            }
        }
        Ok(ScoreGrid { rows, cols, cells })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Distribution of 0-based token row `i` for predicate `j`.
    pub fn get(&self, i: usize, j: usize) -> [F; 4] {
        self.cells[i * self.cols + j]
    }

    pub fn prob(&self, i: usize, j: usize, label: ArgLabel) -> F {
        self.get(i, j)[label.index()]
    }

    pub fn column(&self, j: usize) -> Vec<[F; 4]> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn cells(&self) -> &[[F; 4]] {
        &self.cells
    }
}

pub(crate) fn softmax4<F: Scalar>(logits: [F; 4]) -> [F; 4] {
    let max = logits.iter().cloned().fold(F::neg_infinity(), F::max);
    let e = logits.map(|l| (l - max).exp());
    let total = e[0] + e[1] + e[2] + e[3];
    e.map(|v| v / total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_of_zero_is_uniform() {
        assert_eq!(softmax4([0.0f64; 4]), [0.25; 4]);
        let p = softmax4([1000.0f64, 0.0, -3.0, 2.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_layout() {
        let a = vec![[0.1f64, 0.2, 0.3, 0.4], [0.4, 0.3, 0.2, 0.1]];
        let b = vec![[1.0f64, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]];
        let g = ScoreGrid::from_columns(2, vec![a.clone(), b]).unwrap();
        assert_eq!(g.column(0), a);
        assert_eq!(g.prob(1, 1, ArgLabel::Acc), 1.0);
        assert!(ScoreGrid::from_columns(3, vec![a]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig {
            layers: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert_eq!(ModelConfig::default().layers, 10);
    }
}
