use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ForwardOutput, MlmBackend, Vocab};
use crate::error::{Error, Result};

/// Distribution a mock returns at a mask.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MockDistribution {
    #[default]
    Uniform,
    /// `mass` on `token`, the remainder spread evenly over the other pieces.
    Spike {
        token: String,
        #[serde(default = "one")]
        mass: f64,
    },
    /// Raw weights over the full vocabulary (specials included).
    Probs { probs: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

fn default_max_len() -> usize {
    512
}

/// Context rule: applies to a mask whose neighbouring subwords match. `None`
/// matches anything; `^` and `$` match the sequence boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(default)]
    pub left: Option<String>,
    #[serde(default)]
    pub right: Option<String>,
    pub dist: MockDistribution,
}

/// JSON configuration of a [`MockBackend`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockSpec {
    pub vocab: Vec<String>,
    pub hidden_size: usize,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    /// Hidden row per piece; pieces without an entry get zeros.
    #[serde(default)]
    pub hidden: HashMap<String, Vec<f64>>,
    /// Explicit segmentation of whole words into pieces.
    #[serde(default)]
    pub subwords: HashMap<String, Vec<String>>,
    #[serde(default)]
    pub rules: Vec<MockRule>,
    #[serde(default)]
    pub default: MockDistribution,
}

/// Deterministic table-driven backend for tests.
#[derive(Debug, Clone)]
pub struct MockBackend {
    spec: MockSpec,
    vocab: Vocab,
}

impl MockBackend {
    pub fn new(spec: MockSpec) -> Result<Self> {
        let vocab = Vocab::new(spec.vocab.clone());
        for (piece, row) in &spec.hidden {
            if row.len() != spec.hidden_size {
                return Err(Error::Config(format!(
                    "mock hidden row for {piece:?} has width {}",
                    row.len()
                )));
            }
        }
        let check = |d: &MockDistribution| -> Result<()> {
            match d {
                MockDistribution::Uniform => Ok(()),
                MockDistribution::Spike { token, mass } => {
                    if vocab.id(token).is_none() || !(0.0..=1.0).contains(mass) {
                        return Err(Error::Config(format!("bad mock spike on {token:?}")));
                    }
                    Ok(())
                }
                MockDistribution::Probs { probs } => {
                    if probs.len() != vocab.len() {
                        return Err(Error::Config(format!(
                            "mock distribution of length {} for vocabulary of {}",
                            probs.len(),
                            vocab.len()
                        )));
                    }
                    Ok(())
                }
            }
        };
        check(&spec.default)?;
        for r in &spec.rules {
            check(&r.dist)?;
        }
        Ok(MockBackend { spec, vocab })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::new(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn materialize(&self, d: &MockDistribution) -> Vec<f64> {
        let v = self.vocab.len();
        match d {
            MockDistribution::Uniform => vec![1.0 / v as f64; v],
            MockDistribution::Spike { token, mass } => {
                let id = self.vocab.id(token).expect("validated") as usize;
                let rest = if v > 1 {
                    (1.0 - mass) / (v - 1) as f64
                } else {
                    0.0
                };
                (0..v).map(|i| if i == id { *mass } else { rest }).collect()
            }
            MockDistribution::Probs { probs } => probs.clone(),
        }
    }

    fn matches(&self, want: &Option<String>, got: Option<u32>, boundary: &str) -> bool {
        match want {
            None => true,
            Some(w) => match got {
                None => w == boundary,
                Some(id) => self.vocab.piece(id) == w,
            },
        }
    }
}

impl MlmBackend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn hidden_size(&self) -> usize {
        self.spec.hidden_size
    }

    fn max_len(&self) -> usize {
        self.spec.max_len
    }

    fn tokenize_word(&self, word: &str) -> Vec<u32> {
        match self.spec.subwords.get(word) {
            Some(pieces) => pieces
                .iter()
                .map(|p| self.vocab.id(p).unwrap_or(self.vocab.unk_id()))
                .collect(),
            None => self.vocab.tokenize_word(word),
        }
    }

    fn forward(&self, ids: &[u32]) -> Result<ForwardOutput> {
        let zeros = vec![0.0; self.spec.hidden_size];
        let hidden = ids
            .iter()
            .map(|&id| {
                self.spec
                    .hidden
                    .get(self.vocab.piece(id))
                    .unwrap_or(&zeros)
                    .clone()
            })
            .collect();
        let mut mask_probs = Vec::new();
        for (n, &id) in ids.iter().enumerate() {
            if id != self.vocab.mask_id() {
                continue;
            }
            let left = n.checked_sub(1).map(|k| ids[k]);
            let right = ids.get(n + 1).copied();
            let dist = self
                .spec
                .rules
                .iter()
                .find(|r| self.matches(&r.left, left, "^") && self.matches(&r.right, right, "$"))
                .map_or(&self.spec.default, |r| &r.dist);
            mask_probs.push(self.materialize(dist));
        }
        Ok(ForwardOutput { hidden, mask_probs })
    }
}
