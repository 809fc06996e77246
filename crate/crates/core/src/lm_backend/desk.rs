//! Desk-scale masked language model.
//!
//! Each subword has an embedding `x` of width `dim`. The contextual half of
//! the hidden state mixes the neighbours within `window` positions:
//!
//! ```text
//! c_i = tanh(b + Σ_{o ≠ 0, |o| ≤ window} W_o x_{i+o})
//! e_i = x_i ⊕ c_i
//! P_i = softmax(W_out e_i + b_out)
//! ```
//!
//! so the state of a `[MASK]` combines the learned mask embedding with a
//! context summary trained to predict the hidden token. Special pieces never
//! receive probability mass.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ForwardOutput, MlmBackend, Vocab, CONTINUATION};
use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::rng::{keyed_rng, KeyPart};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeskConfig {
    pub dim: usize,
    pub window: usize,
    pub epochs: usize,
    pub mask_rate: f64,
    pub lr: f64,
    pub max_len: usize,
    pub min_count: usize,
    pub seed: u64,
}

impl Default for DeskConfig {
    fn default() -> Self {
        DeskConfig {
            dim: 16,
            window: 2,
            epochs: 3,
            mask_rate: 0.15,
            lr: 0.05,
            max_len: 128,
            min_count: 1,
            seed: 17,
        }
    }
}

impl DeskConfig {
    /// Reads `desk.*` keys.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let d = DeskConfig::default();
        let c = DeskConfig {
            dim: kv.get_or("desk.dim", d.dim)?,
            window: kv.get_or("desk.window", d.window)?,
            epochs: kv.get_or("desk.epochs", d.epochs)?,
            mask_rate: kv.get_or("desk.mask_rate", d.mask_rate)?,
            lr: kv.get_or("desk.lr", d.lr)?,
            max_len: kv.get_or("desk.max_len", d.max_len)?,
            min_count: kv.get_or("desk.min_count", d.min_count)?,
            seed: kv.get_or("desk.seed", d.seed)?,
        };
        if c.dim == 0 || c.window == 0 || !(0.0..=1.0).contains(&c.mask_rate) || c.lr <= 0.0 {
            return Err(Error::Config("invalid desk model settings".into()));
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeskMlm {
    config: DeskConfig,
    vocab: Vocab,
    /// V × dim
    emb: Vec<f64>,
    /// (2·window) × dim × dim, offsets ordered -window..-1, 1..window
    ctx: Vec<f64>,
    ctx_b: Vec<f64>,
    /// V × 2·dim
    out_w: Vec<f64>,
    out_b: Vec<f64>,
}

fn build_vocab(sentences: &[Vec<String>], min_count: usize) -> Vocab {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut chars = std::collections::BTreeSet::new();
    for s in sentences {
        for w in s {
            *counts.entry(w.as_str()).or_default() += 1;
            chars.extend(w.chars());
        }
    }
    let mut words: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|(_, c)| *c >= min_count)
        .collect();
    words.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let mut pieces: Vec<String> = words.into_iter().map(|(w, _)| w.to_string()).collect();
    for c in &chars {
        pieces.push(c.to_string());
    }
    for c in &chars {
        pieces.push(format!("{CONTINUATION}{c}"));
    }
    Vocab::new(pieces)
}

impl DeskMlm {
    fn offsets(&self) -> impl Iterator<Item = isize> + '_ {
        let w = self.config.window as isize;
        (-w..0).chain(1..=w)
    }

    fn emb_row(&self, id: u32) -> &[f64] {
        let d = self.config.dim;
        &self.emb[id as usize * d..(id as usize + 1) * d]
    }

    /// Pretrains on unlabeled word sequences.
    pub fn train(sentences: &[Vec<String>], config: DeskConfig) -> Result<Self> {
        if sentences.is_empty() {
            return Err(Error::Empty("desk model pretraining corpus".into()));
        }
        let vocab = build_vocab(sentences, config.min_count);
        let d = config.dim;
        let v = vocab.len();
        let k = 2 * config.window;
        let mut rng = keyed_rng(config.seed, &[KeyPart::Str("desk-init")]);
        let mut uniform = |n: usize, scale: f64| -> Vec<f64> {
            (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
        };
        let emb = uniform(v * d, 0.5);
        let ctx = uniform(k * d * d, (1.0 / (k * d) as f64).sqrt());
        let out_w = uniform(v * 2 * d, (1.0 / (2 * d) as f64).sqrt());
        let mut model = DeskMlm {
            config,
            vocab,
            emb,
            ctx,
            ctx_b: vec![0.0; d],
            out_w,
            out_b: vec![0.0; v],
        };
        let ids: Vec<Vec<u32>> = sentences
            .iter()
            .map(|s| {
                s.iter()
                    .flat_map(|w| model.vocab.tokenize_word(w))
                    .collect()
            })
            .collect();
        let total_steps = (model.config.epochs * ids.len()).max(1);
        let mut step = 0;
        for epoch in 0..model.config.epochs {
            let mut order: Vec<usize> = (0..ids.len()).collect();
            let mut rng = keyed_rng(
                model.config.seed,
                &[KeyPart::Str("desk-epoch"), epoch.into()],
            );
            order.shuffle(&mut rng);
            let mut loss = 0.0;
            let mut seen = 0usize;
            for &n in &order {
                let lr = model.config.lr * (1.0 - 0.9 * step as f64 / total_steps as f64);
                step += 1;
                let seq = &ids[n];
                if seq.is_empty() {
                    continue;
                }
                let mut masked: Vec<usize> = (0..seq.len())
                    .filter(|_| rng.gen_bool(model.config.mask_rate))
                    .collect();
                if masked.is_empty() {
                    masked.push(rng.gen_range(0..seq.len()));
                }
                let mut input = seq.clone();
                for &i in &masked {
                    input[i] = model.vocab.mask_id();
                }
                for &i in &masked {
                    loss += model.sgd_step(&input, i, seq[i], lr);
                    seen += 1;
                }
            }
            log::debug!(
                "desk mlm epoch {epoch}: mean loss {:.4}",
                loss / seen.max(1) as f64
            );
        }
        Ok(model)
    }

    fn context(&self, ids: &[u32], i: usize) -> Vec<f64> {
        let d = self.config.dim;
        let mut a = self.ctx_b.clone();
        for (k, o) in self.offsets().enumerate() {
            let j = i as isize + o;
            if j < 0 || j as usize >= ids.len() {
                continue;
            }
            let x = self.emb_row(ids[j as usize]);
            let w = &self.ctx[k * d * d..(k + 1) * d * d];
            for r in 0..d {
                let row = &w[r * d..(r + 1) * d];
                a[r] += row.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
            }
        }
        a.iter_mut().for_each(|v| *v = v.tanh());
        a
    }

    fn hidden(&self, ids: &[u32], i: usize) -> Vec<f64> {
        let mut h = self.emb_row(ids[i]).to_vec();
        h.extend(self.context(ids, i));
        h
    }

    fn probs(&self, hidden: &[f64]) -> Vec<f64> {
        let v = self.vocab.len();
        let w = 2 * self.config.dim;
        let mut logits: Vec<f64> = (0..v)
            .map(|t| {
                if self.vocab.is_special(t as u32) {
                    f64::NEG_INFINITY
                } else {
                    self.out_b[t]
                        + self.out_w[t * w..(t + 1) * w]
                            .iter()
                            .zip(hidden)
                            .map(|(a, b)| a * b)
                            .sum::<f64>()
                }
            })
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for l in &mut logits {
            *l = (*l - max).exp();
            total += *l;
        }
        logits.iter_mut().for_each(|l| *l /= total);
        logits
    }

    /// One SGD update for predicting `target` at masked position `i`.
    fn sgd_step(&mut self, ids: &[u32], i: usize, target: u32, lr: f64) -> f64 {
        let d = self.config.dim;
        let w = 2 * d;
        let c = self.context(ids, i);
        let mut h = self.emb_row(ids[i]).to_vec();
        h.extend_from_slice(&c);
        let p = self.probs(&h);
        let loss = -p[target as usize].max(1e-300).ln();
        let mut dh = vec![0.0; w];
        for t in 0..self.vocab.len() {
            let g = p[t] - if t == target as usize { 1.0 } else { 0.0 };
            if g == 0.0 {
                continue;
            }
            let row = &mut self.out_w[t * w..(t + 1) * w];
            for k in 0..w {
                dh[k] += g * row[k];
                row[k] -= lr * g * h[k];
            }
            self.out_b[t] -= lr * g;
        }
        let own = ids[i] as usize;
        for k in 0..d {
            self.emb[own * d + k] -= lr * dh[k];
        }
        let da: Vec<f64> = (0..d).map(|r| dh[d + r] * (1.0 - c[r] * c[r])).collect();
        for r in 0..d {
            self.ctx_b[r] -= lr * da[r];
        }
        let offsets: Vec<isize> = self.offsets().collect();
        for (k, o) in offsets.into_iter().enumerate() {
            let j = i as isize + o;
            if j < 0 || j as usize >= ids.len() {
                continue;
            }
            let nid = ids[j as usize] as usize;
            let x: Vec<f64> = self.emb[nid * d..(nid + 1) * d].to_vec();
            let base = k * d * d;
            let mut dx = vec![0.0; d];
            for r in 0..d {
                for q in 0..d {
                    let wv = &mut self.ctx[base + r * d + q];
                    dx[q] += da[r] * *wv;
                    *wv -= lr * da[r] * x[q];
                }
            }
            for q in 0..d {
                self.emb[nid * d + q] -= lr * dx[q];
            }
        }
        loss
    }

    /// Fraction of held-out masked positions whose argmax prediction is right.
    pub fn masked_accuracy(&self, sentences: &[Vec<String>], seed: u64) -> f64 {
        let mut rng = keyed_rng(seed, &[KeyPart::Str("desk-eval")]);
        let mut hits = 0usize;
        let mut total = 0usize;
        for s in sentences {
            let ids: Vec<u32> = s.iter().flat_map(|w| self.vocab.tokenize_word(w)).collect();
            if ids.is_empty() {
                continue;
            }
            let i = rng.gen_range(0..ids.len());
            let mut input = ids.clone();
            input[i] = self.vocab.mask_id();
            let p = self.probs(&self.hidden(&input, i));
            let best = (0..p.len()).fold(0, |b, t| if p[t] > p[b] { t } else { b });
            hits += usize::from(best as u32 == ids[i]);
            total += 1;
        }
        hits as f64 / total.max(1) as f64
    }

    pub fn config(&self) -> &DeskConfig {
        &self.config
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: DeskMlm = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let d = m.config.dim;
        let v = m.vocab.len();
        if m.emb.len() != v * d
            || m.out_w.len() != v * 2 * d
            || m.ctx.len() != 2 * m.config.window * d * d
        {
            return Err(Error::Config(
                "desk model file has inconsistent shapes".into(),
            ));
        }
        Ok(m)
    }
}

impl MlmBackend for DeskMlm {
    fn name(&self) -> &str {
        "desk"
    }

    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn hidden_size(&self) -> usize {
        2 * self.config.dim
    }

    fn max_len(&self) -> usize {
        self.config.max_len
    }

    fn forward(&self, ids: &[u32]) -> Result<ForwardOutput> {
        let hidden: Vec<Vec<f64>> = (0..ids.len()).map(|i| self.hidden(ids, i)).collect();
        let mask_probs = ids
            .iter()
            .enumerate()
            .filter(|(_, &id)| id == self.vocab.mask_id())
            .map(|(i, _)| self.probs(&hidden[i]))
            .collect();
        Ok(ForwardOutput { hidden, mask_probs })
    }
}
