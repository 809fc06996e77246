//! Masked language model backends.
//!
//! A backend works on subword ids: given a sequence (with mask ids) it
//! returns one hidden row per subword and one vocabulary distribution per
//! mask id. [`Mlm`] wraps a backend with word-level operations:
//! head-subword alignment, distribution checks, the fill strategies used by
//! contextual augmentation, and an atomic forward-pass counter.

mod desk;
mod external;
mod mock;
mod vocab;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{apply_mask, MaskPlan};
use crate::corpus::{Sentence, MASK_SYMBOL};
use crate::error::{Error, Result};
use crate::rng::{keyed_rng, KeyPart};

pub use desk::{DeskConfig, DeskMlm};
pub use external::ExternalBackend;
pub use mock::{MockBackend, MockDistribution, MockRule, MockSpec};
pub use vocab::{Vocab, CONTINUATION, UNK};

/// Raw backend output for one subword sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// One row per input subword.
    pub hidden: Vec<Vec<f64>>,
    /// One distribution (or unnormalized non-negative weights) per mask id,
    /// in sequence order.
    pub mask_probs: Vec<Vec<f64>>,
}

pub trait MlmBackend: Send + Sync {
    fn name(&self) -> &str;

    fn vocab(&self) -> &Vocab;

    fn hidden_size(&self) -> usize;

    /// Longest accepted subword sequence.
    fn max_len(&self) -> usize;

    fn tokenize_word(&self, word: &str) -> Vec<u32> {
        self.vocab().tokenize_word(word)
    }

    fn forward(&self, ids: &[u32]) -> Result<ForwardOutput>;
}

/// Final hidden states aligned to tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl EncoderOutput {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * dim {
            return Err(Error::Shape(format!(
                "{} values for {rows}x{dim} encoder output",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("encoder output contains {v}")));
        }
        Ok(EncoderOutput { rows, dim, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// 0-based token row.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VocabDistribution {
    /// 1-based token position of the mask.
    pub position: usize,
    pub probs: Vec<f64>,
}

impl VocabDistribution {
    /// Most probable id; ties go to the lowest id.
    pub fn argmax(&self) -> u32 {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best as u32
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                last = i;
                if u < acc {
                    return i as u32;
                }
            }
        }
        last as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Granularity {
    /// One query per mask, others restored to the original tokens.
    Single,
    /// All masks filled from one query.
    Multi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Selector {
    Argmax,
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FillStrategy {
    pub granularity: Granularity,
    pub selector: Selector,
}

impl FillStrategy {
    pub const MULTI_ARGMAX: FillStrategy = FillStrategy {
        granularity: Granularity::Multi,
        selector: Selector::Argmax,
    };
    pub const SINGLE_ARGMAX: FillStrategy = FillStrategy {
        granularity: Granularity::Single,
        selector: Selector::Argmax,
    };
}

impl Default for FillStrategy {
    fn default() -> Self {
        FillStrategy::MULTI_ARGMAX
    }
}

impl fmt::Display for FillStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g = match self.granularity {
            Granularity::Single => "single",
            Granularity::Multi => "multi",
        };
        let s = match self.selector {
            Selector::Argmax => "argmax",
            Selector::Sample => "sample",
        };
        write!(f, "{g}-{s}")
    }
}

impl FromStr for FillStrategy {
    type Err = Error;

    /// `multi-argmax`, `single-sample`, ...
    fn from_str(s: &str) -> Result<Self> {
        let (g, sel) = s.split_once('-').ok_or_else(|| {
            Error::Config(format!("fill strategy {s:?} is not GRANULARITY-SELECTOR"))
        })?;
        let granularity = match g {
            "single" => Granularity::Single,
            "multi" => Granularity::Multi,
            _ => return Err(Error::Config(format!("unknown fill granularity {g:?}"))),
        };
        let selector = match sel {
            "argmax" => Selector::Argmax,
            "sample" => Selector::Sample,
            _ => return Err(Error::Config(format!("unknown fill selector {sel:?}"))),
        };
        Ok(FillStrategy {
            granularity,
            selector,
        })
    }
}

/// Forward passes recorded over some span of work.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassLog {
    pub encode: u64,
    pub predict: u64,
}

impl PassLog {
    pub fn total(&self) -> u64 {
        self.encode + self.predict
    }
}

impl std::ops::Sub for PassLog {
    type Output = PassLog;

    fn sub(self, rhs: PassLog) -> PassLog {
        PassLog {
            encode: self.encode - rhs.encode,
            predict: self.predict - rhs.predict,
        }
    }
}

/// Total encode and predict passes of a run log.
pub fn count_encoder_passes(log: &[PassLog]) -> u64 {
    log.iter().map(PassLog::total).sum()
}

/// Word-level front end over a backend. Safe to share across threads.
pub struct Mlm {
    backend: Box<dyn MlmBackend>,
    encode_passes: AtomicU64,
    predict_passes: AtomicU64,
}

impl fmt::Debug for Mlm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Mlm")
            .field("backend", &self.backend.name())
            .field("passes", &self.passes())
            .finish()
    }
}

impl Mlm {
    pub fn new(backend: impl MlmBackend + 'static) -> Self {
        Self::from_boxed(Box::new(backend))
    }

    pub fn from_boxed(backend: Box<dyn MlmBackend>) -> Self {
        Mlm {
            backend,
            encode_passes: AtomicU64::new(0),
            predict_passes: AtomicU64::new(0),
        }
    }

    pub fn backend(&self) -> &dyn MlmBackend {
        self.backend.as_ref()
    }

    pub fn vocab(&self) -> &Vocab {
        self.backend.vocab()
    }

    pub fn hidden_size(&self) -> usize {
        self.backend.hidden_size()
    }

    pub fn passes(&self) -> PassLog {
        PassLog {
            encode: self.encode_passes.load(Ordering::SeqCst),
            predict: self.predict_passes.load(Ordering::SeqCst),
        }
    }

    pub fn reset_passes(&self) {
        self.encode_passes.store(0, Ordering::SeqCst);
        self.predict_passes.store(0, Ordering::SeqCst);
    }

    /// Subword ids of every token plus the offset of each token's head subword.
    fn segment(&self, tokens: &[String]) -> Result<(Vec<u32>, Vec<usize>)> {
        let mut ids = Vec::new();
        let mut heads = Vec::with_capacity(tokens.len());
        for t in tokens {
            let pieces = self.backend.tokenize_word(t);
            if pieces.is_empty() {
                return Err(Error::Backend(format!("token {t:?} produced no subwords")));
            }
            heads.push(ids.len());
            ids.extend(pieces);
        }
        let max = self.backend.max_len();
        if ids.len() > max {
            return Err(Error::SequenceTooLong {
                len: ids.len(),
                max,
            });
        }
        Ok((ids, heads))
    }

    /// Checks that `tokens` fit the backend without running it.
    pub fn check_length(&self, tokens: &[String]) -> Result<()> {
        self.segment(tokens).map(|_| ())
    }

    /// Hidden states, one row per token taken from its head (first) subword.
    pub fn encode(&self, tokens: &[String]) -> Result<EncoderOutput> {
        let (ids, heads) = self.segment(tokens)?;
        self.encode_passes.fetch_add(1, Ordering::SeqCst);
        let out = self.backend.forward(&ids)?;
        if out.hidden.len() != ids.len() {
            return Err(Error::Backend(format!(
                "{} hidden rows for {} subwords",
                out.hidden.len(),
                ids.len()
            )));
        }
        let dim = self.backend.hidden_size();
        let mut data = Vec::with_capacity(tokens.len() * dim);
        for &h in &heads {
            let row = &out.hidden[h];
            if row.len() != dim {
                return Err(Error::Backend(format!(
                    "hidden row of width {} (expected {dim})",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        EncoderOutput::new(tokens.len(), dim, data)
    }

    /// One normalized distribution per `[MASK]` token, in position order.
    /// A sequence without masks yields an empty list and no backend call.
    pub fn predict_distributions(&self, tokens: &[String]) -> Result<Vec<VocabDistribution>> {
        let positions: Vec<usize> = tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| t.as_str() == MASK_SYMBOL)
            .map(|(i, _)| i + 1)
            .collect();
        if positions.is_empty() {
            return Ok(Vec::new());
        }
        let (ids, _) = self.segment(tokens)?;
        self.predict_passes.fetch_add(1, Ordering::SeqCst);
        let out = self.backend.forward(&ids)?;
        if out.mask_probs.len() != positions.len() {
            return Err(Error::Backend(format!(
                "{} distributions for {} masks",
                out.mask_probs.len(),
                positions.len()
            )));
        }
        let v = self.vocab().len();
        positions
            .into_iter()
            .zip(out.mask_probs)
            .map(|(position, raw)| {
                if raw.len() != v {
                    return Err(Error::Backend(format!(
                        "distribution of length {} (vocabulary {v})",
                        raw.len()
                    )));
                }
                if raw.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    return Err(Error::Backend(
                        "distribution has negative or non-finite mass".into(),
                    ));
                }
                let total: f64 = raw.iter().sum();
                if total <= 0.0 {
                    return Err(Error::Backend("distribution has zero mass".into()));
                }
                Ok(VocabDistribution {
                    position,
                    probs: raw.into_iter().map(|p| p / total).collect(),
                })
            })
            .collect()
    }

    fn select<R: Rng + ?Sized>(
        &self,
        d: &VocabDistribution,
        selector: Selector,
        rng: &mut R,
    ) -> String {
        let id = match selector {
            Selector::Argmax => d.argmax(),
            Selector::Sample => d.sample(rng),
        };
        self.vocab().surface(id)
    }

    /// Replaces the planned positions with language-model predictions.
    pub fn fill_masks<R: Rng + ?Sized>(
        &self,
        sentence: &Sentence,
        plan: &MaskPlan,
        strategy: FillStrategy,
        rng: &mut R,
    ) -> Result<Vec<String>> {
        let original = sentence.surfaces();
        let masked = apply_mask(sentence, plan)?;
        if plan.mask_count() == 0 {
            return Ok(original);
        }
        let mut out = original.clone();
        match strategy.granularity {
            Granularity::Multi => {
                for d in self.predict_distributions(&masked.tokens)? {
                    out[d.position - 1] = self.select(&d, strategy.selector, rng);
                }
            }
            Granularity::Single => {
                for pos in plan.masked_positions() {
                    let mut variant = original.clone();
                    variant[pos - 1] = MASK_SYMBOL.to_string();
                    let d = self.predict_distributions(&variant)?;
                    out[pos - 1] = self.select(&d[0], strategy.selector, rng);
                }
            }
        }
        Ok(out)
    }
}

/// Contextual augmentation with a fixed strategy. The sampling stream of an
/// instance is keyed by its plan, so fills are reproducible.
pub struct CdaFiller<'a> {
    pub mlm: &'a Mlm,
    pub strategy: FillStrategy,
}

impl CdaFiller<'_> {
    pub fn fill(&self, sentence: &Sentence, plan: &MaskPlan, seed: u64) -> Result<Vec<String>> {
        let mut rng = keyed_rng(
            seed,
            &[
                KeyPart::Str("fill"),
                KeyPart::Str(sentence.doc_id()),
                KeyPart::Str(sentence.sent_id()),
                plan.predicate.into(),
                plan.epoch.into(),
            ],
        );
        self.mlm.fill_masks(sentence, plan, self.strategy, &mut rng)
    }
}
