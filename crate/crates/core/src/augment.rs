//! Masking policies and per-epoch training streams.
//!
//! A [`MaskPlan`] marks positions of one (sentence, target predicate)
//! instance. Position `i` is masked when its Bernoulli(α) draw succeeds and
//! its POS tag is in the configured [`TagSet`]; the target predicate itself
//! is never masked.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::config::KvConfig;
use crate::corpus::{build_label_grid, pos, ArgLabel, Sentence, MASK_SYMBOL};
use crate::error::{Error, Result};
use crate::lm_backend::CdaFiller;
use crate::rng::{keyed_rng, KeyPart};

/// Set of POS tags eligible for masking.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TagSet {
    /// Exactly these tags.
    Only(BTreeSet<String>),
    /// Every tag except these (`all` when empty).
    AllExcept(BTreeSet<String>),
}

impl TagSet {
    pub fn all() -> Self {
        TagSet::AllExcept(BTreeSet::new())
    }

    pub fn only(tags: &[&str]) -> Self {
        TagSet::Only(tags.iter().map(|t| t.to_string()).collect())
    }

    pub fn all_except(tags: &[&str]) -> Self {
        TagSet::AllExcept(tags.iter().map(|t| t.to_string()).collect())
    }

    pub fn noun() -> Self {
        Self::only(&[pos::NOUN])
    }

    pub fn verb() -> Self {
        Self::only(&[pos::VERB])
    }

    pub fn particle() -> Self {
        Self::only(&[pos::PARTICLE])
    }

    pub fn symbol() -> Self {
        Self::only(&[pos::SYMBOL])
    }

    /// The leave-one-out sweep family: all, all-NOUN, all-VERB, all-PARTICLE, all-SYMBOL.
    pub fn sweep_family() -> Vec<TagSet> {
        vec![
            TagSet::all(),
            TagSet::all_except(&[pos::NOUN]),
            TagSet::all_except(&[pos::VERB]),
            TagSet::all_except(&[pos::PARTICLE]),
            TagSet::all_except(&[pos::SYMBOL]),
        ]
    }

    pub fn contains(&self, tag: &str) -> bool {
        match self {
            TagSet::Only(s) => s.contains(tag),
            TagSet::AllExcept(s) => !s.contains(tag),
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, TagSet::Only(s) if s.is_empty())
    }
}

impl fmt::Display for TagSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TagSet::AllExcept(s) => {
                f.write_str("all")?;
                for t in s {
                    write!(f, "-{t}")?;
                }
                Ok(())
            }
            TagSet::Only(s) => {
                let v: Vec<&str> = s.iter().map(String::as_str).collect();
                f.write_str(&v.join(","))
            }
        }
    }
}

impl FromStr for TagSet {
    type Err = Error;

    /// `all`, `all-verb`, `all-VERB-SYMBOL`, or a comma-separated tag list.
    /// Tags are upper-cased.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("all") {
            return Ok(TagSet::all());
        }
        if let Some(rest) = s.strip_prefix("all-").or_else(|| s.strip_prefix("ALL-")) {
            let tags: BTreeSet<String> = rest
                .split('-')
                .map(|t| t.trim().to_ascii_uppercase())
                .filter(|t| !t.is_empty())
                .collect();
            if tags.is_empty() {
                return Err(Error::Config(format!("empty complement in tagset {s:?}")));
            }
            return Ok(TagSet::AllExcept(tags));
        }
        let tags: BTreeSet<String> = s
            .split(',')
            .map(|t| t.trim().to_ascii_uppercase())
            .filter(|t| !t.is_empty())
            .collect();
        if tags.is_empty() {
            return Err(Error::Config("tagset is empty".into()));
        }
        Ok(TagSet::Only(tags))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskRefresh {
    /// New plans at every epoch, constant within one.
    PerEpoch,
    /// One plan per instance for the whole run.
    Once,
}

impl FromStr for MaskRefresh {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_epoch" => Ok(MaskRefresh::PerEpoch),
            "once" => Ok(MaskRefresh::Once),
            other => Err(Error::Config(format!(
                "mask_refresh must be per_epoch or once, got {other:?}"
            ))),
        }
    }
}

impl fmt::Display for MaskRefresh {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaskRefresh::PerEpoch => "per_epoch",
            MaskRefresh::Once => "once",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskConfig {
    pub alpha: f64,
    pub tagset: TagSet,
    pub seed: u64,
    pub refresh: MaskRefresh,
}

impl Default for MaskConfig {
    fn default() -> Self {
        MaskConfig {
            alpha: 0.5,
            tagset: TagSet::all(),
            seed: 1,
            refresh: MaskRefresh::PerEpoch,
        }
    }
}

impl MaskConfig {
    pub fn new(alpha: f64, tagset: TagSet, seed: u64) -> Self {
        MaskConfig {
            alpha,
            tagset,
            seed,
            refresh: MaskRefresh::PerEpoch,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "alpha {} outside [0, 1]",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Reads `alpha`, `tagset`, `seed` and `mask_refresh`.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let d = MaskConfig::default();
        let c = MaskConfig {
            alpha: kv.get_or("alpha", d.alpha)?,
            tagset: kv.get_or("tagset", d.tagset)?,
            seed: kv.get_or("seed", d.seed)?,
            refresh: kv.get_or("mask_refresh", d.refresh)?,
        };
        c.validate()?;
        Ok(c)
    }

    fn epoch_key(&self, epoch: usize) -> usize {
        match self.refresh {
            MaskRefresh::PerEpoch => epoch,
            MaskRefresh::Once => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPlan {
    pub doc_id: String,
    pub sent_id: String,
    /// 0-based target predicate ordinal.
    pub predicate: usize,
    pub epoch: usize,
    /// One flag per token, top to bottom.
    pub positions: Vec<bool>,
}

impl MaskPlan {
    pub fn empty(sentence: &Sentence, predicate: usize) -> Self {
        MaskPlan {
            doc_id: sentence.doc_id().to_string(),
            sent_id: sentence.sent_id().to_string(),
            predicate,
            epoch: 0,
            positions: vec![false; sentence.len()],
        }
    }

    pub fn mask_count(&self) -> usize {
        self.positions.iter().filter(|&&m| m).count()
    }

    /// 1-based masked positions in order.
    pub fn masked_positions(&self) -> Vec<usize> {
        self.positions
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| i + 1)
            .collect()
    }
}

/// Samples the mask plan of instance (sentence, predicate `j`) for `epoch`.
///
/// A Bernoulli draw is made for every position, eligible or not, so the
/// stream is a pure function of `(seed, doc, sent, j, epoch)`.
pub fn sample_mask_plan(
    sentence: &Sentence,
    j: usize,
    config: &MaskConfig,
    epoch: usize,
) -> Result<MaskPlan> {
    config.validate()?;
    let target = sentence.predicate_position(j).ok_or(Error::OutOfRange {
        index: j + 1,
        len: sentence.predicates().len(),
    })?;
    let key = config.epoch_key(epoch);
    let mut rng = keyed_rng(
        config.seed,
        &[
            KeyPart::Str("mask"),
            KeyPart::Str(sentence.doc_id()),
            KeyPart::Str(sentence.sent_id()),
            j.into(),
            key.into(),
        ],
    );
    let positions = sentence
        .tokens()
        .iter()
        .map(|t| {
            let hit = rng.gen_bool(config.alpha);
            hit && t.index != target && config.tagset.contains(&t.pos)
        })
        .collect();
    Ok(MaskPlan {
        doc_id: sentence.doc_id().to_string(),
        sent_id: sentence.sent_id().to_string(),
        predicate: j,
        epoch: key,
        positions,
    })
}

/// Token sequence with masked positions replaced by [`MASK_SYMBOL`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedSentence {
    pub tokens: Vec<String>,
}

impl MaskedSentence {
    pub fn mask_count(&self) -> usize {
        self.tokens
            .iter()
            .filter(|t| t.as_str() == MASK_SYMBOL)
            .count()
    }
}

pub fn apply_mask(sentence: &Sentence, plan: &MaskPlan) -> Result<MaskedSentence> {
    if plan.positions.len() != sentence.len() {
        return Err(Error::Shape(format!(
            "mask plan covers {} positions, sentence has {}",
            plan.positions.len(),
            sentence.len()
        )));
    }
    let tokens = sentence
        .tokens()
        .iter()
        .zip(&plan.positions)
        .map(|(t, &m)| {
            if m {
                MASK_SYMBOL.to_string()
            } else {
                t.surface.clone()
            }
        })
        .collect();
    Ok(MaskedSentence { tokens })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamMode {
    /// Originals only.
    Baseline,
    /// Every original twice.
    Baseline2x,
    /// Originals plus one `[MASK]`-augmented copy each.
    Masking,
    /// Originals plus one copy with masks filled by the language model.
    Cda,
}

impl StreamMode {
    pub fn is_augmenting(self) -> bool {
        matches!(self, StreamMode::Masking | StreamMode::Cda)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StreamMode::Baseline => "baseline",
            StreamMode::Baseline2x => "baseline2x",
            StreamMode::Masking => "masking",
            StreamMode::Cda => "cda",
        }
    }
}

impl fmt::Display for StreamMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StreamMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(StreamMode::Baseline),
            "baseline2x" => Ok(StreamMode::Baseline2x),
            "masking" => Ok(StreamMode::Masking),
            "cda" => Ok(StreamMode::Cda),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InstanceInput {
    Original,
    Masked(MaskedSentence),
    Filled(Vec<String>),
}

/// One (sentence, target predicate) training example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingInstance {
    /// Offset of the sentence in the corpus.
    pub sentence: usize,
    /// 0-based target predicate.
    pub predicate: usize,
    pub input: InstanceInput,
    /// Gold column of the original sentence.
    pub labels: Vec<ArgLabel>,
    /// Positions masked to build the input (empty for originals).
    pub plan: Option<MaskPlan>,
}

impl TrainingInstance {
    pub fn is_augmented(&self) -> bool {
        !matches!(self.input, InstanceInput::Original)
    }

    /// Surface sequence fed to the encoder.
    pub fn surfaces(&self, corpus: &[Sentence]) -> Vec<String> {
        match &self.input {
            InstanceInput::Original => corpus[self.sentence].surfaces(),
            InstanceInput::Masked(m) => m.tokens.clone(),
            InstanceInput::Filled(t) => t.clone(),
        }
    }
}

/// Builds the shuffled training stream of one epoch.
///
/// `filler` is required for [`StreamMode::Cda`] and ignored otherwise.
pub fn mix_epoch_stream(
    corpus: &[Sentence],
    config: &MaskConfig,
    epoch: usize,
    mode: StreamMode,
    filler: Option<&CdaFiller<'_>>,
) -> Result<Vec<TrainingInstance>> {
    if mode.is_augmenting() {
        config.validate()?;
        if config.tagset.is_empty() {
            return Err(Error::Config("augmenting run with an empty tagset".into()));
        }
    }
    if mode == StreamMode::Cda && filler.is_none() {
        return Err(Error::Config(
            "cda mode needs a language model filler".into(),
        ));
    }
    let mut stream = Vec::new();
    for (n, s) in corpus.iter().enumerate() {
        let grid = build_label_grid(s);
        for j in 0..s.predicates().len() {
            let original = TrainingInstance {
                sentence: n,
                predicate: j,
                input: InstanceInput::Original,
                labels: grid.column(j),
                plan: None,
            };
            let copy = match mode {
                StreamMode::Baseline => None,
                StreamMode::Baseline2x => Some(original.clone()),
                StreamMode::Masking => {
                    let plan = sample_mask_plan(s, j, config, epoch)?;
                    Some(TrainingInstance {
                        input: InstanceInput::Masked(apply_mask(s, &plan)?),
                        plan: Some(plan),
                        ..original.clone()
                    })
                }
                StreamMode::Cda => {
                    let plan = sample_mask_plan(s, j, config, epoch)?;
                    let filled = filler.expect("checked above").fill(s, &plan, config.seed)?;
                    Some(TrainingInstance {
                        input: InstanceInput::Filled(filled),
                        plan: Some(plan),
                        ..original.clone()
                    })
                }
            };
            stream.push(original);
            stream.extend(copy);
        }
    }
    let mut rng = keyed_rng(config.seed, &[KeyPart::Str("shuffle"), epoch.into()]);
    stream.shuffle(&mut rng);
    Ok(stream)
}

/// Masked tokens over all tokens of the augmented instances in `stream`.
pub fn masked_fraction(stream: &[TrainingInstance]) -> f64 {
    let (masked, total) = stream
        .iter()
        .filter_map(|inst| inst.plan.as_ref())
        .fold((0usize, 0usize), |(m, t), p| {
            (m + p.mask_count(), t + p.positions.len())
        });
    if total == 0 {
        0.0
    } else {
        masked as f64 / total as f64
    }
}
