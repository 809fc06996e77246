use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optim::{clip_gradient, lr_schedule, Adam, AdamConfig, Decay, LrSchedule};
use super::score::{evaluate, predicate_positions, score_corpus, tune_thresholds, CorpusEncoding};
use crate::augment::{masked_fraction, mix_epoch_stream, MaskConfig, StreamMode, TrainingInstance};
use crate::config::KvConfig;
use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::lm_backend::{CdaFiller, FillStrategy, Mlm};
use crate::scalar::Scalar;
use crate::zar_model::{build_features, ModelConfig, Thresholds, ZarModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub schedule: LrSchedule,
    pub adam: AdamConfig,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub seeds: Vec<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 150,
            batch_size: 16,
            clip_norm: 1.0,
            schedule: LrSchedule {
                base: 1e-3,
                warmup: 500,
                decay: Decay::InverseSqrt,
            },
            adam: AdamConfig::default(),
            patience: 20,
            seeds: (1..=10).collect(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.epochs < 1 {
            return bad("train.epochs must be at least 1");
        }
        if self.batch_size < 1 {
            return bad("train.batch_size must be at least 1");
        }
        if !(self.clip_norm > 0.0) {
            return bad("train.clip must be positive");
        }
        if !(self.schedule.base > 0.0) {
            return bad("train.lr must be positive");
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return bad("invalid Adam constants");
        }
        if self.seeds.is_empty() {
            return bad("train.seeds is empty");
        }
        Ok(())
    }

    /// Reads `train.*` keys; `train.seeds` is a comma list, `train.n_seeds`
    /// a count starting at 1.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let d = TrainConfig::default();
        let seeds = if let Some(list) = kv.get_list::<u64>("train.seeds")? {
            list
        } else if kv.contains("train.n_seeds") {
            (1..=kv.require::<u64>("train.n_seeds")?).collect()
        } else {
            d.seeds.clone()
        };
        let c = TrainConfig {
            epochs: kv.get_or("train.epochs", d.epochs)?,
            batch_size: kv.get_or("train.batch_size", d.batch_size)?,
            clip_norm: kv.get_or("train.clip", d.clip_norm)?,
            schedule: LrSchedule {
                base: kv.get_or("train.lr", d.schedule.base)?,
                warmup: kv.get_or("train.warmup", d.schedule.warmup)?,
                decay: kv.get_or("train.decay", d.schedule.decay)?,
            },
            adam: AdamConfig {
                beta1: kv.get_or("train.beta1", d.adam.beta1)?,
                beta2: kv.get_or("train.beta2", d.adam.beta2)?,
                eps: kv.get_or("train.eps", d.adam.eps)?,
            },
            patience: kv.get_or("train.patience", d.patience)?,
            seeds,
        };
        c.validate()?;
        Ok(c)
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub instances: usize,
    pub augmented: usize,
    pub masked_fraction: f64,
    pub loss: f64,
    pub lr: f64,
    pub max_grad_norm: f64,
    pub val_all_f1: f64,
    pub val_zar_f1: f64,
    pub encode_passes: u64,
    pub predict_passes: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<F> {
    /// Parameters of the best validation epoch.
    pub model: ZarModel<F>,
    pub thresholds: Thresholds,
    pub best_epoch: usize,
    pub best_val_all_f1: f64,
    pub log: Vec<EpochRecord>,
}

impl<F> TrainOutcome<F> {
    pub fn log_jsonl(&self) -> String {
        self.log
            .iter()
            .map(|r| serde_json::to_string(r).expect("log record") + "\n")
            .collect()
    }
}

/// Everything a training run needs besides the data.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub mode: StreamMode,
    pub mask: MaskConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub fill: FillStrategy,
}

impl RunSpec {
    /// Copy with the model initialisation and mask sampling keyed by `seed`.
    pub fn with_seed(&self, seed: u64) -> RunSpec {
        let mut r = self.clone();
        r.model.seed = seed;
        r.mask.seed = seed;
        r
    }
}

fn instance_gradient<F: Scalar>(
    model: &ZarModel<F>,
    mlm: &Mlm,
    corpus: &[Sentence],
    inst: &TrainingInstance,
    scale: F,
) -> Result<(Vec<F>, F)> {
    let s = &corpus[inst.sentence];
    let enc = mlm.encode(&inst.surfaces(corpus))?;
    let feats = build_features::<F>(&enc, &predicate_positions(s), inst.predicate)?;
    let mut grad = vec![F::zero(); model.params().len()];
    let nll = model.accumulate_gradient(&feats, &inst.labels, scale, &mut grad)?;
    Ok((grad, nll))
}

/// Trains one model. The encoder stays frozen: every training instance costs
/// one encoder pass per epoch, and validation sentences are encoded once up
/// front. The returned model is the best validation epoch's snapshot.
pub fn train_model<F: Scalar>(
    train: &[Sentence],
    validation: &[Sentence],
    mlm: &Mlm,
    spec: &RunSpec,
) -> Result<TrainOutcome<F>> {
    if train.is_empty() {
        return Err(Error::Empty("training corpus".into()));
    }
    if validation.is_empty() {
        return Err(Error::Empty("validation corpus".into()));
    }
    spec.train.validate()?;
    spec.model.validate()?;
    for s in train {
        mlm.check_length(&s.surfaces())?;
    }
    let val_enc = CorpusEncoding::new(mlm, validation)?;
    let filler = CdaFiller {
        mlm,
        strategy: spec.fill,
    };
    let filler = (spec.mode == StreamMode::Cda).then_some(&filler);

    let mut model = ZarModel::<F>::new(spec.model.clone(), mlm.hidden_size())?;
    let mut adam = Adam::new(spec.train.adam, model.params().len());
    let mut best: Option<(ZarModel<F>, Thresholds, f64, usize)> = None;
    let mut log = Vec::new();
    let mut stale = 0;

    for epoch in 0..spec.train.epochs {
        let before = mlm.passes();
        let stream = mix_epoch_stream(train, &spec.mask, epoch, spec.mode, filler)?;
        let mut loss_sum = 0.0;
        let mut cells = 0usize;
        let mut max_norm = 0.0f64;
        let mut lr = 0.0;
        for batch in stream.chunks(spec.train.batch_size) {
            let n_cells: usize = batch.iter().map(|i| i.labels.len()).sum();
            let scale = F::of(1.0 / n_cells as f64);
            let parts = batch
                .par_iter()
                .map(|inst| instance_gradient(&model, mlm, train, inst, scale))
                .collect::<Result<Vec<_>>>()?;
            let mut grad = vec![F::zero(); model.params().len()];
            for (g, nll) in parts {
                for (a, b) in grad.iter_mut().zip(g) {
                    *a = *a + b;
                }
                loss_sum += nll.as_f64();
            }
            cells += n_cells;
            max_norm = max_norm.max(clip_gradient(&mut grad, spec.train.clip_norm));
            lr = lr_schedule(adam.steps() + 1, &spec.train.schedule);
            adam.step(model.params_mut(), &grad, lr);
        }
        let loss = loss_sum / cells.max(1) as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "training loss at epoch {}",
                epoch + 1
            )));
        }
        let passes = mlm.passes() - before;

        let grids = score_corpus(&model, &val_enc, validation)?;
        let thresholds = tune_thresholds(&grids, validation)?;
        let report = evaluate(&grids, validation, &thresholds)?;
        let record = EpochRecord {
            epoch: epoch + 1,
            instances: stream.len(),
            augmented: stream.iter().filter(|i| i.is_augmented()).count(),
            masked_fraction: masked_fraction(&stream),
            loss,
            lr,
            max_grad_norm: max_norm,
            val_all_f1: report.all_f1(),
            val_zar_f1: report.zar_f1(),
            encode_passes: passes.encode,
            predict_passes: passes.predict,
        };
        debug!(
            "epoch {} loss {:.4} val all {:.4}",
            record.epoch, loss, record.val_all_f1
        );
        let improved = best.as_ref().is_none_or(|b| record.val_all_f1 > b.2);
        if improved {
            best = Some((model.clone(), thresholds, record.val_all_f1, epoch + 1));
            stale = 0;
        } else {
            stale += 1;
        }
        log.push(record);
        if stale >= spec.train.patience && spec.train.patience > 0 {
            info!("early stop after epoch {}", epoch + 1);
            break;
        }
    }
    let (mut model, thresholds, best_val_all_f1, best_epoch) = best.expect("at least one epoch");
    model.config_mut().thresholds = thresholds;
    Ok(TrainOutcome {
        model,
        thresholds,
        best_epoch,
        best_val_all_f1,
        log,
    })
}
