use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;
use zarkit::augment::{MaskConfig, StreamMode};
use zarkit::config::KvConfig;
use zarkit::corpus::{parse_corpus, Sentence};
use zarkit::lm_backend::{DeskConfig, DeskMlm, ExternalBackend, FillStrategy, Mlm, MockBackend};
use zarkit::train_eval::{RunSpec, TrainConfig};
use zarkit::zar_model::ModelConfig;

use crate::failure::{config_error, data_error};

pub const SEED_ENV: &str = "ZARKIT_SEED";

/// Reads the config file (if any) and applies `--set` overrides in order.
pub fn load_kv(path: Option<&Path>, overrides: &[String]) -> Result<KvConfig> {
    let mut kv = match path {
        Some(p) => KvConfig::load(p)?,
        None => KvConfig::new(),
    };
    for o in overrides {
        kv.apply_override(o)?;
    }
    if !kv.contains("seed") {
        if let Ok(s) = std::env::var(SEED_ENV) {
            let seed: u64 = s
                .trim()
                .parse()
                .map_err(|_| config_error(format!("{SEED_ENV}={s:?} is not an integer")))?;
            kv.set("seed", seed);
        }
    }
    Ok(kv)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kv: KvConfig,
    pub train_path: PathBuf,
    pub validation_path: PathBuf,
    pub test_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub precision: Precision,
    pub spec: RunSpec,
}

fn existing_path(kv: &KvConfig, key: &str) -> Result<PathBuf> {
    let p: PathBuf = kv
        .get::<String>(key)?
        .ok_or_else(|| config_error(format!("missing key {key:?}")))?
        .into();
    if !p.is_file() {
        return Err(config_error(format!(
            "{key} = {}: no such file",
            p.display()
        )));
    }
    Ok(p)
}

impl ExperimentConfig {
    pub fn from_kv(kv: KvConfig) -> Result<Self> {
        let train_path = existing_path(&kv, "train_path")?;
        let validation_path = existing_path(&kv, "validation_path")?;
        let test_path = if kv.contains("test_path") {
            Some(existing_path(&kv, "test_path")?)
        } else {
            None
        };
        let out_dir: PathBuf = kv.require::<String>("out_dir")?.into();
        let precision = match kv.get_or("precision", "f32".to_string())?.as_str() {
            "f32" => Precision::F32,
            "f64" => Precision::F64,
            other => {
                return Err(config_error(format!(
                    "precision must be f32 or f64, got {other:?}"
                )))
            }
        };
        let mode: StreamMode = kv.get_or("mode", StreamMode::Baseline)?;
        let mut train = TrainConfig::from_kv(&kv)?;
        if !kv.contains("train.seeds") && !kv.contains("train.n_seeds") {
            if let Some(seed) = kv.get::<u64>("seed")? {
                train.seeds = vec![seed];
            }
        }
        let spec = RunSpec {
            mode,
            mask: MaskConfig::from_kv(&kv)?,
            model: ModelConfig::from_kv(&kv)?,
            train,
            fill: kv.get_or("fill", FillStrategy::MULTI_ARGMAX)?,
        };
        Ok(ExperimentConfig {
            kv,
            train_path,
            validation_path,
            test_path,
            out_dir,
            precision,
            spec,
        })
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.out_dir.join(format!("seed-{seed}"))
    }
}

pub fn read_corpus(path: &Path) -> Result<Vec<Sentence>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| data_error(format!("{}: {e}", path.display())))?;
    parse_corpus(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Whitespace-tokenised lines, or the surfaces of a `.zar.tsv` corpus.
fn read_pretraining_text(path: &Path) -> Result<Vec<Vec<String>>> {
    let name = path.to_string_lossy();
    if name.ends_with(".tsv") {
        return Ok(read_corpus(path)?.iter().map(Sentence::surfaces).collect());
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| data_error(format!("{}: {e}", path.display())))?;
    Ok(text
        .lines()
        .map(|l| l.split_whitespace().map(str::to_string).collect::<Vec<_>>())
        .filter(|l| !l.is_empty())
        .collect())
}

/// Builds the language model named by `backend` (mock, desk or external).
/// A desk model is loaded from `desk.model` (or `out_dir/desk.json`) when
/// that file exists, and is otherwise trained on `desk.pretrain_corpus` and
/// saved there.
pub fn build_mlm(kv: &KvConfig, out_dir: &Path) -> Result<Mlm> {
    let backend = kv.get_or("backend", "desk".to_string())?;
    match backend.as_str() {
        "mock" => {
            let path = existing_path(kv, "mock.spec")?;
            Ok(Mlm::new(MockBackend::load(&path)?))
        }
        "desk" => {
            if let Some(p) = kv.get::<String>("desk.model")? {
                let p = PathBuf::from(p);
                if p.is_file() {
                    info!("loading desk model {}", p.display());
                    return Ok(Mlm::new(DeskMlm::load(&p)?));
                }
            }
            let saved = out_dir.join("desk.json");
            if !kv.contains("desk.model") && saved.is_file() {
                info!("loading desk model {}", saved.display());
                return Ok(Mlm::new(DeskMlm::load(&saved)?));
            }
            let corpus = existing_path(kv, "desk.pretrain_corpus")?;
            let cfg = DeskConfig::from_kv(kv)?;
            let text = read_pretraining_text(&corpus)?;
            info!("pretraining desk model on {} sentences", text.len());
            let model = DeskMlm::train(&text, cfg)?;
            let target = kv.get::<String>("desk.model")?.map_or(saved, PathBuf::from);
            if let Some(parent) = target.parent() {
                std::fs::create_dir_all(parent)?;
            }
            model.save(&target)?;
            Ok(Mlm::new(model))
        }
        "external" => {
            let program: String = kv.require("external.program")?;
            let args = kv.get_list::<String>("external.args")?.unwrap_or_default();
            let vocab = existing_path(kv, "external.vocab")?;
            let hidden: usize = kv.require("external.hidden_size")?;
            let max_len: usize = kv.get_or("external.max_len", 512)?;
            Ok(Mlm::new(ExternalBackend::spawn(
                &program, &args, &vocab, hidden, max_len,
            )?))
        }
        other => Err(config_error(format!("unknown backend {other:?}"))),
    }
}
