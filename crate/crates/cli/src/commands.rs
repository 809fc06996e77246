use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;
use rayon::prelude::*;
use serde_json::{json, Value};
use zarkit::augment::{
    apply_mask, masked_fraction, mix_epoch_stream, InstanceInput, MaskConfig, StreamMode, TagSet,
};
use zarkit::config::KvConfig;
use zarkit::corpus::{serialize_corpus, Sentence, Token};
use zarkit::lm_backend::{CdaFiller, FillStrategy, Mlm};
use zarkit::synthgen::{generate_range, GrammarConfig};
use zarkit::train_eval::{
    average_grids, decode_corpus, evaluate, permutation_test, render_table, score_corpus,
    train_model, tune_thresholds, CorpusEncoding, EvalReport, Metric, MultiSeedReport,
};
use zarkit::zar_model::{load_checkpoint, save_checkpoint, SlotPrediction, ZarModel};
use zarkit::Scalar;

use crate::experiment::{build_mlm, read_corpus, ExperimentConfig, Precision};
use crate::failure::{config_error, data_error};
use crate::plot;

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json value") + "\n"
}

pub fn synth(kv: &KvConfig, n: usize, start: usize, out: &Path) -> Result<()> {
    let cfg = GrammarConfig::from_kv(kv)?;
    let corpus = generate_range(&cfg, start, n)?;
    write(out, serialize_corpus(&corpus)?)?;
    info!("wrote {} sentences to {}", corpus.len(), out.display());
    Ok(())
}

fn with_surfaces(s: &Sentence, surfaces: &[String], sent_id: String) -> Result<Sentence> {
    let tokens: Vec<Token> = s
        .tokens()
        .iter()
        .zip(surfaces)
        .map(|(t, surface)| Token {
            surface: surface.clone(),
            ..t.clone()
        })
        .collect();
    Ok(Sentence::new(
        s.doc_id().to_string(),
        sent_id,
        tokens,
        s.predicates().to_vec(),
        s.annotations().to_vec(),
    )?)
}

/// Writes the masked copy of every (sentence, predicate) instance, and the
/// language-model filled copy when `filled` is given.
pub fn augment(
    kv: &KvConfig,
    corpus: Option<&Path>,
    epoch: usize,
    out: &Path,
    filled: Option<&Path>,
) -> Result<()> {
    let path: PathBuf = match corpus {
        Some(p) => p.to_path_buf(),
        None => kv
            .get::<String>("train_path")?
            .ok_or_else(|| config_error("augment needs --corpus or train_path"))?
            .into(),
    };
    let sentences = read_corpus(&path)?;
    let mask = MaskConfig::from_kv(kv)?;
    let stream = mix_epoch_stream(&sentences, &mask, epoch, StreamMode::Masking, None)?;
    let mut order: Vec<_> = stream.iter().filter(|i| i.is_augmented()).collect();
    order.sort_by_key(|i| (i.sentence, i.predicate));
    let sent_id = |n: usize, j: usize| format!("{}.p{}", sentences[n].sent_id(), j + 1);
    let masked = order
        .iter()
        .map(|inst| {
            let s = &sentences[inst.sentence];
            let InstanceInput::Masked(m) = &inst.input else {
                unreachable!("masking stream")
            };
            with_surfaces(s, &m.tokens, sent_id(inst.sentence, inst.predicate))
        })
        .collect::<Result<Vec<_>>>()?;
    write(out, serialize_corpus(&masked)?)?;
    eprintln!(
        "masked fraction {:.4} over {} instances",
        masked_fraction(&stream),
        masked.len()
    );
    if let Some(filled_path) = filled {
        let out_dir = kv.get_or("out_dir", ".".to_string())?;
        let mlm = build_mlm(kv, Path::new(&out_dir))?;
        let filler = CdaFiller {
            mlm: &mlm,
            strategy: kv.get_or("fill", FillStrategy::MULTI_ARGMAX)?,
        };
        let rows = order
            .iter()
            .map(|inst| {
                let s = &sentences[inst.sentence];
                let plan = inst.plan.as_ref().expect("augmented instance has a plan");
                debug_assert_eq!(apply_mask(s, plan)?.mask_count(), plan.mask_count());
                let tokens = filler.fill(s, plan, mask.seed)?;
                with_surfaces(s, &tokens, sent_id(inst.sentence, inst.predicate))
            })
            .collect::<Result<Vec<_>>>()?;
        write(filled_path, serialize_corpus(&rows)?)?;
    }
    Ok(())
}

struct Data {
    mlm: Mlm,
    train: Vec<Sentence>,
    validation: Vec<Sentence>,
}

fn load_data(exp: &ExperimentConfig) -> Result<Data> {
    let train = read_corpus(&exp.train_path)?;
    let validation = read_corpus(&exp.validation_path)?;
    let mlm = build_mlm(&exp.kv, &exp.out_dir)?;
    Ok(Data {
        mlm,
        train,
        validation,
    })
}

fn train_seeds<F: Scalar>(exp: &ExperimentConfig, data: &Data) -> Result<Vec<EvalReport>> {
    let val_enc = CorpusEncoding::new(&data.mlm, &data.validation)?;
    let mut reports = Vec::new();
    for &seed in &exp.spec.train.seeds {
        let spec = exp.spec.with_seed(seed);
        info!("training seed {seed} ({} mode)", spec.mode);
        let outcome = train_model::<F>(&data.train, &data.validation, &data.mlm, &spec)?;
        let dir = exp.seed_dir(seed);
        fs::create_dir_all(&dir)?;
        save_checkpoint(&outcome.model, &dir.join("model.ckpt"))?;
        write(&dir.join("train_log.jsonl"), outcome.log_jsonl())?;
        let grids = score_corpus(&outcome.model, &val_enc, &data.validation)?;
        let report = evaluate(&grids, &data.validation, &outcome.thresholds)?;
        info!(
            "seed {seed}: best epoch {} validation ALL F1 {:.4} ZAR F1 {:.4}",
            outcome.best_epoch,
            report.all_f1(),
            report.zar_f1()
        );
        reports.push(report);
    }
    Ok(reports)
}

pub fn train(exp: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(&exp.out_dir)?;
    write(&exp.out_dir.join("config.txt"), exp.kv.to_text())?;
    let data = load_data(exp)?;
    let reports = match exp.precision {
        Precision::F32 => train_seeds::<f32>(exp, &data)?,
        Precision::F64 => train_seeds::<f64>(exp, &data)?,
    };
    let multi = MultiSeedReport::new(reports)?;
    write(
        &exp.out_dir.join("validation_report.json"),
        pretty(&multi.to_json()),
    )?;
    println!("{}", render_table(&[(run_name(exp), multi)]));
    Ok(())
}

fn run_name(exp: &ExperimentConfig) -> String {
    exp.kv
        .raw("name")
        .map(str::to_string)
        .unwrap_or_else(|| match exp.spec.mode {
            StreamMode::Baseline => "Baseline".into(),
            StreamMode::Baseline2x => "Baseline (2x)".into(),
            StreamMode::Cda => "CDA".into(),
            StreamMode::Masking => format!("Masking ({})", exp.spec.mask.tagset),
        })
}

fn predictions_json(p: &[Vec<SlotPrediction>]) -> Value {
    serde_json::to_value(p).expect("predictions serialize")
}

fn eval_with<F: Scalar>(
    exp: &ExperimentConfig,
    corpus: &[Sentence],
    ensemble: bool,
    against: Option<&Path>,
) -> Result<()> {
    let mlm = build_mlm(&exp.kv, &exp.out_dir)?;
    let models = exp
        .spec
        .train
        .seeds
        .iter()
        .map(|&s| {
            let path = exp.seed_dir(s).join("model.ckpt");
            if !path.is_file() {
                return Err(data_error(format!(
                    "{}: no checkpoint (run train first)",
                    path.display()
                )));
            }
            Ok(load_checkpoint::<F>(&path)?)
        })
        .collect::<Result<Vec<ZarModel<F>>>>()?;
    let enc = CorpusEncoding::new(&mlm, corpus)?;
    let grids: Vec<_> = models
        .iter()
        .map(|m| score_corpus(m, &enc, corpus))
        .collect::<zarkit::Result<Vec<_>>>()?;
    let reports = models
        .iter()
        .zip(&grids)
        .map(|(m, g)| evaluate(g, corpus, &m.config().thresholds))
        .collect::<zarkit::Result<Vec<_>>>()?;
    let multi = MultiSeedReport::new(reports)?;
    write(&exp.out_dir.join("report.json"), pretty(&multi.to_json()))?;
    let mut rows = vec![(run_name(exp), multi)];
    let mut system = decode_corpus(&grids[0], &models[0].config().thresholds);

    if ensemble {
        if models.len() < 2 {
            return Err(config_error("--ensemble needs at least two seeds"));
        }
        let validation = read_corpus(&exp.validation_path)?;
        let val_enc = CorpusEncoding::new(&mlm, &validation)?;
        let mean_grids = |enc: &CorpusEncoding, sentences: &[Sentence]| -> Result<Vec<_>> {
            let per_model = models
                .iter()
                .map(|m| score_corpus(m, enc, sentences))
                .collect::<zarkit::Result<Vec<_>>>()?;
            (0..sentences.len())
                .map(|n| {
                    let cells: Vec<_> = per_model.iter().map(|g| g[n].clone()).collect();
                    Ok(average_grids(&cells)?)
                })
                .collect()
        };
        let thresholds = tune_thresholds(&mean_grids(&val_enc, &validation)?, &validation)?;
        let ens = mean_grids(&enc, corpus)?;
        let report = evaluate(&ens, corpus, &thresholds)?;
        let mut v = report.to_json();
        v["thresholds"] = json!(thresholds.0);
        write(&exp.out_dir.join("ensemble_report.json"), pretty(&v))?;
        rows.push((
            format!("{} (ensemble)", run_name(exp)),
            MultiSeedReport::new(vec![report])?,
        ));
        system = decode_corpus(&ens, &thresholds);
    }
    write(
        &exp.out_dir.join("predictions.json"),
        pretty(&predictions_json(&system)),
    )?;

    if let Some(other) = against {
        let path = other.join("predictions.json");
        let text = fs::read_to_string(&path)
            .map_err(|e| data_error(format!("{}: {e}", path.display())))?;
        let theirs: Vec<Vec<SlotPrediction>> = serde_json::from_str(&text)?;
        let iterations = exp.kv.get_or("permutation.iterations", 10_000usize)?;
        let seed = exp.kv.get_or("permutation.seed", 0u64)?;
        let mut sig = serde_json::Map::new();
        for (name, metric) in [
            ("all", Metric::All),
            ("zar", Metric::Zar),
            ("dep", Metric::Dep),
        ] {
            let p = permutation_test(&system, &theirs, corpus, metric, iterations, seed)?;
            sig.insert(format!("{name}.p"), json!(p));
        }
        sig.insert("iterations".into(), json!(iterations));
        sig.insert("against".into(), json!(other.display().to_string()));
        write(
            &exp.out_dir.join("significance.json"),
            pretty(&Value::Object(sig.clone())),
        )?;
        println!("{}", pretty(&Value::Object(sig)));
    }
    println!("{}", render_table(&rows));
    Ok(())
}

pub fn eval(
    exp: &ExperimentConfig,
    split: &str,
    ensemble: bool,
    against: Option<&Path>,
) -> Result<()> {
    let path = match split {
        "validation" => exp.validation_path.clone(),
        "test" => exp
            .test_path
            .clone()
            .ok_or_else(|| config_error("eval --split test needs test_path"))?,
        other => return Err(config_error(format!("unknown split {other:?}"))),
    };
    let corpus = read_corpus(&path)?;
    match exp.precision {
        Precision::F32 => eval_with::<f32>(exp, &corpus, ensemble, against),
        Precision::F64 => eval_with::<f64>(exp, &corpus, ensemble, against),
    }
}

pub const SWEEP_HEADER: &str = "tagset,alpha,masked_fraction,seed,zar_f1,dep_f1,all_f1";
pub const SWEEP_ALPHAS: [f64; 6] = [0.1, 0.3, 0.5, 0.7, 0.9, 1.0];

#[derive(Debug, Clone)]
struct SweepRow {
    tagset: TagSet,
    alpha: f64,
    masked_fraction: f64,
    seed: u64,
    report: EvalReport,
}

fn sweep_job<F: Scalar>(
    exp: &ExperimentConfig,
    data: &Data,
    eval: (&[Sentence], &CorpusEncoding),
    job: &(TagSet, f64, u64),
) -> Result<SweepRow> {
    let (tagset, alpha, seed) = job.clone();
    let mut spec = exp.spec.with_seed(seed);
    spec.mode = StreamMode::Masking;
    spec.mask.alpha = alpha;
    spec.mask.tagset = tagset.clone();
    let outcome = train_model::<F>(&data.train, &data.validation, &data.mlm, &spec)?;
    let grids = score_corpus(&outcome.model, eval.1, eval.0)?;
    let report = evaluate(&grids, eval.0, &outcome.thresholds)?;
    info!(
        "sweep {tagset} alpha {alpha} seed {seed}: ZAR F1 {:.4}",
        report.zar_f1()
    );
    Ok(SweepRow {
        tagset,
        alpha,
        masked_fraction: outcome.log.first().map_or(0.0, |r| r.masked_fraction),
        seed,
        report,
    })
}

/// Every tagset × α × seed masking run, scored on the test split (or the
/// validation split without one), written to `out_dir/sweep.csv`.
pub fn sweep(exp: &ExperimentConfig) -> Result<()> {
    let kv = &exp.kv;
    let alphas = kv
        .get_list::<f64>("sweep.alphas")?
        .unwrap_or_else(|| SWEEP_ALPHAS.to_vec());
    let tagsets = match kv.raw("sweep.tagsets") {
        Some(list) => list
            .split(';')
            .map(str::parse)
            .collect::<zarkit::Result<Vec<TagSet>>>()?,
        None => TagSet::sweep_family(),
    };
    let workers: usize = kv.get_or("sweep.workers", rayon::current_num_threads())?;
    if workers == 0 {
        return Err(config_error("sweep.workers must be at least 1"));
    }
    fs::create_dir_all(&exp.out_dir)?;
    write(&exp.out_dir.join("config.txt"), kv.to_text())?;
    let data = load_data(exp)?;
    let eval_corpus = match &exp.test_path {
        Some(p) => read_corpus(p)?,
        None => data.validation.clone(),
    };
    let eval_enc = CorpusEncoding::new(&data.mlm, &eval_corpus)?;
    let jobs: Vec<(TagSet, f64, u64)> = tagsets
        .iter()
        .flat_map(|t| {
            alphas
                .iter()
                .flat_map(move |&a| exp.spec.train.seeds.iter().map(move |&s| (t.clone(), a, s)))
        })
        .collect();
    info!("sweep of {} runs on {workers} workers", jobs.len());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()?;
    let eval = (&eval_corpus[..], &eval_enc);
    let rows: Vec<SweepRow> = pool.install(|| {
        jobs.par_iter()
            .map(|job| match exp.precision {
                Precision::F32 => sweep_job::<f32>(exp, &data, eval, job),
                Precision::F64 => sweep_job::<f64>(exp, &data, eval, job),
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_HEADER.split(','))?;
    for r in &rows {
        w.write_record([
            r.tagset.to_string(),
            r.alpha.to_string(),
            format!("{:.6}", r.masked_fraction),
            r.seed.to_string(),
            format!("{:.6}", r.report.zar_f1()),
            format!("{:.6}", r.report.dep_f1()),
            format!("{:.6}", r.report.all_f1()),
        ])?;
    }
    let csv = String::from_utf8(w.into_inner()?)?;
    write(&exp.out_dir.join("sweep.csv"), &csv)?;
    println!("{}", plot::sweep_ascii(&plot::parse_sweep(&csv)?));
    Ok(())
}

/// Renders `NAME=report.json` inputs as a table and a sweep CSV as a plot.
pub fn report(inputs: &[String], sweep_csv: Option<&Path>, out_dir: Option<&Path>) -> Result<()> {
    if inputs.is_empty() && sweep_csv.is_none() {
        return Err(config_error(
            "report needs --input NAME=PATH or --sweep PATH",
        ));
    }
    let mut rows = Vec::new();
    for input in inputs {
        let (name, path) = input
            .split_once('=')
            .ok_or_else(|| config_error(format!("--input {input:?} is not NAME=PATH")))?;
        let text = fs::read_to_string(path).map_err(|e| data_error(format!("{path}: {e}")))?;
        let v: Value =
            serde_json::from_str(&text).map_err(|e| data_error(format!("{path}: {e}")))?;
        let rep = if v.get("runs").is_some() {
            MultiSeedReport::from_json(&v)?
        } else {
            MultiSeedReport::new(vec![EvalReport::from_json(&v)?])?
        };
        rows.push((name.to_string(), rep));
    }
    let mut text = String::new();
    if !rows.is_empty() {
        text.push_str(&render_table(&rows));
    }
    let mut svg = None;
    if let Some(path) = sweep_csv {
        let csv =
            fs::read_to_string(path).map_err(|e| data_error(format!("{}: {e}", path.display())))?;
        let points = plot::parse_sweep(&csv)?;
        text.push_str(&plot::sweep_ascii(&points));
        svg = Some(plot::sweep_svg(&points));
    }
    print!("{text}");
    if let Some(dir) = out_dir {
        write(&dir.join("table.txt"), &text)?;
        if let Some(svg) = svg {
            write(&dir.join("sweep.svg"), svg)?;
        }
    }
    Ok(())
}
