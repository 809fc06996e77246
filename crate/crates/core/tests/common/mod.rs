#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zarkit::augment::{MaskConfig, StreamMode, TagSet};
use zarkit::corpus::{parse_corpus, ArgLabel, Sentence};
use zarkit::lm_backend::{DeskConfig, DeskMlm, FillStrategy, Mlm};
use zarkit::synthgen::{generate_range, GrammarConfig};
use zarkit::train_eval::{Decay, LrSchedule, RunSpec, TrainConfig};
use zarkit::zar_model::{FeatureSequence, ModelConfig, ZarModel};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_features(
    rng: &mut ChaCha8Rng,
    rows: usize,
    d: usize,
    target: usize,
) -> FeatureSequence<f64> {
    let mut data = Vec::new();
    for i in 0..rows {
        for _ in 0..d {
            data.push(rng.gen_range(-1.0..1.0));
        }
        data.push(if i == target { 1.0 } else { 0.0 });
        data.push(if i == target || i == 0 { 1.0 } else { 0.0 });
    }
    FeatureSequence::from_rows(rows, d + 2, data).unwrap()
}

/// Model with every parameter (biases included) drawn from U(-0.5, 0.5).
pub fn random_model(rng: &mut ChaCha8Rng, layers: usize, hidden: usize, d: usize) -> ZarModel<f64> {
    let cfg = ModelConfig {
        layers,
        hidden,
        ..Default::default()
    };
    let mut m = ZarModel::<f64>::new(cfg, d).unwrap();
    for p in m.params_mut() {
        *p = rng.gen_range(-0.5..0.5);
    }
    m
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Step-by-step GRU stack written directly from the cell equations.
pub fn oracle_states(model: &ZarModel<f64>, x: &FeatureSequence<f64>) -> Vec<Vec<f64>> {
    let m = model.config().hidden;
    let n = x.rows();
    let mut h: Vec<Vec<f64>> = (0..n).map(|i| x.row(i).to_vec()).collect();
    for k in 1..=model.config().layers {
        let w_ih = model.tensor(&format!("gru{k}.w_ih")).unwrap();
        let w_hh = model.tensor(&format!("gru{k}.w_hh")).unwrap();
        let b_ih = model.tensor(&format!("gru{k}.b_ih")).unwrap();
        let b_hh = model.tensor(&format!("gru{k}.b_hh")).unwrap();
        let din = h[0].len();
        let order: Vec<usize> = if k % 2 == 1 {
            (0..n).collect()
        } else {
            (0..n).rev().collect()
        };
        let mut s = vec![vec![0.0; m]; n];
        let mut prev = vec![0.0; m];
        for &t in &order {
            let mut out = vec![0.0; m];
            for u in 0..m {
                let dot_i = |g: usize| -> f64 {
                    let row = g * m + u;
                    b_ih[row] + (0..din).map(|c| w_ih[row * din + c] * h[t][c]).sum::<f64>()
                };
                let dot_h = |g: usize| -> f64 {
                    let row = g * m + u;
                    b_hh[row] + (0..m).map(|c| w_hh[row * m + c] * prev[c]).sum::<f64>()
                };
                let r = sig(dot_i(0) + dot_h(0));
                let z = sig(dot_i(1) + dot_h(1));
                let cand = (dot_i(2) + r * dot_h(2)).tanh();
                out[u] = (1.0 - z) * cand + z * prev[u];
            }
            s[t] = out.clone();
            prev = out;
        }
        h = if k == 1 {
            s
        } else {
            h.iter()
                .zip(&s)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
                .collect()
        };
    }
    h
}

/// Explicit exp / normalise over the output layer.
pub fn oracle_scores(model: &ZarModel<f64>, states: &[Vec<f64>]) -> Vec<[f64; 4]> {
    let w = model.tensor("out.w").unwrap();
    let b = model.tensor("out.b").unwrap();
    let m = model.config().hidden;
    states
        .iter()
        .map(|h| {
            let logits: Vec<f64> = (0..4)
                .map(|l| b[l] + (0..m).map(|u| w[l * m + u] * h[u]).sum::<f64>())
                .collect();
            let e: Vec<f64> = logits.iter().map(|v| v.exp()).collect();
            let z: f64 = e.iter().sum();
            [e[0] / z, e[1] / z, e[2] / z, e[3] / z]
        })
        .collect()
}

pub fn mean_loss(model: &ZarModel<f64>, x: &FeatureSequence<f64>, labels: &[ArgLabel]) -> f64 {
    let p = model.predict(x).unwrap();
    p.iter()
        .zip(labels)
        .map(|(p, y)| -p[y.index()].ln())
        .sum::<f64>()
        / labels.len() as f64
}

/// Largest relative error between analytic and central-difference gradients
/// of the mean cross-entropy, over every parameter.
pub fn max_gradient_error(
    model: &ZarModel<f64>,
    x: &FeatureSequence<f64>,
    labels: &[ArgLabel],
) -> (f64, usize) {
    let mut grad = vec![0.0; model.params().len()];
    model
        .accumulate_gradient(x, labels, 1.0 / labels.len() as f64, &mut grad)
        .unwrap();
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut probe = model.clone();
    for i in 0..grad.len() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + h;
        let up = mean_loss(&probe, x, labels);
        probe.params_mut()[i] = orig - h;
        let down = mean_loss(&probe, x, labels);
        probe.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let denom = grad[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((grad[i] - numeric).abs() / denom);
    }
    (worst, grad.len())
}

pub fn sentences(text: &str) -> Vec<Sentence> {
    parse_corpus(text).unwrap()
}

/// Desk language model pretrained on `n` synthetic sentences drawn from an
/// index range disjoint from every split used in the tests.
pub fn desk_mlm(n: usize, epochs: usize) -> Mlm {
    let text: Vec<Vec<String>> = generate_range(&GrammarConfig::default(), 100_000, n)
        .unwrap()
        .iter()
        .map(Sentence::surfaces)
        .collect();
    let cfg = DeskConfig {
        epochs,
        ..Default::default()
    };
    Mlm::new(DeskMlm::train(&text, cfg).unwrap())
}

pub fn split(start: usize, n: usize) -> Vec<Sentence> {
    generate_range(&GrammarConfig::default(), start, n).unwrap()
}

/// Small network and short schedule for desk-scale runs.
pub fn small_spec(mode: StreamMode, tagset: TagSet, epochs: usize, seed: u64) -> RunSpec {
    RunSpec {
        mode,
        mask: MaskConfig::new(0.5, tagset, seed),
        model: ModelConfig {
            layers: 2,
            hidden: 24,
            seed,
            ..Default::default()
        },
        train: TrainConfig {
            epochs,
            patience: 10,
            schedule: LrSchedule {
                base: 3e-3,
                warmup: 100,
                decay: Decay::InverseSqrt,
            },
            seeds: vec![seed],
            ..Default::default()
        },
        fill: FillStrategy::MULTI_ARGMAX,
    }
}
