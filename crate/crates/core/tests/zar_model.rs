mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use zarkit::corpus::{ArgLabel, Case};
use zarkit::lm_backend::EncoderOutput;
use zarkit::zar_model::{build_features, decode_arguments, ScoreGrid, SlotPrediction, Thresholds};

#[test]
fn stack_matches_scalar_oracle() {
    let mut r = rng(11);
    for _ in 0..5 {
        let model = random_model(&mut r, 3, 3, 5);
        let x = random_features(&mut r, 4, 5, 2);
        let got = model.encode_birnn(&x).unwrap();
        let want = oracle_states(&model, &x);
        let diff = want
            .iter()
            .flatten()
            .zip(&got)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-10, "max diff {diff}");
    }
}

#[test]
fn single_layer_has_no_residual() {
    let mut r = rng(3);
    let model = random_model(&mut r, 1, 4, 4);
    let x = random_features(&mut r, 6, 4, 1);
    let got = model.encode_birnn(&x).unwrap();
    assert_eq!(got.len(), 6 * 4);
    let want: Vec<f64> = oracle_states(&model, &x).concat();
    assert!(got.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-12));
}

#[test]
fn zeroed_second_layer_is_identity() {
    let mut r = rng(5);
    let one = random_model(&mut r, 1, 4, 3);
    let x = random_features(&mut r, 5, 3, 0);
    let mut cfg = one.config().clone();
    cfg.layers = 2;
    let mut two = zarkit::zar_model::ZarModel::<f64>::new(cfg, 3).unwrap();
    for name in [
        "gru1.w_ih",
        "gru1.w_hh",
        "gru1.b_ih",
        "gru1.b_hh",
        "out.w",
        "out.b",
    ] {
        two.tensor_mut(name)
            .unwrap()
            .copy_from_slice(one.tensor(name).unwrap());
    }
    for name in ["gru2.w_ih", "gru2.w_hh", "gru2.b_ih", "gru2.b_hh"] {
        two.tensor_mut(name)
            .unwrap()
            .iter_mut()
            .for_each(|v| *v = 0.0);
    }
    // With zero weights the update gate is 0.5 and the candidate tanh(0) = 0,
    // so every layer-2 cell output stays at the zero initial state.
    assert_eq!(two.encode_birnn(&x).unwrap(), one.encode_birnn(&x).unwrap());
}

#[test]
fn zero_output_layer_is_uniform() {
    let mut r = rng(8);
    let mut model = random_model(&mut r, 2, 3, 3);
    model
        .tensor_mut("out.w")
        .unwrap()
        .iter_mut()
        .for_each(|v| *v = 0.0);
    model
        .tensor_mut("out.b")
        .unwrap()
        .iter_mut()
        .for_each(|v| *v = 0.0);
    let x = random_features(&mut r, 4, 3, 0);
    for p in model.predict(&x).unwrap() {
        assert_eq!(p, [0.25; 4]);
    }
}

#[test]
fn scores_match_exp_normalise_oracle() {
    let mut r = rng(21);
    let model = random_model(&mut r, 2, 5, 3);
    let states: Vec<Vec<f64>> = (0..7)
        .map(|_| (0..5).map(|_| r.gen_range(-3.0..3.0)).collect())
        .collect();
    let got = model.score_states(&states.concat(), 7).unwrap();
    let want = oracle_scores(&model, &states);
    for (g, w) in got.iter().zip(&want) {
        assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        for l in 0..4 {
            assert!((g[l] - w[l]).abs() < 1e-12);
        }
    }
}

#[test]
fn non_finite_states_are_rejected() {
    let mut r = rng(1);
    let model = random_model(&mut r, 1, 2, 2);
    assert!(model.score_states(&[f64::NAN, 0.0], 1).is_err());
    assert!(model.score_states(&[0.0], 1).is_err());
}

#[test]
fn gradients_match_finite_differences() {
    let mut r = rng(99);
    let model = random_model(&mut r, 3, 6, 8);
    let x = random_features(&mut r, 5, 8, 3);
    let labels = [
        ArgLabel::Nom,
        ArgLabel::None,
        ArgLabel::Acc,
        ArgLabel::None,
        ArgLabel::Dat,
    ];
    let (err, n) = max_gradient_error(&model, &x, &labels);
    assert!(n > 500);
    assert!(err < 1e-5, "relative error {err}");
}

#[test]
fn f32_forward_tracks_f64() {
    let mut r = rng(4);
    let model = random_model(&mut r, 3, 4, 4);
    let x = random_features(&mut r, 6, 4, 2);
    let p64 = model.predict(&x).unwrap();
    let m32 = model.cast::<f32>();
    let x32 = zarkit::zar_model::FeatureSequence::<f32>::from_rows(
        6,
        6,
        x.data().iter().map(|&v| v as f32).collect(),
    )
    .unwrap();
    let p32 = m32.predict(&x32).unwrap();
    for (a, b) in p64.iter().zip(&p32) {
        for l in 0..4 {
            assert!((a[l] - b[l] as f64).abs() < 1e-5);
        }
    }
}

fn brute_force_decode(grid: &ScoreGrid<f64>, th: &Thresholds) -> Vec<SlotPrediction> {
    let mut out = vec![SlotPrediction::default(); grid.cols()];
    for (j, slot) in out.iter_mut().enumerate() {
        for case in Case::ALL {
            let probs: Vec<f64> = (0..grid.rows())
                .map(|i| grid.get(i, j)[case.index()])
                .collect();
            let max = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let first = probs.iter().position(|&p| p == max).unwrap();
            slot.0[case.index()] = (max > th.0[case.index()]).then_some(first + 1);
        }
    }
    out
}

fn random_grid(r: &mut impl Rng, rows: usize, cols: usize) -> ScoreGrid<f64> {
    let columns = (0..cols)
        .map(|_| {
            (0..rows)
                .map(|_| {
                    // Coarse values make ties and exact threshold hits common.
                    let raw: [f64; 4] = std::array::from_fn(|_| r.gen_range(0..5) as f64);
                    let z: f64 = raw.iter().sum::<f64>().max(1.0);
                    if raw.iter().sum::<f64>() == 0.0 {
                        [0.25; 4]
                    } else {
                        raw.map(|v| v / z)
                    }
                })
                .collect()
        })
        .collect();
    ScoreGrid::from_columns(rows, columns).unwrap()
}

#[test]
fn decode_matches_brute_force() {
    let mut r = rng(1234);
    for _ in 0..1000 {
        let rows = r.gen_range(1..9);
        let cols = r.gen_range(1..4);
        let g = random_grid(&mut r, rows, cols);
        let th = Thresholds(std::array::from_fn(|_| r.gen_range(0..20) as f64 / 20.0));
        assert_eq!(decode_arguments(&g, &th), brute_force_decode(&g, &th));
    }
}

#[test]
fn threshold_only_toggles_fill() {
    let mut r = rng(77);
    for _ in 0..200 {
        let g = random_grid(&mut r, 6, 2);
        let open = decode_arguments(&g, &Thresholds::uniform(0.0));
        let th = Thresholds(std::array::from_fn(|_| r.gen_range(0.0..1.0)));
        for (a, b) in decode_arguments(&g, &th).iter().zip(&open) {
            for c in 0..3 {
                assert!(a.0[c].is_none() || a.0[c] == b.0[c]);
            }
        }
    }
}

proptest! {
    #[test]
    fn features_are_permutation_equivariant(
        rows in 2usize..8,
        seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        let dim = 3;
        let data: Vec<f64> = (0..rows * dim).map(|_| r.gen_range(-1.0..1.0)).collect();
        let enc = EncoderOutput::new(rows, dim, data.clone()).unwrap();
        let preds: Vec<usize> = vec![1, rows];
        let j = (seed % 2) as usize;
        let mut perm: Vec<usize> = (0..rows).collect();
        for i in (1..rows).rev() {
            perm.swap(i, r.gen_range(0..=i));
        }
        // perm[new] = old
        let pdata: Vec<f64> = perm.iter().flat_map(|&o| data[o * dim..(o + 1) * dim].to_vec()).collect();
        let penc = EncoderOutput::new(rows, dim, pdata).unwrap();
        let inv = |old: usize| perm.iter().position(|&o| o == old - 1).unwrap() + 1;
        let ppreds: Vec<usize> = preds.iter().map(|&p| inv(p)).collect();
        let a = build_features::<f64>(&enc, &preds, j).unwrap();
        let b = build_features::<f64>(&penc, &ppreds, j).unwrap();
        for (new, &old) in perm.iter().enumerate() {
            prop_assert_eq!(a.row(old), b.row(new));
        }
    }

    #[test]
    fn features_match_row_oracle(rows in 1usize..10, seed in any::<u64>()) {
        let mut r = rng(seed);
        let dim = 4;
        let data: Vec<f64> = (0..rows * dim).map(|_| r.gen_range(-1.0..1.0)).collect();
        let enc = EncoderOutput::new(rows, dim, data.clone()).unwrap();
        let mut preds: Vec<usize> = (1..=rows).filter(|_| r.gen_bool(0.4)).collect();
        if preds.is_empty() { preds.push(1); }
        let j = r.gen_range(0..preds.len());
        let f = build_features::<f64>(&enc, &preds, j).unwrap();
        for i in 0..rows {
            let mut want = data[i * dim..(i + 1) * dim].to_vec();
            want.push(if preds[j] == i + 1 { 1.0 } else { 0.0 });
            want.push(if preds.contains(&(i + 1)) { 1.0 } else { 0.0 });
            prop_assert_eq!(f.row(i), &want[..]);
        }
    }
}
