mod common;

use rand::Rng;
use zarkit::augment::{StreamMode, TagSet};
use zarkit::corpus::{Case, Sentence};
use zarkit::train_eval::{
    count_predictions, ensemble_scores, evaluate, f1, permutation_test, score_sentence,
    threshold_grid, train_model, tune_thresholds, CorpusEncoding, EvalReport, Metric,
    MultiSeedReport,
};
use zarkit::zar_model::{checkpoint_bytes, ScoreGrid, SlotPrediction, Thresholds};
use zarkit::Error;

fn random_grid(rng: &mut impl Rng, rows: usize, cols: usize) -> ScoreGrid<f64> {
    let columns = (0..cols)
        .map(|_| {
            (0..rows)
                .map(|_| {
                    let raw: [f64; 4] = std::array::from_fn(|_| rng.gen::<f64>().powi(3));
                    let z: f64 = raw.iter().sum();
                    raw.map(|v| v / z)
                })
                .collect()
        })
        .collect();
    ScoreGrid::from_columns(rows, columns).unwrap()
}

fn random_predictions(rng: &mut impl Rng, corpus: &[Sentence]) -> Vec<Vec<SlotPrediction>> {
    corpus
        .iter()
        .map(|s| {
            (0..s.predicates().len())
                .map(|_| {
                    SlotPrediction(std::array::from_fn(|_| {
                        rng.gen_bool(0.7).then(|| rng.gen_range(1..=s.len()))
                    }))
                })
                .collect()
        })
        .collect()
}

fn gold_predictions(corpus: &[Sentence]) -> Vec<Vec<SlotPrediction>> {
    corpus
        .iter()
        .map(|s| {
            (0..s.predicates().len())
                .map(|j| {
                    SlotPrediction(
                        Case::ALL.map(|c| s.annotation(j, c).and_then(|a| a.target.position())),
                    )
                })
                .collect()
        })
        .collect()
}

/// Per case, scan the grid through full evaluations; first maximum wins.
fn brute_force_thresholds(grids: &[ScoreGrid<f64>], corpus: &[Sentence]) -> Thresholds {
    let mut best = Thresholds::uniform(0.0);
    for case in Case::ALL {
        let mut top = f64::NEG_INFINITY;
        for theta in threshold_grid() {
            let f = evaluate(grids, corpus, &Thresholds::uniform(theta))
                .unwrap()
                .counts
                .case(case)
                .f1();
            if f > top {
                top = f;
                best.set(case, theta);
            }
        }
    }
    best
}

#[test]
fn f1_identity_holds_on_random_reports() {
    let corpus = common::split(0, 200);
    let mut rng = common::rng(4);
    for _ in 0..50 {
        let report = EvalReport::new(
            count_predictions(&corpus, &random_predictions(&mut rng, &corpus)).unwrap(),
        );
        for (name, c) in report.buckets() {
            assert!(
                (c.f1() - f1(c.precision(), c.recall())).abs() < 1e-12,
                "{name}"
            );
        }
        let m = report.metrics();
        for (k, v) in &m {
            if let Some(stem) = k.strip_suffix(".f1") {
                let (p, r) = (m[&format!("{stem}.p")], m[&format!("{stem}.r")]);
                assert!((v - f1(p, r)).abs() < 1e-12, "{k}");
            }
        }
        assert_eq!(EvalReport::from_json(&report.to_json()).unwrap(), report);
    }
}

#[test]
fn perfect_predictions_score_one() {
    let corpus = common::split(0, 100);
    let r = EvalReport::new(count_predictions(&corpus, &gold_predictions(&corpus)).unwrap());
    assert_eq!((r.all_f1(), r.zar_f1(), r.dep_f1()), (1.0, 1.0, 1.0));
}

#[test]
fn multi_seed_sd_is_sample_sd() {
    let corpus = common::split(0, 60);
    let mut rng = common::rng(9);
    let runs: Vec<EvalReport> = (0..4)
        .map(|_| {
            EvalReport::new(
                count_predictions(&corpus, &random_predictions(&mut rng, &corpus)).unwrap(),
            )
        })
        .collect();
    let xs: Vec<f64> = runs.iter().map(EvalReport::zar_f1).collect();
    let mean = xs.iter().sum::<f64>() / 4.0;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 3.0).sqrt();
    let m = MultiSeedReport::new(runs).unwrap();
    assert!((m.mean("zar.all.f1") - mean).abs() < 1e-12);
    assert!((m.sd("zar.all.f1") - sd).abs() < 1e-12);
    assert_eq!(
        MultiSeedReport::from_json(&m.to_json()).unwrap().runs,
        m.runs
    );
    assert!(matches!(
        MultiSeedReport::new(Vec::new()),
        Err(Error::Empty(_))
    ));
}

#[test]
fn confident_correct_scores_tune_to_zero() {
    let corpus = common::split(0, 40);
    let grids: Vec<ScoreGrid<f64>> = corpus
        .iter()
        .map(|s| {
            let columns = (0..s.predicates().len())
                .map(|j| {
                    (1..=s.len())
                        .map(|i| {
                            let hit = Case::ALL.into_iter().find(|&c| {
                                s.annotation(j, c).and_then(|a| a.target.position()) == Some(i)
                            });
                            match hit {
                                Some(c) => {
                                    let mut p = [0.0, 0.0, 0.0, 0.4];
                                    p[c.index()] = 0.6;
                                    p
                                }
                                None => [0.0, 0.0, 0.0, 1.0],
                            }
                        })
                        .collect()
                })
                .collect();
            ScoreGrid::from_columns(s.len(), columns).unwrap()
        })
        .collect();
    assert_eq!(
        tune_thresholds(&grids, &corpus).unwrap(),
        Thresholds::uniform(0.0)
    );
    assert_eq!(
        evaluate(&grids, &corpus, &Thresholds::uniform(0.0))
            .unwrap()
            .all_f1(),
        1.0
    );
}

#[test]
fn hopeless_scores_tune_to_zero() {
    // Every slot's winner is a position no gold argument uses.
    let corpus = common::sentences(
        "1\ta\tNOUN\t_\t_\n2\tga\tPARTICLE\t_\t_\n3\tb\tNOUN\t_\t_\n4\tv\tVERB\tPRED\tNOM=1:DEP;ACC=3:DEP\n",
    );
    let cell = |l: usize| {
        let mut p = [0.1; 4];
        p[l] = 0.7;
        p
    };
    let column = vec![cell(3), cell(0), cell(3), cell(3)];
    let grid = ScoreGrid::from_columns(4, vec![column]).unwrap();
    assert_eq!(
        tune_thresholds(&[grid], &corpus).unwrap(),
        Thresholds::uniform(0.0)
    );
}

#[test]
fn tuning_matches_brute_force_scan() {
    let corpus = common::split(300, 30);
    let mut rng = common::rng(12);
    for _ in 0..20 {
        let grids: Vec<ScoreGrid<f64>> = corpus
            .iter()
            .map(|s| random_grid(&mut rng, s.len(), s.predicates().len()))
            .collect();
        assert_eq!(
            tune_thresholds(&grids, &corpus).unwrap(),
            brute_force_thresholds(&grids, &corpus)
        );
    }
    assert!(matches!(
        tune_thresholds::<f64>(&[], &[]),
        Err(Error::Empty(_))
    ));
}

#[test]
fn ensemble_is_the_mean_distribution() {
    let mlm = common::desk_mlm(200, 1);
    let corpus = common::split(0, 5);
    let enc = CorpusEncoding::new(&mlm, &corpus).unwrap();
    let mut rng = common::rng(2);
    let a = common::random_model(&mut rng, 2, 6, mlm.hidden_size());
    let b = common::random_model(&mut rng, 2, 6, mlm.hidden_size());
    for (n, s) in corpus.iter().enumerate() {
        let e = enc.get(n);
        let (ga, gb) = (
            score_sentence(&a, e, s).unwrap(),
            score_sentence(&b, e, s).unwrap(),
        );
        let same = ensemble_scores(&[&a, &a], e, s).unwrap();
        for (x, y) in same.cells().iter().zip(ga.cells()) {
            for l in 0..4 {
                assert!((x[l] - y[l]).abs() < 1e-15);
            }
        }
        let mixed = ensemble_scores(&[&a, &b], e, s).unwrap();
        for ((m, x), y) in mixed.cells().iter().zip(ga.cells()).zip(gb.cells()) {
            for l in 0..4 {
                assert!((m[l] - (x[l] + y[l]) / 2.0).abs() < 1e-15);
            }
        }
    }
    let s = &corpus[0];
    assert!(matches!(
        ensemble_scores(&[&a], enc.get(0), s),
        Err(Error::Config(_))
    ));
}

#[test]
fn permutation_test_is_deterministic_and_bounded() {
    let corpus = common::split(0, 80);
    let mut rng = common::rng(21);
    let a = random_predictions(&mut rng, &corpus);
    let b = random_predictions(&mut rng, &corpus);
    for metric in [Metric::All, Metric::Zar, Metric::Dep] {
        let p1 = permutation_test(&a, &b, &corpus, metric, 2000, 5).unwrap();
        let p2 = permutation_test(&a, &b, &corpus, metric, 2000, 5).unwrap();
        assert_eq!(p1, p2);
        assert!(p1 > 0.0 && p1 <= 1.0);
    }
    assert!(matches!(
        permutation_test(&a, &b, &corpus, Metric::All, 999, 0),
        Err(Error::Config(_))
    ));
    assert!(permutation_test(&a, &b[1..], &corpus, Metric::All, 1000, 0).is_err());
}

#[test]
fn training_is_reproducible_and_logs_passes() {
    let mlm = common::desk_mlm(300, 1);
    let train = common::split(0, 40);
    let val = common::split(50_000, 20);
    let spec = common::small_spec(StreamMode::Masking, TagSet::all_except(&["VERB"]), 3, 4);
    let run = || train_model::<f64>(&train, &val, &mlm, &spec).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(
        checkpoint_bytes(&a.model).unwrap(),
        checkpoint_bytes(&b.model).unwrap()
    );
    assert_eq!(a.thresholds, b.thresholds);
    assert_eq!(a.model.config().thresholds, a.thresholds);
    let originals: usize = train.iter().map(|s| s.predicates().len()).sum();
    for r in &a.log {
        assert_eq!(r.instances, 2 * originals);
        assert_eq!(r.augmented, originals);
        assert_eq!(r.encode_passes, r.instances as u64);
        assert_eq!(r.predict_passes, 0);
        assert!(r.masked_fraction > 0.0 && r.masked_fraction < 1.0);
        assert!(r.max_grad_norm.is_finite() && r.loss.is_finite());
    }
    let other = train_model::<f64>(&train, &val, &mlm, &spec.with_seed(5)).unwrap();
    assert_ne!(
        checkpoint_bytes(&a.model).unwrap(),
        checkpoint_bytes(&other.model).unwrap()
    );
}

#[test]
fn empty_splits_are_rejected() {
    let mlm = common::desk_mlm(100, 1);
    let spec = common::small_spec(StreamMode::Baseline, TagSet::all(), 1, 1);
    let val = common::split(0, 3);
    assert!(matches!(
        train_model::<f64>(&[], &val, &mlm, &spec),
        Err(Error::Empty(_))
    ));
    assert!(matches!(
        train_model::<f64>(&val, &[], &mlm, &spec),
        Err(Error::Empty(_))
    ));
}
