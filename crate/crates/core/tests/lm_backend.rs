use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use zarkit::augment::MaskPlan;
use zarkit::corpus::{parse_corpus, Sentence, MASK_SYMBOL};
use zarkit::lm_backend::{
    CdaFiller, ExternalBackend, FillStrategy, Granularity, Mlm, MockBackend, MockDistribution,
    MockRule, MockSpec, Selector,
};
use zarkit::Error;

fn sentence(text: &str) -> Sentence {
    parse_corpus(text).unwrap().remove(0)
}

fn plan(s: &Sentence, masked: &[usize]) -> MaskPlan {
    let mut p = MaskPlan::empty(s, 0);
    for &i in masked {
        p.positions[i - 1] = true;
    }
    p
}

fn spec(vocab: &[&str]) -> MockSpec {
    MockSpec {
        vocab: vocab.iter().map(|s| s.to_string()).collect(),
        hidden_size: 2,
        max_len: 512,
        hidden: HashMap::new(),
        subwords: HashMap::new(),
        rules: Vec::new(),
        default: MockDistribution::Uniform,
    }
}

const THREE: &str = "1\ta\tNOUN\t_\t_\n2\tb\tNOUN\t_\t_\n3\tv\tVERB\tPRED\tNOM=1:DEP\n";

#[test]
fn encoder_rows_come_from_head_subwords() {
    let mut s = spec(&["ab", "##c", "##d", "v", "x"]);
    s.subwords
        .insert("abcd".into(), vec!["ab".into(), "##c".into(), "##d".into()]);
    s.hidden.insert("ab".into(), vec![1.0, 2.0]);
    s.hidden.insert("##c".into(), vec![9.0, 9.0]);
    s.hidden.insert("##d".into(), vec![8.0, 8.0]);
    s.hidden.insert("v".into(), vec![3.0, 4.0]);
    let mlm = Mlm::new(MockBackend::new(s).unwrap());
    let toks: Vec<String> = ["abcd", "v", "x"].iter().map(|t| t.to_string()).collect();
    let e = mlm.encode(&toks).unwrap();
    assert_eq!((e.rows(), e.dim()), (3, 2));
    assert_eq!(e.row(0), &[1.0, 2.0]);
    assert_eq!(e.row(1), &[3.0, 4.0]);
    assert_eq!(e.row(2), &[0.0, 0.0]);
    assert_eq!(mlm.passes().encode, 1);
}

#[test]
fn subwords_count_towards_length_limit() {
    let mut s = spec(&["p", "##q"]);
    s.max_len = 3;
    s.subwords
        .insert("pq".into(), vec!["p".into(), "##q".into()]);
    let mlm = Mlm::new(MockBackend::new(s).unwrap());
    let ok: Vec<String> = vec!["pq".into(), "p".into()];
    let long: Vec<String> = vec!["pq".into(), "pq".into()];
    assert!(mlm.encode(&ok).is_ok());
    assert!(matches!(
        mlm.encode(&long),
        Err(Error::SequenceTooLong { len: 4, max: 3 })
    ));
}

#[test]
fn distributions_are_normalized() {
    let mut s = spec(&["a", "b", "v"]);
    // [a, b, v, [UNK], [MASK]]
    s.default = MockDistribution::Probs {
        probs: vec![2.0, 1.0, 1.0, 0.0, 0.0],
    };
    s.rules.push(MockRule {
        left: Some("^".into()),
        right: None,
        dist: MockDistribution::Spike {
            token: "b".into(),
            mass: 0.6,
        },
    });
    let mlm = Mlm::new(MockBackend::new(s).unwrap());
    let toks: Vec<String> = vec![MASK_SYMBOL.into(), "a".into(), MASK_SYMBOL.into()];
    let d = mlm.predict_distributions(&toks).unwrap();
    assert_eq!(d.len(), 2);
    assert_eq!(d[0].position, 1);
    assert_eq!(d[1].position, 3);
    assert!((d[0].probs[1] - 0.6).abs() < 1e-15);
    assert!((d[0].probs[0] - 0.1).abs() < 1e-15);
    assert_eq!(d[1].probs, vec![0.5, 0.25, 0.25, 0.0, 0.0]);
    assert_eq!(mlm.passes().predict, 1);
}

#[test]
fn spike_with_unknown_token_is_rejected() {
    let mut s = spec(&["a"]);
    s.default = MockDistribution::Spike {
        token: "zz".into(),
        mass: 1.0,
    };
    assert!(matches!(MockBackend::new(s), Err(Error::Config(_))));
}

#[test]
fn unmasked_input_makes_no_call() {
    let mlm = Mlm::new(MockBackend::new(spec(&["a", "b", "v"])).unwrap());
    let s = sentence(THREE);
    let mut rng = rand::rngs::mock::StepRng::new(0, 1);
    let out = mlm
        .fill_masks(&s, &plan(&s, &[]), FillStrategy::SINGLE_ARGMAX, &mut rng)
        .unwrap();
    assert_eq!(out, s.surfaces());
    assert_eq!(mlm.passes().total(), 0);
}

#[test]
fn fills_only_touch_masked_positions() {
    let mut s = spec(&["a", "b", "v", "z"]);
    s.default = MockDistribution::Spike {
        token: "z".into(),
        mass: 1.0,
    };
    let mlm = Mlm::new(MockBackend::new(s).unwrap());
    let sent = sentence(THREE);
    for strategy in [FillStrategy::MULTI_ARGMAX, FillStrategy::SINGLE_ARGMAX] {
        let filler = CdaFiller {
            mlm: &mlm,
            strategy,
        };
        let out = filler.fill(&sent, &plan(&sent, &[2]), 0).unwrap();
        assert_eq!(out, vec!["a", "z", "v"]);
    }
}

#[test]
fn sampled_fills_depend_on_seed() {
    let vocab: Vec<String> = (0..50).map(|i| format!("w{i}")).collect();
    let refs: Vec<&str> = vocab.iter().map(String::as_str).collect();
    let mlm = Mlm::new(MockBackend::new(spec(&refs)).unwrap());
    let sent = sentence(THREE);
    let p = plan(&sent, &[1, 2]);
    let filler = CdaFiller {
        mlm: &mlm,
        strategy: FillStrategy {
            granularity: Granularity::Multi,
            selector: Selector::Sample,
        },
    };
    let fills: Vec<Vec<String>> = (0..8)
        .map(|seed| filler.fill(&sent, &p, seed).unwrap())
        .collect();
    assert!(fills.windows(2).any(|w| w[0] != w[1]));
    for (seed, f) in fills.iter().enumerate() {
        assert_eq!(&filler.fill(&sent, &p, seed as u64).unwrap(), f);
        assert_eq!(f[2], "v");
    }
}

fn python_backend(dir: &Path, vocab: &[&str]) -> Option<Mlm> {
    let script = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/echo_mlm.py");
    let vocab_path = dir.join("vocab.txt");
    let mut f = std::fs::File::create(&vocab_path).unwrap();
    for v in vocab {
        writeln!(f, "{v}").unwrap();
    }
    // Pieces plus [UNK] and [MASK].
    let size = (vocab.len() + 2).to_string();
    let args = vec![script.to_string_lossy().into_owned(), size];
    match ExternalBackend::spawn("python3", &args, &vocab_path, 2, 64) {
        Ok(b) => Some(Mlm::new(b)),
        Err(e) => {
            eprintln!("python3 unavailable, skipping: {e}");
            None
        }
    }
}

#[test]
fn external_adapter_speaks_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let Some(mlm) = python_backend(dir.path(), &["a", "b", "v"]) else {
        return;
    };
    let toks: Vec<String> = vec!["b".into(), MASK_SYMBOL.into(), "v".into()];
    let e = mlm.encode(&toks).unwrap();
    assert_eq!(e.row(0), &[1.0, 0.0]);
    assert_eq!(e.row(1), &[mlm.vocab().mask_id() as f64, 1.0]);
    assert_eq!(e.row(2), &[2.0, 2.0]);
    let d = mlm.predict_distributions(&toks).unwrap();
    assert_eq!(d.len(), 1);
    assert!((d[0].probs[0] - 10.0 / 14.0).abs() < 1e-12);
    let sent = sentence(THREE);
    let filler = CdaFiller {
        mlm: &mlm,
        strategy: FillStrategy::MULTI_ARGMAX,
    };
    assert_eq!(
        filler.fill(&sent, &plan(&sent, &[1, 2]), 0).unwrap(),
        vec!["a", "a", "v"]
    );
}
