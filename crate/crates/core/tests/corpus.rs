use proptest::prelude::*;
use zarkit::corpus::{
    build_label_grid, corpus_stats, parse_corpus, pos, serialize_corpus, AnaphoraType, ArgLabel,
    ArgTarget, ArgumentAnnotation, Case, Predicate, Sentence, Token,
};
use zarkit::synthgen::{generate_corpus, oracle_check, GrammarConfig};

const TAGS: [&str; 5] = [pos::NOUN, pos::VERB, pos::PARTICLE, pos::SYMBOL, pos::ADJ];

/// Random valid sentence: surfaces, tags, predicates and annotations drawn
/// from `picks`, with collisions on (predicate, case) dropped.
fn build(len: usize, picks: &[(u8, u8, u8, u8)], n_preds: usize) -> Sentence {
    let tokens: Vec<Token> = (0..len)
        .map(|i| Token {
            index: i + 1,
            surface: format!("t{}", picks.get(i).map_or(0, |p| p.0)),
            pos: TAGS[picks.get(i).map_or(0, |p| p.1 as usize) % TAGS.len()].to_string(),
        })
        .collect();
    let n_preds = n_preds.min(len);
    let predicates: Vec<Predicate> = (0..n_preds)
        .map(|j| Predicate {
            token_index: len - j,
        })
        .collect();
    let mut annotations: Vec<ArgumentAnnotation> = Vec::new();
    if n_preds > 0 {
        for &(a, b, c, d) in picks {
            let predicate = a as usize % n_preds;
            let case = Case::ALL[b as usize % 3];
            if annotations
                .iter()
                .any(|x| x.predicate == predicate && x.case == case)
            {
                continue;
            }
            let target = if c % 7 == 0 {
                ArgTarget::Outside
            } else {
                ArgTarget::Token(1 + c as usize % len)
            };
            annotations.push(ArgumentAnnotation {
                predicate,
                case,
                target,
                anaphora_type: AnaphoraType::ALL[d as usize % 2],
            });
        }
    }
    Sentence::new(
        format!("d{}", len % 3),
        format!("s{len}"),
        tokens,
        predicates,
        annotations,
    )
    .unwrap()
}

proptest! {
    #[test]
    fn hand_built_sentences_round_trip(
        shapes in prop::collection::vec((1usize..12, prop::collection::vec(any::<(u8, u8, u8, u8)>(), 0..12), 0usize..4), 0..6)
    ) {
        let corpus: Vec<Sentence> = shapes.iter().map(|(len, picks, p)| build(*len, picks, *p)).collect();
        let text = serialize_corpus(&corpus).unwrap();
        let back = parse_corpus(&text).unwrap();
        prop_assert_eq!(&back, &corpus);
        prop_assert_eq!(serialize_corpus(&back).unwrap(), text);
    }
}

#[test]
fn synthetic_zar_share_tracks_drop_rate() {
    for rate in [0.2, 0.5, 0.8] {
        let g = GrammarConfig {
            zero_pronoun_rate: rate,
            seed: 3,
            ..Default::default()
        };
        let corpus = generate_corpus(&g, 10_000).unwrap();
        let (mut zar, mut total) = (0usize, 0usize);
        for s in &corpus {
            for j in 1..s.predicates().len() {
                let a = s
                    .annotation(j, Case::Nom)
                    .expect("every clause has a subject");
                total += 1;
                if a.anaphora_type == AnaphoraType::Zar {
                    zar += 1;
                    assert_eq!(a.target, s.annotation(0, Case::Nom).unwrap().target);
                }
            }
        }
        let share = zar as f64 / total as f64;
        let tol = 4.0 * (rate * (1.0 - rate) / total as f64).sqrt();
        assert!(
            (share - rate).abs() < tol,
            "rate {rate}: share {share} over {total}"
        );
    }
}

#[test]
fn generated_sentences_satisfy_the_grammar_oracle() {
    let corpus = generate_corpus(&GrammarConfig::default(), 2000).unwrap();
    assert!(corpus.iter().all(oracle_check));
    let stats = corpus_stats(&corpus);
    assert_eq!(stats.sentences, 2000);
    let annotated: usize = stats.counts.values().sum();
    assert_eq!(
        annotated,
        corpus.iter().map(|s| s.annotations().len()).sum::<usize>()
    );
    assert_eq!(stats.count(Case::Acc, AnaphoraType::Zar), 0);
    let ratios: f64 = stats.pos_histogram.values().map(|p| p.ratio).sum();
    assert!((ratios - 1.0).abs() < 1e-12);
}

#[test]
fn label_grid_marks_each_annotated_slot_once() {
    for s in generate_corpus(&GrammarConfig::default(), 300).unwrap() {
        let grid = build_label_grid(&s);
        for j in 0..s.predicates().len() {
            for case in Case::ALL {
                let hits = grid
                    .column(j)
                    .iter()
                    .filter(|&&l| l == case.label())
                    .count();
                let expected = s
                    .annotation(j, case)
                    .and_then(|a| a.target.position())
                    .is_some() as usize;
                assert_eq!(hits, expected);
            }
            let labels = grid.column(j);
            assert_eq!(labels.len(), s.len());
            assert!(labels.iter().filter(|&&l| l != ArgLabel::None).count() <= 3);
        }
    }
}
