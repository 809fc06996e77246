use rayon::prelude::*;

use super::metrics::{count_predictions, EvalCounts, EvalReport};
use crate::corpus::{Case, Sentence};
use crate::error::{Error, Result};
use crate::lm_backend::{EncoderOutput, Mlm};
use crate::scalar::Scalar;
use crate::zar_model::{
    build_features, decode_arguments, ScoreGrid, SlotPrediction, Thresholds, ZarModel,
};

/// Frozen encoder outputs of a corpus, one per sentence.
#[derive(Debug, Clone)]
pub struct CorpusEncoding {
    outputs: Vec<EncoderOutput>,
}

impl CorpusEncoding {
    /// Encodes every sentence once. Sentences beyond the backend limit fail
    /// with [`Error::SequenceTooLong`].
    pub fn new(mlm: &Mlm, corpus: &[Sentence]) -> Result<Self> {
        let outputs = corpus
            .par_iter()
            .map(|s| mlm.encode(&s.surfaces()))
            .collect::<Result<Vec<_>>>()?;
        Ok(CorpusEncoding { outputs })
    }

    pub fn get(&self, n: usize) -> &EncoderOutput {
        &self.outputs[n]
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }
}

pub fn predicate_positions(s: &Sentence) -> Vec<usize> {
    s.predicates().iter().map(|p| p.token_index).collect()
}

/// Score grid of one sentence from its encoder output.
pub fn score_sentence<F: Scalar>(
    model: &ZarModel<F>,
    enc: &EncoderOutput,
    s: &Sentence,
) -> Result<ScoreGrid<F>> {
    let preds = predicate_positions(s);
    let columns = (0..preds.len())
        .map(|j| model.predict(&build_features::<F>(enc, &preds, j)?))
        .collect::<Result<Vec<_>>>()?;
    ScoreGrid::from_columns(s.len(), columns)
}

pub fn score_corpus<F: Scalar>(
    model: &ZarModel<F>,
    enc: &CorpusEncoding,
    corpus: &[Sentence],
) -> Result<Vec<ScoreGrid<F>>> {
    if enc.len() != corpus.len() {
        return Err(Error::Shape("encoding does not match the corpus".into()));
    }
    corpus
        .par_iter()
        .enumerate()
        .map(|(n, s)| score_sentence(model, enc.get(n), s))
        .collect()
}

/// Cell-wise mean of several score grids of the same shape.
pub fn average_grids<F: Scalar>(grids: &[ScoreGrid<F>]) -> Result<ScoreGrid<F>> {
    let first = grids
        .first()
        .ok_or_else(|| Error::Empty("no grids to average".into()))?;
    if grids
        .iter()
        .any(|g| g.rows() != first.rows() || g.cols() != first.cols())
    {
        return Err(Error::Shape("grids of different shapes".into()));
    }
    let k = F::of(grids.len() as f64);
    let columns = (0..first.cols())
        .map(|j| {
            (0..first.rows())
                .map(|i| {
                    let mut acc = [F::zero(); 4];
                    for g in grids {
                        let c = g.get(i, j);
                        for l in 0..4 {
                            acc[l] = acc[l] + c[l];
                        }
                    }
                    acc.map(|v| v / k)
                })
                .collect()
        })
        .collect();
    ScoreGrid::from_columns(first.rows(), columns)
}

/// Mean distribution of several models over one sentence.
pub fn ensemble_scores<F: Scalar>(
    models: &[&ZarModel<F>],
    enc: &EncoderOutput,
    s: &Sentence,
) -> Result<ScoreGrid<F>> {
    if models.len() < 2 {
        return Err(Error::Config(
            "an ensemble needs at least two models".into(),
        ));
    }
    let (c0, d0) = (models[0].config(), models[0].input_dim());
    if models.iter().any(|m| {
        m.input_dim() != d0 || m.config().layers != c0.layers || m.config().hidden != c0.hidden
    }) {
        return Err(Error::Shape("ensemble members differ in shape".into()));
    }
    let grids = models
        .iter()
        .map(|m| score_sentence(m, enc, s))
        .collect::<Result<Vec<_>>>()?;
    average_grids(&grids)
}

pub fn decode_corpus<F: Scalar>(
    grids: &[ScoreGrid<F>],
    thresholds: &Thresholds,
) -> Vec<Vec<SlotPrediction>> {
    grids
        .iter()
        .map(|g| decode_arguments(g, thresholds))
        .collect()
}

pub fn evaluate<F: Scalar>(
    grids: &[ScoreGrid<F>],
    corpus: &[Sentence],
    thresholds: &Thresholds,
) -> Result<EvalReport> {
    thresholds.validate()?;
    Ok(EvalReport::new(count_predictions(
        corpus,
        &decode_corpus(grids, thresholds),
    )?))
}

/// Candidate thresholds 0.00, 0.05, ..., 0.95.
pub fn threshold_grid() -> Vec<f64> {
    (0..20).map(|i| i as f64 / 20.0).collect()
}

/// Per case, the grid threshold maximizing that case's F1 (ZAR and DEP
/// together) on `corpus`; ties go to the smallest threshold.
pub fn tune_thresholds<F: Scalar>(
    grids: &[ScoreGrid<F>],
    corpus: &[Sentence],
) -> Result<Thresholds> {
    if corpus.is_empty() {
        return Err(Error::Empty(
            "threshold tuning needs validation sentences".into(),
        ));
    }
    let open = decode_corpus(grids, &Thresholds::uniform(0.0));
    let mut best = Thresholds::uniform(0.0);
    for case in Case::ALL {
        let c = case.index();
        // Winning probability of every slot, so the sweep only re-thresholds.
        let winners: Vec<Vec<f64>> = grids
            .iter()
            .map(|g| {
                (0..g.cols())
                    .map(|j| {
                        (0..g.rows())
                            .map(|i| g.prob(i, j, case.label()).as_f64())
                            .fold(f64::NEG_INFINITY, f64::max)
                    })
                    .collect()
            })
            .collect();
        let mut best_f1 = f64::NEG_INFINITY;
        for theta in threshold_grid() {
            let mut counts = EvalCounts::default();
            for ((s, preds), win) in corpus.iter().zip(&open).zip(&winners) {
                for (j, pred) in preds.iter().enumerate() {
                    let p = pred.0[c].filter(|_| win[j] > theta);
                    counts.add_slot(case, s.annotation(j, case), p);
                }
            }
            let f = counts.case(case).f1();
            if f > best_f1 {
                best_f1 = f;
                best.0[c] = theta;
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(cols: Vec<Vec<[f64; 4]>>) -> ScoreGrid<f64> {
        ScoreGrid::from_columns(cols[0].len(), cols).unwrap()
    }

    #[test]
    fn averaging() {
        let a = g(vec![vec![[1.0, 0.0, 0.0, 0.0]]]);
        let b = g(vec![vec![[0.0, 0.5, 0.0, 0.5]]]);
        let m = average_grids(&[a.clone(), b]).unwrap();
        assert_eq!(m.get(0, 0), [0.5, 0.25, 0.0, 0.25]);
        assert_eq!(average_grids(&[a.clone(), a.clone()]).unwrap(), a);
        assert!(average_grids::<f64>(&[]).is_err());
    }

    #[test]
    fn grid_values() {
        let t = threshold_grid();
        assert_eq!(t.len(), 20);
        assert_eq!(t[0], 0.0);
        assert_eq!(t[19], 0.95);
    }
}
