//! Training loop, threshold tuning, evaluation and significance testing.

mod metrics;
mod optim;
mod score;
mod significance;
mod train;

pub use metrics::{
    count_predictions, f1, render_table, sentence_counts, Counts, EvalCounts, EvalReport,
    MultiSeedReport,
};
pub use optim::{
    clip_gradient, compute_loss, gradient_norm, lr_schedule, Adam, AdamConfig, Decay, LrSchedule,
};
pub use score::{
    average_grids, decode_corpus, ensemble_scores, evaluate, predicate_positions, score_corpus,
    score_sentence, threshold_grid, tune_thresholds, CorpusEncoding,
};
pub use significance::{permutation_test, Metric, MIN_ITERATIONS};
pub use train::{train_model, EpochRecord, RunSpec, TrainConfig, TrainOutcome};
