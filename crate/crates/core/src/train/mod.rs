//! Loss, metrics, Adam, the training loop and checkpoint persistence.

pub mod adam;
pub mod checkpoint;
pub mod config;
pub mod metrics;
mod trainer;

pub use adam::{adam_step, clip_global_norm, global_norm, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION, MAGIC};
pub use config::{ConfigName, TrainConfig};
pub use metrics::{exact_match_accuracy, masked_cross_entropy, strip_specials, token_accuracy};
pub use trainer::{
    evaluate, evaluate_params, history_csv, train, EpochRecord, EvalReport, TrainData,
    TrainOptions, HISTORY_CSV_HEADER,
};

use crate::error::Result;
use crate::text::{
    prepare_corpus, split_dataset, EncodedExample, PreparedCorpus, QAPair, Split, SplitRatios,
};

/// Clean, encode and split `pairs` the way training does, so evaluation can
/// recover the same partition from the corpus and the stored config.
pub fn prepare_splits(
    pairs: &[QAPair],
    config: &TrainConfig,
) -> Result<(PreparedCorpus, Split<EncodedExample>)> {
    let prepared = prepare_corpus(pairs, config.min_count, config.max_len, config.max_len)?;
    let split = split_dataset(&prepared.examples, SplitRatios::default(), config.seed)?;
    Ok((prepared, split))
}
