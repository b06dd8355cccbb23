use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use super::metrics::exact_match_accuracy;
use crate::error::{Error, Result};
use crate::inference::greedy_decode_ids;
use crate::model::{example_loss_and_grad, forward_teacher_forced, init_params, ModelParams};
use crate::tensor::argmax;
use crate::text::{EmbeddingTable, EncodedExample, Vocabulary};

/// Metrics after one training epoch. Validation fields are `None` when the
/// validation set is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-example masked loss over the epoch.
    pub train_loss: f64,
    /// Teacher-forced token accuracy accumulated during the epoch.
    pub train_token_acc: f64,
    pub val_token_acc: Option<f64>,
    pub val_exact_acc: Option<f64>,
    /// Zero unless timing was requested, so that histories stay reproducible.
    pub wall_seconds: f64,
}

pub const HISTORY_CSV_HEADER: &str =
    "epoch,train_loss,train_token_acc,val_token_acc,val_exact_acc,wall_seconds";

pub fn history_csv(history: &[EpochRecord]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from(HISTORY_CSV_HEADER);
    out.push('\n');
    for r in history {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.epoch,
            r.train_loss,
            r.train_token_acc,
            opt(r.val_token_acc),
            opt(r.val_exact_acc),
            r.wall_seconds
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalReport {
    /// Teacher-forced accuracy pooled over every real target position.
    pub token_acc: f64,
    /// Greedy decodes identical to the reference answer.
    pub exact_acc: f64,
    /// Mean per-example masked loss.
    pub loss: f64,
}

/// Score `params` on `examples`. Examples are processed in parallel but
/// reduced in order, so the result does not depend on the thread count.
pub fn evaluate_params(
    params: &ModelParams,
    vocab: &Vocabulary,
    examples: &[EncodedExample],
) -> Result<EvalReport> {
    if examples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let per: Vec<(f64, usize, usize, Vec<usize>)> = examples
        .par_iter()
        .map(|ex| {
            let tf = forward_teacher_forced(params, ex)?;
            let mut loss = 0.0;
            let mut correct = 0;
            let real = ex.target_count();
            for t in (0..ex.answer_len()).filter(|&t| ex.answer_mask[t]) {
                let row = tf.logits.row(t);
                let target = ex.answer_target_ids[t];
                loss += crate::tensor::log_sum_exp(row) - row[target];
                correct += usize::from(argmax(row) == target);
            }
            let decoded =
                greedy_decode_ids(params, &ex.question_ids, &ex.question_mask, ex.answer_len())?;
            Ok((loss / real as f64, correct, real, decoded.content_ids()))
        })
        .collect::<Result<_>>()?;

    let to_tokens = |ids: &[usize]| -> Vec<String> {
        ids.iter()
            .map(|&i| vocab.token(i).unwrap_or("<UNK>").to_owned())
            .collect()
    };
    let predictions: Vec<Vec<String>> = per.iter().map(|p| to_tokens(&p.3)).collect();
    let references: Vec<Vec<String>> = examples
        .iter()
        .map(|ex| to_tokens(&ex.reference_ids()))
        .collect();
    let positions: usize = per.iter().map(|p| p.2).sum();
    Ok(EvalReport {
        token_acc: per.iter().map(|p| p.1).sum::<usize>() as f64 / positions as f64,
        exact_acc: exact_match_accuracy(&predictions, &references)?,
        loss: per.iter().map(|p| p.0).sum::<f64>() / examples.len() as f64,
    })
}

pub fn evaluate(checkpoint: &Checkpoint, examples: &[EncodedExample]) -> Result<EvalReport> {
    evaluate_params(&checkpoint.params, &checkpoint.vocab, examples)
}

/// Inputs to [`train`]: encoded train/validation sets plus the vocabulary
/// and corpus fingerprint they came from.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub vocab: &'a Vocabulary,
    pub train: &'a [EncodedExample],
    pub val: &'a [EncodedExample],
    pub corpus_fingerprint: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrainOptions {
    /// Fill `EpochRecord::wall_seconds` with real elapsed time.
    pub record_timing: bool,
}

/// Mean loss, gradient sum and accuracy counts over one batch.
fn batch_gradient(
    params: &ModelParams,
    batch: &[&EncodedExample],
) -> Result<(ModelParams, f64, usize, usize)> {
    let parts: Vec<(ModelParams, f64, usize, usize)> = batch
        .par_iter()
        .map(|ex| {
            let mut g = params.zeros_like();
            let l = example_loss_and_grad(params, ex, &mut g)?;
            Ok((g, l.loss, l.correct, l.positions))
        })
        .collect::<Result<_>>()?;
    let mut iter = parts.into_iter();
    let (mut grads, mut loss, mut correct, mut positions) = iter.next().ok_or(Error::EmptyInput)?;
    for (g, l, c, p) in iter {
        grads.add_assign(&g);
        loss += l;
        correct += c;
        positions += p;
    }
    Ok((grads, loss, correct, positions))
}

/// Train a fresh model on `data.train`.
///
/// Each epoch reshuffles the training set with a seeded generator, takes
/// one Adam step per batch on the mean per-example loss, then scores the
/// validation set. The returned checkpoint holds the parameters from the
/// epoch with the highest validation token accuracy (training token
/// accuracy when there is no validation set; later epochs win ties) and the
/// full history. `epochs = 0` returns the initialized model.
pub fn train(
    data: TrainData<'_>,
    config: &TrainConfig,
    embedding: EmbeddingTable,
    options: TrainOptions,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<Checkpoint> {
    config.validate()?;
    if data.train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if embedding.vocab_size() != data.vocab.len() {
        return Err(Error::InvalidArgument(format!(
            "embedding has {} rows for a vocabulary of {}",
            embedding.vocab_size(),
            data.vocab.len()
        )));
    }
    let mut params = init_params(config.lstm_cells, embedding, config.seed)?;
    let mut adam = AdamState::new(&params);
    let adam_cfg = AdamConfig::new(config.learning_rate, config.clip_norm);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..data.train.len()).collect();

    let mut best = Checkpoint {
        config: config.clone(),
        vocab: data.vocab.clone(),
        params: params.clone(),
        adam: Some(adam.clone()),
        history: Vec::new(),
        corpus_fingerprint: data.corpus_fingerprint,
        best_epoch: None,
    };
    let mut best_score = f64::NEG_INFINITY;
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct, mut positions) = (0.0, 0usize, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&EncodedExample> = chunk.iter().map(|&i| &data.train[i]).collect();
            let (mut grads, loss, c, p) = batch_gradient(&params, &batch)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("loss {loss} at epoch {epoch}")));
            }
            loss_sum += loss;
            correct += c;
            positions += p;
            grads.scale(1.0 / batch.len() as f64);
            if !params.embedding.trainable {
                grads.embedding.vectors.data_mut().fill(0.0);
            }
            adam_step(&mut params, &mut grads, &mut adam, &adam_cfg).map_err(|e| match e {
                Error::NonFinite(what) => {
                    Error::Diverged(format!("non-finite {what} at epoch {epoch}"))
                }
                other => other,
            })?;
        }
        let train_token_acc = correct as f64 / positions as f64;
        let val = if data.val.is_empty() {
            None
        } else {
            Some(evaluate_params(&params, data.vocab, data.val)?)
        };
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / data.train.len() as f64,
            train_token_acc,
            val_token_acc: val.map(|v| v.token_acc),
            val_exact_acc: val.map(|v| v.exact_acc),
            wall_seconds: if options.record_timing {
                started.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        on_epoch(&record);
        let score = record.val_token_acc.unwrap_or(train_token_acc);
        if score >= best_score {
            best_score = score;
            best.params.clone_from(&params);
            best.adam = Some(adam.clone());
            best.best_epoch = Some(epoch);
        }
        history.push(record);
    }
    best.history = history;
    Ok(best)
}
