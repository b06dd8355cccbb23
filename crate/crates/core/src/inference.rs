//! Greedy decoding and the stateless chat layer.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{decode_step, encode, ModelParams};
use crate::tensor::argmax;
use crate::text::vocab::{END, PAD, START, UNK};
use crate::text::{clean_tokens, encode_sequence, Role, Vocabulary};
use crate::train::metrics::strip_specials;
use crate::train::Checkpoint;

/// Raw greedy output: every emitted id, including a terminating END or PAD,
/// and one attention row per step over the padded question.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub ids: Vec<usize>,
    pub attention: Vec<Vec<f64>>,
}

impl Decoded {
    /// Emitted ids with the terminator and any specials removed.
    pub fn content_ids(&self) -> Vec<usize> {
        self.ids
            .iter()
            .copied()
            .filter(|&id| !Vocabulary::is_special(id) || id == UNK)
            .collect()
    }
}

/// Feed START, then repeatedly the argmax token. Stops after END, after a
/// PAD emission, or after `max_len` steps.
pub fn greedy_decode_ids(
    params: &ModelParams,
    question_ids: &[usize],
    question_mask: &[bool],
    max_len: usize,
) -> Result<Decoded> {
    if max_len == 0 {
        return Err(Error::InvalidArgument("max_len must be at least 1".into()));
    }
    let enc = encode(params, question_ids, question_mask)?;
    let mut h = enc.dec_init_h.clone();
    let mut c = enc.dec_init_c.clone();
    let mut prev = START;
    let mut out = Decoded {
        ids: Vec::new(),
        attention: Vec::new(),
    };
    for _ in 0..max_len {
        let step = decode_step(params, prev, &h, &c, &enc)?;
        let next = argmax(step.logits.data());
        out.ids.push(next);
        out.attention.push(step.weights.into_data());
        if next == END || next == PAD {
            break;
        }
        prev = next;
        h = step.h;
        c = step.c;
    }
    Ok(out)
}

/// A single chat answer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatReply {
    /// Specials stripped, single-space joined.
    pub reply_text: String,
    /// Everything the decoder emitted, terminator included.
    pub reply_tokens: Vec<String>,
    /// `[steps × question tokens]`; empty unless requested.
    pub attention: Vec<Vec<f64>>,
    pub latency_ms: f64,
    /// Every question token was out of vocabulary.
    pub all_unknown: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChatOptions {
    /// Defaults to the training pad length.
    pub max_len: Option<usize>,
    pub include_attention: bool,
}

impl Default for ChatOptions {
    fn default() -> Self {
        ChatOptions {
            max_len: None,
            include_attention: true,
        }
    }
}

/// Clean, encode and greedily answer `question`. Attention rows are cut to
/// the real question tokens.
pub fn greedy_decode(question: &str, checkpoint: &Checkpoint, max_len: usize) -> Result<ChatReply> {
    let start = Instant::now();
    let vocab = &checkpoint.vocab;
    let tokens = clean_tokens(question)?;
    let seq = encode_sequence(&tokens, vocab, checkpoint.config.max_len, Role::Question)?;
    let real = seq.mask.iter().filter(|&&m| m).count();
    let all_unknown = seq.ids[..real].iter().all(|&id| id == UNK);
    let decoded = greedy_decode_ids(&checkpoint.params, &seq.ids, &seq.mask, max_len)?;
    let reply_tokens: Vec<String> = decoded
        .ids
        .iter()
        .map(|&id| {
            vocab
                .token(id)
                .unwrap_or(crate::text::vocab::UNK_TOKEN)
                .to_owned()
        })
        .collect();
    Ok(ChatReply {
        reply_text: strip_specials(&reply_tokens).join(" "),
        reply_tokens,
        attention: decoded
            .attention
            .into_iter()
            .map(|mut r| {
                r.truncate(real);
                r
            })
            .collect(),
        latency_ms: start.elapsed().as_secs_f64() * 1e3,
        all_unknown,
    })
}

/// Answer one message with no conversation state.
pub fn chat_respond(
    checkpoint: &Checkpoint,
    message: &str,
    options: &ChatOptions,
) -> Result<ChatReply> {
    let start = Instant::now();
    let max_len = options.max_len.unwrap_or(checkpoint.config.max_len);
    let mut reply = greedy_decode(message, checkpoint, max_len)?;
    if !options.include_attention {
        reply.attention.clear();
    }
    reply.latency_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(reply)
}
