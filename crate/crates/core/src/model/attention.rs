//! Bilinear ("general") attention: `score_t = dec_h · (W · memory_t)`.
//!
//! The projected keys `W · memory_t` do not depend on the decoder state, so
//! the network computes them once per question and every decode step only
//! pays for the scores and the weighted sum.

use crate::error::{Error, Result};
use crate::tensor::{
    mat_vec_acc, outer_acc, softmax_backward_into, softmax_into, vec_mat_acc, Tensor,
};

#[derive(Debug, Clone)]
pub(crate) struct AttentionCache {
    pub weights: Vec<f64>,
    pub context: Vec<f64>,
}

/// `keys[t] = W · memory[t]` for every position; `W` is `[h × 2h]`.
pub(crate) fn project_keys(attention_w: &Tensor, memory: &[f64], positions: usize) -> Vec<f64> {
    let h = attention_w.rows();
    let width = attention_w.cols();
    let mut keys = vec![0.0; positions * h];
    for (mem, key) in memory.chunks_exact(width).zip(keys.chunks_exact_mut(h)) {
        mat_vec_acc(attention_w.data(), width, mem, key);
    }
    keys
}

/// Backward of [`project_keys`]: accumulates into `dw` and `dmemory`.
pub(crate) fn project_keys_backward(
    attention_w: &Tensor,
    memory: &[f64],
    dkeys: &[f64],
    dw: &mut [f64],
    dmemory: &mut [f64],
) {
    let h = attention_w.rows();
    let width = attention_w.cols();
    for ((mem, dkey), dmem) in memory
        .chunks_exact(width)
        .zip(dkeys.chunks_exact(h))
        .zip(dmemory.chunks_exact_mut(width))
    {
        outer_acc(dkey, mem, dw);
        vec_mat_acc(dkey, attention_w.data(), width, dmem);
    }
}

/// Scores against precomputed keys, masked softmax, weighted sum of memory.
pub(crate) fn attend_keys(
    dec_h: &[f64],
    keys: &[f64],
    memory: &[f64],
    mask: &[bool],
) -> Result<AttentionCache> {
    let positions = mask.len();
    let width = memory.len() / positions;
    let mut scores = vec![0.0; positions];
    mat_vec_acc(keys, dec_h.len(), dec_h, &mut scores);
    let mut weights = vec![0.0; positions];
    softmax_into(&scores, Some(mask), &mut weights)?;
    let mut context = vec![0.0; width];
    vec_mat_acc(&weights, memory, width, &mut context);
    Ok(AttentionCache { weights, context })
}

/// Backward of [`attend_keys`] given `dcontext`. Accumulates into `ddec_h`,
/// `dkeys` and `dmemory`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn attend_keys_backward(
    cache: &AttentionCache,
    dec_h: &[f64],
    keys: &[f64],
    memory: &[f64],
    dcontext: &[f64],
    ddec_h: &mut [f64],
    dkeys: &mut [f64],
    dmemory: &mut [f64],
) {
    let positions = cache.weights.len();
    let width = dcontext.len();
    let mut dweights = vec![0.0; positions];
    mat_vec_acc(memory, width, dcontext, &mut dweights);
    outer_acc(&cache.weights, dcontext, dmemory);
    let mut dscores = vec![0.0; positions];
    softmax_backward_into(&cache.weights, &dweights, &mut dscores);
    vec_mat_acc(&dscores, keys, dec_h.len(), ddec_h);
    outer_acc(&dscores, dec_h, dkeys);
}

/// Attention of decoder state `dec_h[h]` over `memory[L × 2h]`.
/// Returns `(context[2h], weights[L])`; masked positions get weight 0.
pub fn attend(
    dec_h: &Tensor,
    memory: &Tensor,
    mask: &[bool],
    attention_w: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let h = attention_w.rows();
    let width = attention_w.cols();
    if dec_h.numel() != h || memory.cols() != width || memory.rows() != mask.len() {
        return Err(Error::ShapeMismatch {
            op: "attend",
            left: dec_h.shape().to_vec(),
            right: memory.shape().to_vec(),
        });
    }
    let keys = project_keys(attention_w, memory.data(), mask.len());
    let cache = attend_keys(dec_h.data(), &keys, memory.data(), mask)?;
    Ok((Tensor::vector(cache.context), Tensor::vector(cache.weights)))
}
