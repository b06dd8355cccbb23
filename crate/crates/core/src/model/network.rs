use super::attention::{
    attend_keys, attend_keys_backward, project_keys, project_keys_backward, AttentionCache,
};
use super::lstm::{lstm_backward, lstm_forward, LstmCache};
use super::params::{LstmCellParams, ModelDims, ModelParams};
use crate::error::{Error, Result};
use crate::tensor::{argmax, log_sum_exp, mat_vec_acc, outer_acc, vec_mat_acc, Tensor};
use crate::text::EncodedExample;

/// Encoder result: the attendable memory and the decoder's initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    /// `[L × 2h]` per-position `[forward; backward]` hidden states. Rows at
    /// masked positions are zero.
    pub states: Tensor,
    /// `[L × h]` attention keys `W · states[t]`.
    pub keys: Tensor,
    pub mask: Vec<bool>,
    pub dec_init_h: Tensor,
    pub dec_init_c: Tensor,
}

struct EncoderTrace {
    fwd: Vec<LstmCache>,
    bwd: Vec<LstmCache>,
    /// Concatenated final `[h_fwd; h_bwd]` and `[c_fwd; c_bwd]`.
    final_h: Vec<f64>,
    final_c: Vec<f64>,
    out: EncoderOutput,
}

fn check_ids(ids: &[usize], vocab: usize) -> Result<()> {
    match ids.iter().find(|&&id| id >= vocab) {
        Some(id) => Err(Error::InvalidArgument(format!(
            "token id {id} out of range for vocabulary of {vocab}"
        ))),
        None => Ok(()),
    }
}

fn encode_traced(params: &ModelParams, ids: &[usize], mask: &[bool]) -> Result<EncoderTrace> {
    if ids.len() != mask.len() {
        return Err(Error::ShapeMismatch {
            op: "encode",
            left: vec![ids.len()],
            right: vec![mask.len()],
        });
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::EmptyInput);
    }
    check_ids(ids, params.vocab_size())?;
    let h = params.hidden();
    let len = ids.len();
    let mut states = vec![0.0; len * 2 * h];

    // PAD positions run through the cell but their result is discarded, so
    // the carried state only ever reflects real tokens.
    let mut scan = |cell, order: &mut dyn Iterator<Item = usize>, offset: usize| {
        let mut hs = vec![0.0; h];
        let mut cs = vec![0.0; h];
        let mut caches = Vec::with_capacity(len);
        for t in order {
            let cache = lstm_forward(cell, params.embedding.row(ids[t]), &hs, &cs);
            if mask[t] {
                hs.copy_from_slice(&cache.h);
                cs.copy_from_slice(&cache.c);
                states[t * 2 * h + offset..t * 2 * h + offset + h].copy_from_slice(&hs);
            }
            caches.push(cache);
        }
        (caches, hs, cs)
    };
    let (fwd, hf, cf) = scan(&params.enc_fwd, &mut (0..len), 0);
    let (mut bwd, hb, cb) = scan(&params.enc_bwd, &mut (0..len).rev(), h);
    bwd.reverse();

    let final_h = [hf, hb].concat();
    let final_c = [cf, cb].concat();
    let bridge = |z: &[f64]| {
        let mut out = params.bridge_b.data().to_vec();
        vec_mat_acc(z, params.bridge_w.data(), h, &mut out);
        out.iter_mut().for_each(|v| *v = v.tanh());
        out
    };
    let dec_init_h = bridge(&final_h);
    let dec_init_c = bridge(&final_c);
    let keys = project_keys(&params.attention_w, &states, len);

    Ok(EncoderTrace {
        fwd,
        bwd,
        final_h,
        final_c,
        out: EncoderOutput {
            states: Tensor::new(vec![len, 2 * h], states)?,
            keys: Tensor::new(vec![len, h], keys)?,
            mask: mask.to_vec(),
            dec_init_h: Tensor::vector(dec_init_h),
            dec_init_c: Tensor::vector(dec_init_c),
        },
    })
}

/// Run the bidirectional encoder over a padded question.
pub fn encode(
    params: &ModelParams,
    question_ids: &[usize],
    question_mask: &[bool],
) -> Result<EncoderOutput> {
    encode_traced(params, question_ids, question_mask).map(|t| t.out)
}

struct StepTrace {
    prev_token: usize,
    attn: AttentionCache,
    lstm: LstmCache,
    logits: Vec<f64>,
}

fn decode_traced(
    params: &ModelParams,
    prev_token: usize,
    h_prev: &[f64],
    c_prev: &[f64],
    enc: &EncoderOutput,
) -> Result<StepTrace> {
    let attn = attend_keys(h_prev, enc.keys.data(), enc.states.data(), &enc.mask)?;
    let x = [params.embedding.row(prev_token), &attn.context].concat();
    let lstm = lstm_forward(&params.decoder, &x, h_prev, c_prev);
    let readout = [&lstm.h[..], &attn.context].concat();
    let mut logits = params.out_b.data().to_vec();
    vec_mat_acc(&readout, params.out_w.data(), logits.len(), &mut logits);
    Ok(StepTrace {
        prev_token,
        attn,
        lstm,
        logits,
    })
}

/// Output of one decoder step.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeStep {
    /// Pre-softmax vocabulary scores.
    pub logits: Tensor,
    pub h: Tensor,
    pub c: Tensor,
    /// Attention weights over the question positions.
    pub weights: Tensor,
}

/// One decoder step: attend with the incoming state, feed
/// `[embed(prev); context]` through the LSTM, read out from `[h'; context]`.
pub fn decode_step(
    params: &ModelParams,
    prev_token: usize,
    dec_h: &Tensor,
    dec_c: &Tensor,
    enc: &EncoderOutput,
) -> Result<DecodeStep> {
    let h = params.hidden();
    if dec_h.numel() != h || dec_c.numel() != h {
        return Err(Error::ShapeMismatch {
            op: "decode_step",
            left: dec_h.shape().to_vec(),
            right: vec![h],
        });
    }
    check_ids(&[prev_token], params.vocab_size())?;
    let s = decode_traced(params, prev_token, dec_h.data(), dec_c.data(), enc)?;
    Ok(DecodeStep {
        logits: Tensor::vector(s.logits),
        h: Tensor::vector(s.lstm.h),
        c: Tensor::vector(s.lstm.c),
        weights: Tensor::vector(s.attn.weights),
    })
}

/// Teacher-forced pass over every answer position.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherForced {
    /// `[L_a × V]`
    pub logits: Tensor,
    /// `[L_a × L_q]`
    pub attention: Tensor,
}

pub fn forward_teacher_forced(
    params: &ModelParams,
    example: &EncodedExample,
) -> Result<TeacherForced> {
    let enc = encode(params, &example.question_ids, &example.question_mask)?;
    check_ids(&example.answer_input_ids, params.vocab_size())?;
    let (v, lq, la) = (
        params.vocab_size(),
        example.question_len(),
        example.answer_len(),
    );
    let mut logits = Vec::with_capacity(la * v);
    let mut attention = Vec::with_capacity(la * lq);
    let mut h = enc.dec_init_h.data().to_vec();
    let mut c = enc.dec_init_c.data().to_vec();
    for &tok in &example.answer_input_ids {
        let s = decode_traced(params, tok, &h, &c, &enc)?;
        logits.extend_from_slice(&s.logits);
        attention.extend_from_slice(&s.attn.weights);
        h = s.lstm.h;
        c = s.lstm.c;
    }
    Ok(TeacherForced {
        logits: Tensor::new(vec![la, v], logits)?,
        attention: Tensor::new(vec![la, lq], attention)?,
    })
}

/// Exact multiply-accumulate count of the encoder for a question of length
/// `question_len` (PAD positions included).
pub fn encoder_cost(dims: ModelDims, question_len: usize) -> u64 {
    let (e, h, l) = (dims.embed as u64, dims.hidden as u64, question_len as u64);
    let cells = 2 * l * 4 * h * (e + h);
    let bridge = 2 * (2 * h * h);
    let keys = l * 2 * h * h;
    cells + bridge + keys
}

/// Exact multiply-accumulate count of one decoder step against a question of
/// length `question_len`.
pub fn decoder_step_cost(dims: ModelDims, question_len: usize) -> u64 {
    let (v, e, h, l) = (
        dims.vocab as u64,
        dims.embed as u64,
        dims.hidden as u64,
        question_len as u64,
    );
    let attention = l * h + l * 2 * h;
    let cell = 4 * h * (e + 2 * h + h);
    let readout = 3 * h * v;
    attention + cell + readout
}

/// Closed-form cost of [`forward_teacher_forced`].
pub fn teacher_forced_cost(dims: ModelDims, question_len: usize, answer_len: usize) -> u64 {
    encoder_cost(dims, question_len) + answer_len as u64 * decoder_step_cost(dims, question_len)
}

/// Loss of one example plus teacher-forced argmax hits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExampleLoss {
    /// Mean cross-entropy over the real target positions.
    pub loss: f64,
    /// Real positions whose argmax logit equals the target.
    pub correct: usize,
    /// Number of real target positions.
    pub positions: usize,
}

/// Masked mean cross-entropy of one example, without gradients. Decoder
/// steps after the last real target are skipped since they cannot affect
/// the loss.
pub fn example_loss(params: &ModelParams, example: &EncodedExample) -> Result<f64> {
    loss_impl(params, example, None).map(|l| l.loss)
}

/// Masked mean cross-entropy of one example, with its gradient accumulated
/// into `grads` (shaped like `params`).
pub fn example_loss_and_grad(
    params: &ModelParams,
    example: &EncodedExample,
    grads: &mut ModelParams,
) -> Result<ExampleLoss> {
    loss_impl(params, example, Some(grads))
}

fn loss_impl(
    params: &ModelParams,
    ex: &EncodedExample,
    grads: Option<&mut ModelParams>,
) -> Result<ExampleLoss> {
    let real = ex.target_count();
    if real == 0 {
        return Err(Error::EmptyInput);
    }
    check_ids(&ex.answer_input_ids, params.vocab_size())?;
    check_ids(&ex.answer_target_ids, params.vocab_size())?;
    let steps = ex.answer_mask.iter().rposition(|&m| m).map_or(0, |p| p + 1);
    let enc = encode_traced(params, &ex.question_ids, &ex.question_mask)?;

    let mut trace: Vec<StepTrace> = Vec::with_capacity(steps);
    let mut h = enc.out.dec_init_h.data().to_vec();
    let mut c = enc.out.dec_init_c.data().to_vec();
    let mut loss = 0.0;
    let mut correct = 0;
    for t in 0..steps {
        let s = decode_traced(params, ex.answer_input_ids[t], &h, &c, &enc.out)?;
        if ex.answer_mask[t] {
            let target = ex.answer_target_ids[t];
            loss += log_sum_exp(&s.logits) - s.logits[target];
            correct += usize::from(argmax(&s.logits) == target);
        }
        h.clone_from(&s.lstm.h);
        c.clone_from(&s.lstm.c);
        trace.push(s);
    }
    let loss = loss / real as f64;
    if let Some(g) = grads {
        backward(params, ex, &enc, &trace, real, g);
    }
    Ok(ExampleLoss {
        loss,
        correct,
        positions: real,
    })
}

fn backward(
    params: &ModelParams,
    ex: &EncodedExample,
    enc: &EncoderTrace,
    trace: &[StepTrace],
    real: usize,
    g: &mut ModelParams,
) {
    let (h, v, e) = (params.hidden(), params.vocab_size(), params.embedding.dim);
    let lq = ex.question_len();
    let memory = enc.out.states.data();
    let keys = enc.out.keys.data();
    let mut dmemory = vec![0.0; lq * 2 * h];
    let mut dkeys = vec![0.0; lq * h];
    let mut dh = vec![0.0; h];
    let mut dc = vec![0.0; h];

    for (t, s) in trace.iter().enumerate().rev() {
        let mut dctx = vec![0.0; 2 * h];
        if ex.answer_mask[t] {
            // d(loss)/d(logits) = (softmax − onehot) / real
            let lse = log_sum_exp(&s.logits);
            let mut dlogits: Vec<f64> = s
                .logits
                .iter()
                .map(|&z| (z - lse).exp() / real as f64)
                .collect();
            dlogits[ex.answer_target_ids[t]] -= 1.0 / real as f64;
            let readout = [&s.lstm.h[..], &s.attn.context].concat();
            outer_acc(&readout, &dlogits, g.out_w.data_mut());
            for (b, d) in g.out_b.data_mut().iter_mut().zip(&dlogits) {
                *b += d;
            }
            let mut dreadout = vec![0.0; 3 * h];
            mat_vec_acc(params.out_w.data(), v, &dlogits, &mut dreadout);
            for k in 0..h {
                dh[k] += dreadout[k];
            }
            dctx.copy_from_slice(&dreadout[h..]);
        }
        let (dinput, dc_prev) = lstm_backward(&params.decoder, &s.lstm, &dh, &dc, &mut g.decoder);
        for (slot, d) in g
            .embedding
            .vectors
            .row_mut(s.prev_token)
            .iter_mut()
            .zip(&dinput[..e])
        {
            *slot += d;
        }
        for k in 0..2 * h {
            dctx[k] += dinput[e + k];
        }
        let mut dh_prev = dinput[e + 2 * h..].to_vec();
        let h_prev = &s.lstm.input[e + 2 * h..];
        attend_keys_backward(
            &s.attn,
            h_prev,
            keys,
            memory,
            &dctx,
            &mut dh_prev,
            &mut dkeys,
            &mut dmemory,
        );
        dh = dh_prev;
        dc = dc_prev;
    }

    project_keys_backward(
        &params.attention_w,
        memory,
        &dkeys,
        g.attention_w.data_mut(),
        &mut dmemory,
    );

    // Bridge: init = tanh(z · W + b) for both h and c.
    let mut dfinal_h = vec![0.0; 2 * h];
    let mut dfinal_c = vec![0.0; 2 * h];
    for (z, init, dinit, dz) in [
        (&enc.final_h, enc.out.dec_init_h.data(), &dh, &mut dfinal_h),
        (&enc.final_c, enc.out.dec_init_c.data(), &dc, &mut dfinal_c),
    ] {
        let dpre: Vec<f64> = init
            .iter()
            .zip(dinit)
            .map(|(y, d)| d * (1.0 - y * y))
            .collect();
        outer_acc(z, &dpre, g.bridge_w.data_mut());
        for (b, d) in g.bridge_b.data_mut().iter_mut().zip(&dpre) {
            *b += d;
        }
        mat_vec_acc(params.bridge_w.data(), h, &dpre, dz);
    }

    let lq_mask = &ex.question_mask;
    let ids = &ex.question_ids;
    let ModelParams {
        embedding,
        enc_fwd,
        enc_bwd,
        ..
    } = g;
    // Forward direction scanned 0..L, so its gradients flow L..0.
    direction_backward(
        &params.enc_fwd,
        &enc.fwd,
        enc_fwd,
        &mut embedding.vectors,
        ids,
        lq_mask,
        &dmemory,
        0,
        &dfinal_h[..h],
        &dfinal_c[..h],
        (0..lq).rev(),
    );
    direction_backward(
        &params.enc_bwd,
        &enc.bwd,
        enc_bwd,
        &mut embedding.vectors,
        ids,
        lq_mask,
        &dmemory,
        h,
        &dfinal_h[h..],
        &dfinal_c[h..],
        0..lq,
    );
}

/// BPTT through one encoder direction. `order` is the reverse of the scan
/// order; masked steps are identity maps on the carried state.
#[allow(clippy::too_many_arguments)]
fn direction_backward(
    cell: &LstmCellParams,
    caches: &[LstmCache],
    grad_cell: &mut LstmCellParams,
    grad_embedding: &mut Tensor,
    ids: &[usize],
    mask: &[bool],
    dmemory: &[f64],
    offset: usize,
    dh_final: &[f64],
    dc_final: &[f64],
    order: impl Iterator<Item = usize>,
) {
    let h = cell.hidden();
    let e = cell.input_dim();
    let mut dh = dh_final.to_vec();
    let mut dc = dc_final.to_vec();
    for t in order {
        if !mask[t] {
            continue;
        }
        for k in 0..h {
            dh[k] += dmemory[t * 2 * h + offset + k];
        }
        let (dinput, dc_prev) = lstm_backward(cell, &caches[t], &dh, &dc, grad_cell);
        for (slot, d) in grad_embedding.row_mut(ids[t]).iter_mut().zip(&dinput[..e]) {
            *slot += d;
        }
        dh = dinput[e..].to_vec();
        dc = dc_prev;
    }
}
