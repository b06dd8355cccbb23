use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gradcheck::Parameters;
use crate::tensor::Tensor;
use crate::text::EmbeddingTable;

/// Stacked LSTM gate weights. Rows are `[x; h_prev]`, columns are the four
/// gate blocks in the order input, forget, cell candidate, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellParams {
    pub w: Tensor,
    pub b: Tensor,
}

impl LstmCellParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        LstmCellParams {
            w: Tensor::zeros(&[input_dim + hidden, 4 * hidden]),
            b: Tensor::zeros(&[4 * hidden]),
        }
    }

    /// Glorot-uniform weights, zero biases except the forget slice at 1.
    pub fn init(input_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut p = LstmCellParams {
            w: glorot(input_dim + hidden, 4 * hidden, rng),
            b: Tensor::zeros(&[4 * hidden]),
        };
        p.b.data_mut()[hidden..2 * hidden].fill(1.0);
        p
    }

    pub fn hidden(&self) -> usize {
        self.b.numel() / 4
    }

    pub fn input_dim(&self) -> usize {
        self.w.rows() - self.hidden()
    }
}

/// Every learned tensor of the encoder–decoder network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub embedding: EmbeddingTable,
    pub enc_fwd: LstmCellParams,
    pub enc_bwd: LstmCellParams,
    /// `[2h × h]`: concatenated final encoder state to decoder initial state.
    pub bridge_w: Tensor,
    pub bridge_b: Tensor,
    /// `[h × 2h]`: bilinear attention score matrix.
    pub attention_w: Tensor,
    /// Input is `[embedding; context]`, width `embed + 2h`.
    pub decoder: LstmCellParams,
    /// `[3h × V]`: readout from `[h'; context]` to vocabulary logits.
    pub out_w: Tensor,
    pub out_b: Tensor,
}

/// Sizes that determine every parameter shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
}

impl ModelDims {
    /// Closed-form scalar parameter count.
    pub fn parameter_count(&self) -> usize {
        let (v, e, h) = (self.vocab, self.embed, self.hidden);
        let lstm = |input: usize| (input + h) * 4 * h + 4 * h;
        v * e + 2 * lstm(e) + (2 * h * h + h) + h * 2 * h + lstm(e + 2 * h) + 3 * h * v + v
    }
}

fn glorot(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.gen_range(-bound..=bound))
        .collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("shape matches data")
}

/// Glorot bound for a weight matrix of the given shape.
pub fn glorot_bound(shape: &[usize]) -> f64 {
    (6.0 / (shape[0] + shape[1]) as f64).sqrt()
}

/// Fresh parameters around the given embeddings. Deterministic in `seed`.
pub fn init_params(hidden: usize, embedding: EmbeddingTable, seed: u64) -> Result<ModelParams> {
    if hidden == 0 {
        return Err(Error::InvalidArgument(
            "hidden size must be positive".into(),
        ));
    }
    let (v, e, h) = (embedding.vocab_size(), embedding.dim, hidden);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(ModelParams {
        enc_fwd: LstmCellParams::init(e, h, &mut rng),
        enc_bwd: LstmCellParams::init(e, h, &mut rng),
        bridge_w: glorot(2 * h, h, &mut rng),
        bridge_b: Tensor::zeros(&[h]),
        attention_w: glorot(h, 2 * h, &mut rng),
        decoder: LstmCellParams::init(e + 2 * h, h, &mut rng),
        out_w: glorot(3 * h, v, &mut rng),
        out_b: Tensor::zeros(&[v]),
        embedding,
    })
}

impl ModelParams {
    pub fn dims(&self) -> ModelDims {
        ModelDims {
            vocab: self.embedding.vocab_size(),
            embed: self.embedding.dim,
            hidden: self.enc_fwd.hidden(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.enc_fwd.hidden()
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.vocab_size()
    }

    /// Same shapes, all zeros: the accumulator for gradients.
    pub fn zeros_like(&self) -> ModelParams {
        let mut z = self.clone();
        z.visit_mut(&mut |_, t| t.data_mut().fill(0.0));
        z.embedding.coverage = 0.0;
        z
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &ModelParams) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (a, b) in dst.data_mut().iter_mut().zip(src.data()) {
                *a += b;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.visit_mut(&mut |_, t| t.data_mut().iter_mut().for_each(|v| *v *= factor));
    }

    /// Tensor names in serialization order.
    pub fn tensor_names() -> [&'static str; 12] {
        TENSOR_NAMES
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |_, t| ok &= t.is_finite());
        ok
    }
}

const TENSOR_NAMES: [&str; 12] = [
    "embedding",
    "enc_fwd.w",
    "enc_fwd.b",
    "enc_bwd.w",
    "enc_bwd.b",
    "bridge.w",
    "bridge.b",
    "attention.w",
    "decoder.w",
    "decoder.b",
    "out.w",
    "out.b",
];

impl ModelParams {
    /// Rebuild from the embedding table plus the remaining eleven tensors in
    /// serialization order. Every shape is checked against the sizes implied
    /// by the embedding and the encoder bias.
    pub fn from_tensors(embedding: EmbeddingTable, rest: Vec<Tensor>) -> Result<ModelParams> {
        if rest.len() != TENSOR_NAMES.len() - 1 {
            return Err(Error::InvalidArgument(format!(
                "expected {} tensors after the embedding, got {}",
                TENSOR_NAMES.len() - 1,
                rest.len()
            )));
        }
        let h = rest[1].numel() / 4;
        let mut p = ModelParams {
            enc_fwd: LstmCellParams::zeros(embedding.dim, h),
            enc_bwd: LstmCellParams::zeros(embedding.dim, h),
            bridge_w: Tensor::zeros(&[2 * h, h]),
            bridge_b: Tensor::zeros(&[h]),
            attention_w: Tensor::zeros(&[h, 2 * h]),
            decoder: LstmCellParams::zeros(embedding.dim + 2 * h, h),
            out_w: Tensor::zeros(&[3 * h, embedding.vocab_size()]),
            out_b: Tensor::zeros(&[embedding.vocab_size()]),
            embedding,
        };
        for ((name, slot), t) in TENSOR_NAMES[1..]
            .iter()
            .zip(p.tensors_mut().into_iter().skip(1))
            .zip(rest)
        {
            if slot.shape() != t.shape() {
                return Err(Error::ShapeMismatch {
                    op: name,
                    left: slot.shape().to_vec(),
                    right: t.shape().to_vec(),
                });
            }
            *slot = t;
        }
        Ok(p)
    }

    /// All tensors in serialization order, matching [`ModelParams::tensor_names`].
    pub fn tensors(&self) -> [&Tensor; 12] {
        [
            &self.embedding.vectors,
            &self.enc_fwd.w,
            &self.enc_fwd.b,
            &self.enc_bwd.w,
            &self.enc_bwd.b,
            &self.bridge_w,
            &self.bridge_b,
            &self.attention_w,
            &self.decoder.w,
            &self.decoder.b,
            &self.out_w,
            &self.out_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 12] {
        [
            &mut self.embedding.vectors,
            &mut self.enc_fwd.w,
            &mut self.enc_fwd.b,
            &mut self.enc_bwd.w,
            &mut self.enc_bwd.b,
            &mut self.bridge_w,
            &mut self.bridge_b,
            &mut self.attention_w,
            &mut self.decoder.w,
            &mut self.decoder.b,
            &mut self.out_w,
            &mut self.out_b,
        ]
    }
}

impl Parameters for ModelParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        for (name, t) in TENSOR_NAMES.iter().zip(self.tensors()) {
            f(name, t);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (name, t) in TENSOR_NAMES.iter().zip(self.tensors_mut()) {
            f(name, t);
        }
    }
}
