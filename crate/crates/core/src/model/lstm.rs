use super::params::LstmCellParams;
use crate::error::{Error, Result};
use crate::tensor::{mat_vec_acc, outer_acc, sigmoid, vec_mat_acc, Tensor};

/// Activations of one LSTM step, kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct LstmCache {
    /// `[x; h_prev]`
    pub input: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Activated gates `[i; f; g; o]`.
    pub gates: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

pub(crate) fn lstm_forward(
    p: &LstmCellParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> LstmCache {
    let h = p.hidden();
    let mut input = Vec::with_capacity(x.len() + h);
    input.extend_from_slice(x);
    input.extend_from_slice(h_prev);

    let mut gates = p.b.data().to_vec();
    vec_mat_acc(&input, p.w.data(), 4 * h, &mut gates);
    for (k, v) in gates.iter_mut().enumerate() {
        *v = if (2 * h..3 * h).contains(&k) {
            v.tanh()
        } else {
            sigmoid(*v)
        };
    }

    let (i, rest) = gates.split_at(h);
    let (f, rest) = rest.split_at(h);
    let (g, o) = rest.split_at(h);
    let c: Vec<f64> = (0..h).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let hn = (0..h).map(|k| o[k] * tanh_c[k]).collect();
    LstmCache {
        input,
        c_prev: c_prev.to_vec(),
        gates,
        c,
        tanh_c,
        h: hn,
    }
}

/// Backpropagate `dh`, `dc` (w.r.t. this step's outputs) through one step.
/// Accumulates weight gradients into `grad` and returns
/// `(d[x; h_prev], dc_prev)`.
pub(crate) fn lstm_backward(
    p: &LstmCellParams,
    cache: &LstmCache,
    dh: &[f64],
    dc: &[f64],
    grad: &mut LstmCellParams,
) -> (Vec<f64>, Vec<f64>) {
    let h = p.hidden();
    let (i, rest) = cache.gates.split_at(h);
    let (f, rest) = rest.split_at(h);
    let (g, o) = rest.split_at(h);

    let mut dpre = vec![0.0; 4 * h];
    let mut dc_prev = vec![0.0; h];
    for k in 0..h {
        let dct = dc[k] + dh[k] * o[k] * (1.0 - cache.tanh_c[k] * cache.tanh_c[k]);
        let (di, df, dg, dout) = (
            dct * g[k],
            dct * cache.c_prev[k],
            dct * i[k],
            dh[k] * cache.tanh_c[k],
        );
        dpre[k] = di * i[k] * (1.0 - i[k]);
        dpre[h + k] = df * f[k] * (1.0 - f[k]);
        dpre[2 * h + k] = dg * (1.0 - g[k] * g[k]);
        dpre[3 * h + k] = dout * o[k] * (1.0 - o[k]);
        dc_prev[k] = dct * f[k];
    }
    outer_acc(&cache.input, &dpre, grad.w.data_mut());
    for (b, d) in grad.b.data_mut().iter_mut().zip(&dpre) {
        *b += d;
    }
    let mut dinput = vec![0.0; cache.input.len()];
    mat_vec_acc(p.w.data(), 4 * h, &dpre, &mut dinput);
    (dinput, dc_prev)
}

/// One LSTM step: `i, f, o = σ(·)`, `g = tanh(·)`, `c = f⊙c_prev + i⊙g`,
/// `h = o⊙tanh(c)`.
pub fn lstm_cell_step(
    x: &Tensor,
    h_prev: &Tensor,
    c_prev: &Tensor,
    params: &LstmCellParams,
) -> Result<(Tensor, Tensor)> {
    let h = params.hidden();
    if x.numel() != params.input_dim() {
        return Err(Error::ShapeMismatch {
            op: "lstm_cell_step",
            left: x.shape().to_vec(),
            right: vec![params.input_dim()],
        });
    }
    for t in [h_prev, c_prev] {
        if t.numel() != h {
            return Err(Error::ShapeMismatch {
                op: "lstm_cell_step",
                left: t.shape().to_vec(),
                right: vec![h],
            });
        }
    }
    let cache = lstm_forward(params, x.data(), h_prev.data(), c_prev.data());
    Ok((Tensor::vector(cache.h), Tensor::vector(cache.c)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{finite_diff_grad, max_relative_error, ABS_FLOOR, DEFAULT_EPSILON};
    use crate::stats;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn random_cell(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> LstmCellParams {
        LstmCellParams {
            w: Tensor::new(
                vec![input + hidden, 4 * hidden],
                random_vec((input + hidden) * 4 * hidden, rng),
            )
            .unwrap(),
            b: Tensor::vector(random_vec(4 * hidden, rng)),
        }
    }

    /// Gate-by-gate scalar reimplementation, written independently of the
    /// stacked-matrix kernel.
    fn scalar_oracle(
        x: &[f64],
        hp: &[f64],
        cp: &[f64],
        p: &LstmCellParams,
    ) -> (Vec<f64>, Vec<f64>) {
        let h = hp.len();
        let w = |row: usize, col: usize| p.w.data()[row * 4 * h + col];
        let pre = |gate: usize, k: usize| {
            let col = gate * h + k;
            let mut s = p.b.data()[col];
            for (r, xr) in x.iter().chain(hp).enumerate() {
                s += xr * w(r, col);
            }
            s
        };
        let mut hs = vec![0.0; h];
        let mut cs = vec![0.0; h];
        for k in 0..h {
            let i = 1.0 / (1.0 + (-pre(0, k)).exp());
            let f = 1.0 / (1.0 + (-pre(1, k)).exp());
            let g = pre(2, k).tanh();
            let o = 1.0 / (1.0 + (-pre(3, k)).exp());
            cs[k] = f * cp[k] + i * g;
            hs[k] = o * cs[k].tanh();
        }
        (hs, cs)
    }

    #[test]
    fn zero_everything_is_fixed_point() {
        let p = LstmCellParams::zeros(3, 2);
        let (h, c) = lstm_cell_step(
            &Tensor::zeros(&[3]),
            &Tensor::zeros(&[2]),
            &Tensor::zeros(&[2]),
            &p,
        )
        .unwrap();
        assert_eq!(h.data(), &[0.0, 0.0]);
        assert_eq!(c.data(), &[0.0, 0.0]);
    }

    #[test]
    fn forget_bias_scales_cell_state() {
        let mut p = LstmCellParams::zeros(2, 3);
        p.b.data_mut()[3..6].fill(1.0);
        let v = vec![0.5, -2.0, 4.0];
        let (_, c) = lstm_cell_step(
            &Tensor::zeros(&[2]),
            &Tensor::zeros(&[3]),
            &Tensor::vector(v.clone()),
            &p,
        )
        .unwrap();
        let s1 = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((s1 - 0.7311).abs() < 1e-4);
        for (ck, vk) in c.data().iter().zip(&v) {
            assert!((ck - s1 * vk).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let p = random_cell(5, 4, &mut rng);
        let (x, hp, cp) = (
            random_vec(5, &mut rng),
            random_vec(4, &mut rng),
            random_vec(4, &mut rng),
        );
        let (h, c) = lstm_cell_step(
            &Tensor::vector(x.clone()),
            &Tensor::vector(hp.clone()),
            &Tensor::vector(cp.clone()),
            &p,
        )
        .unwrap();
        let (ho, co) = scalar_oracle(&x, &hp, &cp, &p);
        for (a, b) in h.data().iter().zip(&ho).chain(c.data().iter().zip(&co)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn counts_gate_matmul() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_cell(6, 5, &mut rng);
        let (_, s) = stats::measure(|| lstm_forward(&p, &[0.1; 6], &[0.0; 5], &[0.0; 5]));
        assert_eq!(s.mul_add_count, 4 * 5 * (6 + 5));
    }

    #[test]
    fn shape_errors() {
        let p = LstmCellParams::zeros(3, 2);
        assert!(lstm_cell_step(
            &Tensor::zeros(&[4]),
            &Tensor::zeros(&[2]),
            &Tensor::zeros(&[2]),
            &p
        )
        .is_err());
        assert!(lstm_cell_step(
            &Tensor::zeros(&[3]),
            &Tensor::zeros(&[3]),
            &Tensor::zeros(&[2]),
            &p
        )
        .is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (n_in, h) = (3, 4);
        let p = random_cell(n_in, h, &mut rng);
        let x = random_vec(n_in, &mut rng);
        let hp = random_vec(h, &mut rng);
        let cp = random_vec(h, &mut rng);
        let wh = random_vec(h, &mut rng);
        let wc = random_vec(h, &mut rng);
        // objective: wh·h + wc·c
        let objective = |ps: &Vec<Tensor>| {
            let cell = LstmCellParams {
                w: ps[0].clone(),
                b: ps[1].clone(),
            };
            let cache = lstm_forward(&cell, ps[2].data(), ps[3].data(), ps[4].data());
            cache
                .h
                .iter()
                .zip(&wh)
                .chain(cache.c.iter().zip(&wc))
                .map(|(a, b)| a * b)
                .sum::<f64>()
        };

        let cache = lstm_forward(&p, &x, &hp, &cp);
        let mut grad = LstmCellParams::zeros(n_in, h);
        let (dinput, dc_prev) = lstm_backward(&p, &cache, &wh, &wc, &mut grad);

        let mut ps = vec![
            p.w.clone(),
            p.b.clone(),
            Tensor::vector(x),
            Tensor::vector(hp),
            Tensor::vector(cp),
        ];
        let num = finite_diff_grad(objective, &mut ps, DEFAULT_EPSILON).unwrap();
        assert!(max_relative_error(grad.w.data(), &num[0].values, ABS_FLOOR) < 1e-4);
        assert!(max_relative_error(grad.b.data(), &num[1].values, ABS_FLOOR) < 1e-4);
        assert!(max_relative_error(&dinput[..n_in], &num[2].values, ABS_FLOOR) < 1e-4);
        assert!(max_relative_error(&dinput[n_in..], &num[3].values, ABS_FLOOR) < 1e-4);
        assert!(max_relative_error(&dc_prev, &num[4].values, ABS_FLOOR) < 1e-4);
    }
}
