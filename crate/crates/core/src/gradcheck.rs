//! Central finite-difference gradient estimates, used as the independent
//! oracle for every hand-written backward pass.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A collection of named parameter tensors that can be walked in a fixed order.
pub trait Parameters {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor));

    /// Total number of scalar parameters.
    fn scalar_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t| n += t.numel());
        n
    }
}

impl Parameters for Tensor {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        f("value", self)
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f("value", self)
    }
}

impl Parameters for Vec<Tensor> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        for (i, t) in self.iter().enumerate() {
            f(&i.to_string(), t);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (i, t) in self.iter_mut().enumerate() {
            f(&i.to_string(), t);
        }
    }
}

/// Finite-difference estimate for one parameter tensor.
#[derive(Debug, Clone)]
pub struct NumericGrad {
    pub name: String,
    pub values: Vec<f64>,
}

pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Smallest denominator used by [`relative_error`]. Central differences at
/// `DEFAULT_EPSILON` are off by ~1e-11, which swamps derivatives near 1e-8.
pub const ABS_FLOOR: f64 = 1e-7;

/// Estimate `∂f/∂θ` for every scalar θ in `params` with the central difference
/// `(f(θ+ε) − f(θ−ε)) / 2ε`. Parameters are restored before returning.
pub fn finite_diff_grad<P, F>(mut f: F, params: &mut P, epsilon: f64) -> Result<Vec<NumericGrad>>
where
    P: Parameters,
    F: FnMut(&P) -> f64,
{
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let mut layout = Vec::new();
    params.visit(&mut |name, t| layout.push((name.to_string(), t.numel())));

    let mut out = Vec::with_capacity(layout.len());
    for (ti, (name, numel)) in layout.into_iter().enumerate() {
        let mut values = Vec::with_capacity(numel);
        for j in 0..numel {
            let original = scalar(params, ti, j);
            set_scalar(params, ti, j, original + epsilon);
            let plus = f(params);
            set_scalar(params, ti, j, original - epsilon);
            let minus = f(params);
            set_scalar(params, ti, j, original);
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!(
                    "objective while perturbing {name}[{j}]"
                )));
            }
            values.push((plus - minus) / (2.0 * epsilon));
        }
        out.push(NumericGrad { name, values });
    }
    Ok(out)
}

fn scalar<P: Parameters>(params: &P, ti: usize, j: usize) -> f64 {
    let mut idx = 0;
    let mut v = 0.0;
    params.visit(&mut |_, t| {
        if idx == ti {
            v = t.data()[j];
        }
        idx += 1;
    });
    v
}

fn set_scalar<P: Parameters>(params: &mut P, ti: usize, j: usize, value: f64) {
    let mut idx = 0;
    params.visit_mut(&mut |_, t| {
        if idx == ti {
            t.data_mut()[j] = value;
        }
        idx += 1;
    });
}

/// `|a - n| / max(|a|, |n|, abs_floor)`. The floor keeps near-zero
/// derivatives from turning rounding noise into huge ratios.
pub fn relative_error(analytic: f64, numeric: f64, abs_floor: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(abs_floor)
}

/// Largest relative error over a pair of equally shaped gradient lists.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], abs_floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n, abs_floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{
        activation, activation_backward, matmul, matmul_backward, softmax, softmax_backward,
        Activation,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const REL_TOL: f64 = 1e-4;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(
            shape.to_vec(),
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn square_derivative() {
        let mut theta = Tensor::vector(vec![3.0]);
        let g = finite_diff_grad(
            |t: &Tensor| t.data()[0].powi(2),
            &mut theta,
            DEFAULT_EPSILON,
        )
        .unwrap();
        assert!((g[0].values[0] - 6.0).abs() < 1e-6);
        assert_eq!(theta.data(), &[3.0]);
    }

    #[test]
    fn constant_has_zero_gradient() {
        let mut theta = vec![Tensor::vector(vec![1.0, -2.0]), Tensor::zeros(&[2, 2])];
        let g = finite_diff_grad(|_: &Vec<Tensor>| 4.2, &mut theta, DEFAULT_EPSILON).unwrap();
        assert!(g.iter().flat_map(|n| &n.values).all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_epsilon_and_nan() {
        let mut theta = Tensor::vector(vec![1.0]);
        assert!(finite_diff_grad(|_: &Tensor| 0.0, &mut theta, 0.0).is_err());
        assert!(finite_diff_grad(|_: &Tensor| f64::NAN, &mut theta, 1e-5).is_err());
    }

    // Each primitive's backward pass, checked on the scalar objective
    // Σ w ⊙ op(x) with fixed random weights w.

    #[test]
    fn matmul_backward_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = random(&[3, 4], &mut rng);
        let b = random(&[4, 2], &mut rng);
        let w = random(&[3, 2], &mut rng);
        let (da, db) = matmul_backward(&a, &b, &w).unwrap();

        let objective = |p: &Vec<Tensor>| {
            let y = matmul(&p[0], &p[1]).unwrap();
            y.data()
                .iter()
                .zip(w.data())
                .map(|(a, b)| a * b)
                .sum::<f64>()
        };
        let mut params = vec![a, b];
        let num = finite_diff_grad(objective, &mut params, DEFAULT_EPSILON).unwrap();
        assert!(max_relative_error(da.data(), &num[0].values, ABS_FLOOR) < REL_TOL);
        assert!(max_relative_error(db.data(), &num[1].values, ABS_FLOOR) < REL_TOL);
    }

    #[test]
    fn activation_backward_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for kind in [Activation::Sigmoid, Activation::Tanh] {
            let x = random(&[6], &mut rng).map(|v| 3.0 * v);
            let w = random(&[6], &mut rng);
            let y = activation(&x, kind);
            let dx = activation_backward(&y, &w, kind).unwrap();
            let mut p = x;
            let num = finite_diff_grad(
                |t: &Tensor| {
                    activation(t, kind)
                        .data()
                        .iter()
                        .zip(w.data())
                        .map(|(a, b)| a * b)
                        .sum()
                },
                &mut p,
                DEFAULT_EPSILON,
            )
            .unwrap();
            assert!(max_relative_error(dx.data(), &num[0].values, ABS_FLOOR) < REL_TOL);
        }
    }

    #[test]
    fn softmax_backward_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mask = [true, true, false, true, true];
        let x = random(&[5], &mut rng);
        let w = random(&[5], &mut rng);
        let y = softmax(&x, Some(&mask)).unwrap();
        let dx = softmax_backward(&y, &w).unwrap();
        let mut p = x;
        let num = finite_diff_grad(
            |t: &Tensor| {
                softmax(t, Some(&mask))
                    .unwrap()
                    .data()
                    .iter()
                    .zip(w.data())
                    .map(|(a, b)| a * b)
                    .sum()
            },
            &mut p,
            DEFAULT_EPSILON,
        )
        .unwrap();
        assert!(max_relative_error(dx.data(), &num[0].values, ABS_FLOOR) < REL_TOL);
        assert_eq!(dx.data()[2], 0.0);
    }

    #[test]
    fn relative_error_floor() {
        assert!((relative_error(1e-9, 2e-9, 1e-7) - 1e-2).abs() < 1e-12);
        assert_eq!(relative_error(0.5, 0.5, 1e-7), 0.0);
        assert!((relative_error(1.0, 1.1, 1e-7) - 0.1 / 1.1).abs() < 1e-12);
    }
}
