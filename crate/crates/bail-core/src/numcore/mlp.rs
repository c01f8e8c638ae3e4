//! Dense feed-forward network: parameters, forward pass, reverse-mode gradients.
//!
//! Hidden layers use ReLU, the output layer is linear with a bias. The ReLU
//! subgradient at exactly zero is taken as zero, so every operation here is a
//! pure function of its arguments.

use rand::Rng;

use crate::error::{Error, Result};

use super::{Matrix, Scalar};

/// Weights and biases of a dense MLP.
///
/// `layer_sizes` is `[input_dim, hidden..., output_dim]`; layer `l` maps
/// `layer_sizes[l] -> layer_sizes[l+1]` with a row-major `[out x in]` weight
/// matrix and an `out`-length bias vector.
///
/// The same container also carries gradients (see [`mlp_gradient`]) and Adam
/// moment estimates, which share its shape.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams<F> {
    layer_sizes: Vec<usize>,
    weights: Vec<Matrix<F>>,
    biases: Vec<Vec<F>>,
}

/// Gradients of a scalar loss with respect to every parameter, same shape as
/// the parameters they differentiate.
pub type MlpGradients<F> = MlpParams<F>;

impl<F: Scalar> MlpParams<F> {
    fn validate_sizes(layer_sizes: &[usize]) -> Result<()> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config(format!(
                "a network needs at least input and output sizes, got {layer_sizes:?}"
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::Config(format!(
                "layer sizes must be positive, got {layer_sizes:?}"
            )));
        }
        Ok(())
    }

    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        Self::validate_sizes(layer_sizes)?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in layer_sizes.windows(2) {
            weights.push(Matrix::zeros(w[1], w[0]));
            biases.push(vec![F::zero(); w[1]]);
        }
        Ok(MlpParams {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
        })
    }

    /// Seeded initialization: every weight and bias uniform in
    /// `[-1/sqrt(fan_in), +1/sqrt(fan_in)]`.
    pub fn init_uniform<R: Rng>(layer_sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut params = Self::zeros(layer_sizes)?;
        for l in 0..params.weights.len() {
            let fan_in = params.layer_sizes[l];
            let limit = 1.0 / (fan_in as f64).sqrt();
            for w in params.weights[l].data_mut() {
                *w = F::c(rng.gen_range(-limit..=limit));
            }
            for b in &mut params.biases[l] {
                *b = F::c(rng.gen_range(-limit..=limit));
            }
        }
        Ok(params)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn in_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Matrix<F>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<F>] {
        &self.biases
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.layer_sizes == other.layer_sizes
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().all(Matrix::all_finite)
            && self.biases.iter().flatten().all(|v| v.is_finite())
    }

    /// Squared L2 norm over weight matrices only; biases are excluded.
    pub fn weight_sq_norm(&self) -> F {
        self.weights
            .iter()
            .flat_map(|w| w.data().iter())
            .map(|&w| w * w)
            .sum()
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[1] * w[0] + w[1])
            .sum()
    }

    /// Flatten to a single vector: per layer, weights row-major then biases.
    pub fn to_flat(&self) -> Vec<F> {
        let mut flat = Vec::with_capacity(self.param_count());
        for l in 0..self.weights.len() {
            flat.extend_from_slice(self.weights[l].data());
            flat.extend_from_slice(&self.biases[l]);
        }
        flat
    }

    /// Inverse of [`to_flat`](Self::to_flat).
    pub fn from_flat(layer_sizes: &[usize], flat: &[F]) -> Result<Self> {
        let mut params = Self::zeros(layer_sizes)?;
        if flat.len() != params.param_count() {
            return Err(Error::LengthMismatch {
                context: "flat parameter vector",
                left: flat.len(),
                right: params.param_count(),
            });
        }
        let mut off = 0;
        for l in 0..params.weights.len() {
            let wn = params.weights[l].data().len();
            params.weights[l]
                .data_mut()
                .copy_from_slice(&flat[off..off + wn]);
            off += wn;
            let bn = params.biases[l].len();
            params.biases[l].copy_from_slice(&flat[off..off + bn]);
            off += bn;
        }
        Ok(params)
    }

    /// Apply `f` to every (self, other) parameter pair, writing into self.
    pub(crate) fn zip_apply(&mut self, other: &Self, mut f: impl FnMut(&mut F, F)) {
        debug_assert!(self.same_shape(other));
        for l in 0..self.weights.len() {
            for (a, &b) in self.weights[l]
                .data_mut()
                .iter_mut()
                .zip(other.weights[l].data())
            {
                f(a, b);
            }
            for (a, &b) in self.biases[l].iter_mut().zip(&other.biases[l]) {
                f(a, b);
            }
        }
    }

    /// Add `2 * lambda * w` to the weight gradients; biases stay unpenalized.
    pub fn add_l2_weight_grad(&mut self, params: &Self, lambda: F) {
        debug_assert!(self.same_shape(params));
        let coeff = F::two() * lambda;
        for l in 0..self.weights.len() {
            for (g, &w) in self.weights[l]
                .data_mut()
                .iter_mut()
                .zip(params.weights[l].data())
            {
                *g = *g + coeff * w;
            }
        }
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [Matrix<F>] {
        &mut self.weights
    }

    pub(crate) fn biases_mut(&mut self) -> &mut [Vec<F>] {
        &mut self.biases
    }
}

fn check_input_shape<F: Scalar>(params: &MlpParams<F>, inputs: &Matrix<F>) -> Result<()> {
    if inputs.cols() != params.in_dim() {
        return Err(Error::Shape {
            context: "mlp inputs",
            expected: format!("n x {}", params.in_dim()),
            got: format!("{} x {}", inputs.rows(), inputs.cols()),
        });
    }
    Ok(())
}

fn affine<F: Scalar>(weights: &Matrix<F>, bias: &[F], inputs: &Matrix<F>) -> Matrix<F> {
    let n = inputs.rows();
    let out_dim = weights.rows();
    let mut out = Matrix::zeros(n, out_dim);
    for i in 0..n {
        let x = inputs.row(i);
        let y = out.row_mut(i);
        for (o, yo) in y.iter_mut().enumerate() {
            let mut acc = bias[o];
            for (w, &xv) in weights.row(o).iter().zip(x) {
                acc = acc + *w * xv;
            }
            *yo = acc;
        }
    }
    out
}

/// Forward pass over a batch of inputs `[n x in_dim]` -> `[n x out_dim]`.
pub fn mlp_forward<F: Scalar>(params: &MlpParams<F>, inputs: &Matrix<F>) -> Result<Matrix<F>> {
    check_input_shape(params, inputs)?;
    let last = params.n_layers() - 1;
    let mut act = affine(&params.weights[0], &params.biases[0], inputs);
    if last > 0 {
        relu_inplace(&mut act);
        for l in 1..=last {
            act = affine(&params.weights[l], &params.biases[l], &act);
            if l < last {
                relu_inplace(&mut act);
            }
        }
    }
    Ok(act)
}

fn relu_inplace<F: Scalar>(m: &mut Matrix<F>) {
    for v in m.data_mut() {
        if *v < F::zero() {
            *v = F::zero();
        }
    }
}

/// Forward pass keeping every post-activation layer output, for backprop.
fn forward_cached<F: Scalar>(params: &MlpParams<F>, inputs: &Matrix<F>) -> Vec<Matrix<F>> {
    let last = params.n_layers() - 1;
    let mut acts = Vec::with_capacity(params.n_layers());
    let mut act = affine(&params.weights[0], &params.biases[0], inputs);
    if last > 0 {
        relu_inplace(&mut act);
    }
    acts.push(act);
    for l in 1..=last {
        let mut next = affine(&params.weights[l], &params.biases[l], &acts[l - 1]);
        if l < last {
            relu_inplace(&mut next);
        }
        acts.push(next);
    }
    acts
}

/// Exact reverse-mode gradients of the scalar loss whose per-output partials
/// are `output_grad` (`dL/dy`, shape `[n x out_dim]`).
pub fn mlp_gradient<F: Scalar>(
    params: &MlpParams<F>,
    inputs: &Matrix<F>,
    output_grad: &Matrix<F>,
) -> Result<MlpGradients<F>> {
    check_input_shape(params, inputs)?;
    if output_grad.rows() != inputs.rows() || output_grad.cols() != params.out_dim() {
        return Err(Error::Shape {
            context: "mlp output gradient",
            expected: format!("{} x {}", inputs.rows(), params.out_dim()),
            got: format!("{} x {}", output_grad.rows(), output_grad.cols()),
        });
    }
    if !inputs.all_finite() {
        return Err(Error::NonFinite {
            context: "mlp gradient inputs",
        });
    }
    if !output_grad.all_finite() {
        return Err(Error::NonFinite {
            context: "mlp output gradient",
        });
    }

    let acts = forward_cached(params, inputs);
    let mut grads = MlpParams::zeros(&params.layer_sizes)?;
    let n = inputs.rows();
    let last = params.n_layers() - 1;

    // delta holds dL/dz for the current layer; the output layer is linear so
    // delta starts as output_grad itself.
    let mut delta = output_grad.clone();
    for l in (0..=last).rev() {
        let layer_in: &Matrix<F> = if l == 0 { inputs } else { &acts[l - 1] };
        {
            let dw = grads.weights_mut()[l].data_mut();
            let in_dim = params.layer_sizes[l];
            for i in 0..n {
                let x = layer_in.row(i);
                let d = delta.row(i);
                for (o, &dz) in d.iter().enumerate() {
                    let row = o * in_dim;
                    for (j, &xv) in x.iter().enumerate() {
                        dw[row + j] = dw[row + j] + dz * xv;
                    }
                }
            }
        }
        {
            let db = &mut grads.biases_mut()[l];
            for i in 0..n {
                for (o, &dz) in delta.row(i).iter().enumerate() {
                    db[o] = db[o] + dz;
                }
            }
        }
        if l > 0 {
            // dL/d(act_{l-1}) masked by the ReLU derivative (1 where act > 0).
            let mut prev = Matrix::zeros(n, params.layer_sizes[l]);
            let w = &params.weights[l];
            for i in 0..n {
                let d = delta.row(i);
                let a = acts[l - 1].row(i);
                let p = prev.row_mut(i);
                for (o, &dz) in d.iter().enumerate() {
                    for (j, &wv) in w.row(o).iter().enumerate() {
                        p[j] = p[j] + dz * wv;
                    }
                }
                for (pj, &aj) in p.iter_mut().zip(a) {
                    if aj <= F::zero() {
                        *pj = F::zero();
                    }
                }
            }
            delta = prev;
        }
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_forward_is_output_bias() {
        let mut params = MlpParams::<f64>::zeros(&[3, 4, 1]).unwrap();
        params.biases_mut()[1][0] = 2.5;
        let inputs = Matrix::from_rows(&[vec![1.0, -2.0, 3.0], vec![0.0, 0.0, 0.0]]);
        let out = mlp_forward(&params, &inputs).unwrap();
        assert_eq!(out.row(0), &[2.5]);
        assert_eq!(out.row(1), &[2.5]);
    }

    #[test]
    fn single_linear_layer_matches_hand_multiply() {
        // W = [[2]], b = [1], input [3] -> 7.
        let mut params = MlpParams::<f64>::zeros(&[1, 1]).unwrap();
        params.weights_mut()[0].data_mut()[0] = 2.0;
        params.biases_mut()[0][0] = 1.0;
        let out = mlp_forward(&params, &Matrix::from_rows(&[vec![3.0]])).unwrap();
        assert_eq!(out.row(0), &[7.0]);
    }

    #[test]
    fn relu_kills_negative_hidden_unit() {
        // Hidden W = [[-1]], b = [0]: input 5 -> hidden 0 -> output = final bias.
        let mut params = MlpParams::<f64>::zeros(&[1, 1, 1]).unwrap();
        params.weights_mut()[0].data_mut()[0] = -1.0;
        params.weights_mut()[1].data_mut()[0] = 3.0;
        params.biases_mut()[1][0] = 0.25;
        let out = mlp_forward(&params, &Matrix::from_rows(&[vec![5.0]])).unwrap();
        assert_eq!(out.row(0), &[0.25]);
    }

    #[test]
    fn forward_rejects_shape_mismatch() {
        let params = MlpParams::<f64>::zeros(&[3, 1]).unwrap();
        let err = mlp_forward(&params, &Matrix::from_rows(&[vec![1.0, 2.0]])).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_parameter_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let params = MlpParams::<f64>::init_uniform(&[2, 5, 2], &mut rng).unwrap();
        let inputs = Matrix::from_rows(&[vec![0.3, -0.8], vec![1.0, 0.1]]);
        let zero = Matrix::zeros(2, 2);
        let grads = mlp_gradient(&params, &inputs, &zero).unwrap();
        assert!(grads.to_flat().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn one_layer_squared_loss_gradient_matches_hand_derivative() {
        // Loss (Wx + b - y)^2: dW = 2(Wx+b-y)x, db = 2(Wx+b-y).
        let mut params = MlpParams::<f64>::zeros(&[1, 1]).unwrap();
        params.weights_mut()[0].data_mut()[0] = 1.5;
        params.biases_mut()[0][0] = -0.5;
        let (x, y) = (2.0, 4.0);
        let pred = 1.5 * x - 0.5;
        let residual_grad = 2.0 * (pred - y);
        let grads = mlp_gradient(
            &params,
            &Matrix::from_rows(&[vec![x]]),
            &Matrix::from_rows(&[vec![residual_grad]]),
        )
        .unwrap();
        assert!((grads.weights()[0].data()[0] - residual_grad * x).abs() < 1e-12);
        assert!((grads.biases()[0][0] - residual_grad).abs() < 1e-12);
    }

    #[test]
    fn gradient_rejects_non_finite_input() {
        let params = MlpParams::<f64>::zeros(&[1, 1]).unwrap();
        let err = mlp_gradient(
            &params,
            &Matrix::from_rows(&[vec![f64::NAN]]),
            &Matrix::from_rows(&[vec![1.0]]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn flat_round_trip_preserves_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = MlpParams::<f64>::init_uniform(&[3, 8, 2], &mut rng).unwrap();
        let back = MlpParams::from_flat(params.layer_sizes(), &params.to_flat()).unwrap();
        assert_eq!(params, back);
    }

    #[test]
    fn forward_works_at_f32() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = MlpParams::<f32>::init_uniform(&[2, 4, 1], &mut rng).unwrap();
        let out = mlp_forward(&params, &Matrix::from_rows(&[vec![0.5f32, -0.5]])).unwrap();
        assert!(out.row(0)[0].is_finite());
    }
}
