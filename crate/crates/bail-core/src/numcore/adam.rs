//! Bias-corrected Adam updates over [`MlpParams`]-shaped values.

use crate::error::{Error, Result};

use super::{MlpGradients, MlpParams, Scalar};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// First and second moment estimates tracking one parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<F> {
    pub step_count: u64,
    pub first_moment: MlpParams<F>,
    pub second_moment: MlpParams<F>,
    pub beta1: F,
    pub beta2: F,
    pub epsilon: F,
}

impl<F: Scalar> AdamState<F> {
    /// Fresh zeroed state shaped like `params`, with the usual constants.
    pub fn new(params: &MlpParams<F>) -> Self {
        AdamState {
            step_count: 0,
            first_moment: MlpParams::zeros(params.layer_sizes()).unwrap(),
            second_moment: MlpParams::zeros(params.layer_sizes()).unwrap(),
            beta1: F::c(ADAM_BETA1),
            beta2: F::c(ADAM_BETA2),
            epsilon: F::c(ADAM_EPSILON),
        }
    }
}

/// One Adam step; returns the updated parameters and state, leaving the
/// arguments untouched.
pub fn adam_step<F: Scalar>(
    params: &MlpParams<F>,
    grads: &MlpGradients<F>,
    state: &AdamState<F>,
    learning_rate: F,
) -> Result<(MlpParams<F>, AdamState<F>)> {
    if !params.same_shape(grads) || !params.same_shape(&state.first_moment) {
        return Err(Error::Shape {
            context: "adam step",
            expected: format!("{:?}", params.layer_sizes()),
            got: format!("{:?}", grads.layer_sizes()),
        });
    }
    if learning_rate <= F::zero() {
        return Err(Error::Config(format!(
            "learning rate must be positive, got {learning_rate}"
        )));
    }
    if !grads.all_finite() {
        return Err(Error::NonFinite {
            context: "adam gradients",
        });
    }

    let mut state = state.clone();
    state.step_count += 1;
    let t = state.step_count as i32;
    let one = F::one();
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let bc1 = one - b1.powi(t);
    let bc2 = one - b2.powi(t);

    state
        .first_moment
        .zip_apply(grads, |m, g| *m = b1 * *m + (one - b1) * g);
    state
        .second_moment
        .zip_apply(grads, |v, g| *v = b2 * *v + (one - b2) * g * g);

    let mut updated = params.clone();
    // walk first and second moments in lockstep via flat views
    let m_flat = state.first_moment.to_flat();
    let v_flat = state.second_moment.to_flat();
    let mut i = 0;
    updated.zip_apply(params, |p, _| {
        let m_hat = m_flat[i] / bc1;
        let v_hat = v_flat[i] / bc2;
        *p = *p - learning_rate * m_hat / (v_hat.sqrt() + eps);
        i += 1;
    });
    Ok((updated, state))
}
