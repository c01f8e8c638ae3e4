//! Loss functions: the asymmetric penalty loss used to fit upper envelopes,
//! and plain summed MSE for policy regression.

use crate::error::{Error, Result};

use super::{Matrix, MlpParams, Scalar};

/// Pointwise breakdown of a penalty-loss evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct LossReport<F> {
    /// Sum of `per_point` plus the `lambda * ||w||^2` term.
    pub total: F,
    pub per_point: Vec<F>,
    /// Number of points with `V(s_i) < G_i`.
    pub violation_count: usize,
}

/// Asymmetric squared loss: residuals below the target are weighted by `k`.
///
/// Per point: `(V - G)^2` if `V >= G`, else `k * (V - G)^2`. The second return
/// value is the gradient with respect to each value, `2(V - G)` or
/// `2k(V - G)`. The `lambda * ||w||^2` term enters `total` here; its parameter
/// gradient (`2 lambda w`, weight matrices only) is applied by trainers via
/// [`MlpParams::add_l2_weight_grad`].
pub fn penalty_loss<F: Scalar>(
    values: &[F],
    returns: &[F],
    k: F,
    params: &MlpParams<F>,
    lambda: F,
) -> Result<(LossReport<F>, Vec<F>)> {
    if values.len() != returns.len() {
        return Err(Error::LengthMismatch {
            context: "penalty loss",
            left: values.len(),
            right: returns.len(),
        });
    }
    if k < F::one() {
        return Err(Error::Config(format!("penalty coefficient K must be >= 1, got {k}")));
    }
    if lambda < F::zero() {
        return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
    }

    let mut per_point = Vec::with_capacity(values.len());
    let mut grad = Vec::with_capacity(values.len());
    let mut violation_count = 0;
    let two = F::two();
    for (&v, &g) in values.iter().zip(returns) {
        let r = v - g;
        let weight = if v >= g {
            F::one()
        } else {
            violation_count += 1;
            k
        };
        per_point.push(weight * r * r);
        grad.push(two * weight * r);
    }
    let total = per_point.iter().copied().sum::<F>() + lambda * params.weight_sq_norm();
    Ok((
        LossReport {
            total,
            per_point,
            violation_count,
        },
        grad,
    ))
}

/// Sum of squared differences over all entries, with gradient `2(pred - target)`.
pub fn mse_loss<F: Scalar>(
    predictions: &Matrix<F>,
    targets: &Matrix<F>,
) -> Result<(F, Matrix<F>)> {
    if predictions.rows() != targets.rows() || predictions.cols() != targets.cols() {
        return Err(Error::Shape {
            context: "mse loss",
            expected: format!("{} x {}", targets.rows(), targets.cols()),
            got: format!("{} x {}", predictions.rows(), predictions.cols()),
        });
    }
    let mut grad = Matrix::zeros(predictions.rows(), predictions.cols());
    let mut total = F::zero();
    let two = F::two();
    for ((&p, &t), g) in predictions
        .data()
        .iter()
        .zip(targets.data())
        .zip(grad.data_mut())
    {
        let r = p - t;
        total = total + r * r;
        *g = two * r;
    }
    Ok((total, grad))
}
