//! Composite operations assembled from the primitive op set. Keeping these
//! as compositions (rather than fused primitives) means their backward
//! rules fall out of the tape and remain differentiable themselves.

use ndarray::Axis;

use super::Var;

pub fn sigmoid(x: &Var) -> Var {
    let one = x.graph().scalar(1.0);
    one.div(&one.add(&x.neg().exp()))
}

/// tanh-approximation GELU.
pub fn gelu(x: &Var) -> Var {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let inner = x.add(&x.mul(x).mul(x).mul_scalar(0.044715)).mul_scalar(c);
    x.mul_scalar(0.5).mul(&inner.tanh().add_scalar(1.0))
}

/// Softmax over the last axis, stabilized by a detached row max.
pub fn softmax(x: &Var) -> Var {
    let shifted = x.sub(&row_max_const(x));
    let e = shifted.exp();
    let axis = x.shape().len() - 1;
    let mut keep = e.shape();
    let denom = e.sum_axis(axis);
    keep[axis] = 1;
    e.div(&denom.reshape(&keep))
}

/// Log-softmax over the last axis.
pub fn log_softmax(x: &Var) -> Var {
    let shifted = x.sub(&row_max_const(x));
    let axis = x.shape().len() - 1;
    let mut keep = shifted.shape();
    keep[axis] = 1;
    let lse = shifted.exp().sum_axis(axis).ln().reshape(&keep);
    shifted.sub(&lse)
}

fn row_max_const(x: &Var) -> Var {
    let v = x.value();
    let axis = v.ndim() - 1;
    let m = v.map_axis(Axis(axis), |row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    let mut shape = v.shape().to_vec();
    shape[axis] = 1;
    x.graph().constant(m.into_shape_with_order(ndarray::IxDyn(&shape)).unwrap())
}

/// Layer normalization over the last axis with learned scale and shift.
pub fn layer_norm(x: &Var, gamma: &Var, beta: &Var, eps: f64) -> Var {
    let axis = x.shape().len() - 1;
    let mut keep = x.shape();
    keep[axis] = 1;
    let mu = x.mean_axis(axis).reshape(&keep);
    let centered = x.sub(&mu);
    let var = centered.square().mean_axis(axis).reshape(&keep);
    let normed = centered.div(&var.add_scalar(eps).sqrt());
    normed.mul(gamma).add(beta)
}

/// `x @ w + b` with `w: (in, out)` and `b: (out,)`.
pub fn linear(x: &Var, w: &Var, b: &Var) -> Var {
    x.matmul(w).add(b)
}

/// Mean negative log-likelihood of integer targets under softmax logits
/// of shape `(B, K)`. `onehot` must be a constant `(B, K)` indicator.
pub fn nll_from_logits(logits: &Var, onehot: &Var) -> Var {
    let ls = log_softmax(logits);
    ls.mul(onehot).sum_all().neg().mul_scalar(1.0 / logits.shape()[0] as f64)
}
