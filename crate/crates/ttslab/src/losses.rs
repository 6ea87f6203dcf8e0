//! Adversarial and classification objectives: least-squares GAN losses,
//! Wasserstein losses with gradient penalty, and categorical log loss.

use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::functional::{nll_from_logits, sigmoid};
use crate::autodiff::{grad, Graph, Var};
use crate::error::{Error, Result};

/// Label-side knobs for the least-squares objective.
#[derive(Debug, Clone, Copy)]
pub struct MseLabels {
    /// Target for real samples on the discriminator (1.0, or e.g. 0.9 for
    /// soft labels).
    pub real_label: f64,
    /// Target for fake samples on the discriminator (usually 0.0).
    pub fake_label: f64,
    /// Swap the real/fake targets on the discriminator side.
    pub flip_labels: bool,
}

impl Default for MseLabels {
    fn default() -> Self {
        MseLabels { real_label: 1.0, fake_label: 0.0, flip_labels: false }
    }
}

impl MseLabels {
    fn effective(&self) -> (f64, f64) {
        if self.flip_labels {
            (self.fake_label, self.real_label)
        } else {
            (self.real_label, self.fake_label)
        }
    }
}

fn mse_to_scalar(scores: &Var, target: f64) -> Var {
    scores.add_scalar(-target).square().mean_all()
}

/// Least-squares discriminator loss on raw scores:
/// `E[(sigma(D(x)) - a)^2] + E[(sigma(D(G(z))) - b)^2]` with effective
/// targets `(a, b)` after optional flipping.
pub fn mse_d_loss(real_scores: &Var, fake_scores: &Var, labels: &MseLabels) -> Var {
    let (a, b) = labels.effective();
    let pr = sigmoid(real_scores);
    let pf = sigmoid(fake_scores);
    mse_to_scalar(&pr, a).add(&mse_to_scalar(&pf, b))
}

/// Least-squares generator loss: `E[(sigma(D(G(z))) - real)^2]`. The
/// generator always chases the (unflipped) real target.
pub fn mse_g_loss(fake_scores: &Var, labels: &MseLabels) -> Var {
    mse_to_scalar(&sigmoid(fake_scores), labels.real_label)
}

/// Wasserstein pieces. `adv = E[D(real)] - E[D(fake)]`; the critic maximizes
/// it, so its loss contribution is the negation.
pub struct WganAdv {
    pub adv: Var,
    pub d_loss: Var,
    pub g_loss: Var,
}

pub fn wgan_adv_losses(real_scores: &Var, fake_scores: &Var) -> WganAdv {
    let adv = real_scores.mean_all().sub(&fake_scores.mean_all());
    WganAdv { d_loss: adv.neg(), g_loss: fake_scores.mean_all().neg(), adv }
}

/// Draws per-sample interpolates `xhat = eps * real + (1 - eps) * fake`
/// with eps ~ U(0,1), as a differentiable leaf on `graph`.
pub fn interpolate(
    graph: &Graph,
    real: &ArrayD<f64>,
    fake: &ArrayD<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<Var> {
    if real.shape() != fake.shape() {
        return Err(Error::Usage(format!(
            "gradient penalty shape mismatch: {:?} vs {:?}",
            real.shape(),
            fake.shape()
        )));
    }
    let b = real.shape()[0];
    if b == 0 {
        return Err(Error::Usage("empty batch".into()));
    }
    let per_sample = real.len() / b;
    let mut interp = ArrayD::zeros(IxDyn(real.shape()));
    {
        let ri = real.as_standard_layout();
        let fi = fake.as_standard_layout();
        let rs = ri.as_slice().unwrap();
        let fs = fi.as_slice().unwrap();
        let out = interp.as_slice_mut().unwrap();
        for i in 0..b {
            let eps: f64 = rng.gen();
            for j in 0..per_sample {
                let idx = i * per_sample + j;
                out[idx] = eps * rs[idx] + (1.0 - eps) * fs[idx];
            }
        }
    }
    Ok(graph.leaf(interp))
}

/// Gradient penalty `E[(||grad_xhat D(xhat)||_2 - 1)^2]` where `scores` is
/// the `(B,)` critic output evaluated at the interpolate leaf `xhat`. The
/// result stays connected to the critic parameters, so differentiating it
/// again reaches them (double backward).
pub fn gradient_penalty(scores: &Var, xhat: &Var) -> Result<Var> {
    let xshape = xhat.shape();
    let b = xshape[0];
    if scores.shape() != vec![b] {
        return Err(Error::Usage(format!(
            "critic must return (B,) scores, got {:?}",
            scores.shape()
        )));
    }
    let per_sample: usize = xshape[1..].iter().product();
    let gx = grad(&scores.sum_all(), &[xhat.clone()])[0]
        .clone()
        .ok_or_else(|| Error::Internal("critic output does not depend on its input".into()))?;
    let norms = gx.square().reshape(&[b, per_sample]).sum_axis(1).sqrt();
    Ok(norms.add_scalar(-1.0).square().mean_all())
}

/// Categorical cross-entropy (mean NLL) from raw logits.
pub fn categorical_loss(logits: &Var, labels: &[u32], num_classes: usize) -> Result<Var> {
    if logits.shape() != vec![labels.len(), num_classes] {
        return Err(Error::Usage(format!(
            "logit shape {:?} does not match {} labels x {num_classes} classes",
            logits.shape(),
            labels.len()
        )));
    }
    let mut onehot = ArrayD::zeros(IxDyn(&[labels.len(), num_classes]));
    for (i, &l) in labels.iter().enumerate() {
        if l as usize >= num_classes {
            return Err(Error::Usage(format!("label {l} out of range [0, {num_classes})")));
        }
        onehot[[i, l as usize]] = 1.0;
    }
    Ok(nll_from_logits(logits, &logits.graph().constant(onehot)))
}
