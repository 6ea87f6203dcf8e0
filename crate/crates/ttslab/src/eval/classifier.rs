//! Downstream 1-D CNN classifier and the real-versus-synthetic training
//! case study.

use std::collections::HashMap;

use ndarray::{ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::functional::{linear, nll_from_logits};
use crate::autodiff::{grad, Graph, Var};
use crate::error::{Error, Result};
use crate::eval::{classification_metrics, ClassificationMetrics};
use crate::params::{Adam, Init, ParamStore, Tensor32};
use crate::signal::{resample_balanced, SignalSet};

const KERNEL: usize = 5;
const WIDTHS: [usize; 3] = [16, 32, 64];

/// Training settings for the CNN.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FitParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for FitParams {
    fn default() -> Self {
        FitParams { epochs: 30, batch_size: 64, lr: 1e-3, seed: 0 }
    }
}

/// A trained classifier: three conv blocks (kernel 5, widths 16/32/64,
/// ReLU, max-pool 2) followed by global average pooling and a linear head.
pub struct Classifier {
    pub channels: usize,
    pub width: usize,
    pub num_classes: usize,
    pub params: ParamStore,
}

fn conv_widths(channels: usize) -> Vec<(usize, usize)> {
    let mut ins = vec![channels];
    ins.extend(&WIDTHS[..2]);
    ins.into_iter().zip(WIDTHS).collect()
}

fn init_classifier(channels: usize, num_classes: usize, seed: u64) -> ParamStore {
    let mut store = ParamStore::new();
    let mut init = Init::new(seed);
    for (i, (cin, cout)) in conv_widths(channels).into_iter().enumerate() {
        store.insert(&format!("c.blk{i}.w"), init.trunc_normal(&[cin * KERNEL, cout], 0.1));
        store.insert(&format!("c.blk{i}.b"), Tensor32::zeros(&[cout]));
    }
    store.insert("c.head.w", init.trunc_normal(&[WIDTHS[2], num_classes], 0.1));
    store.insert("c.head.b", Tensor32::zeros(&[num_classes]));
    store
}

/// Same-padded conv1d: `(B, Cin, L) -> (B, Cout, L)` via unfold + matmul.
fn conv1d_same(x: &Var, w: &Var, b: &Var, k: usize) -> Var {
    let shape = x.shape();
    let (bs, cin, l) = (shape[0], shape[1], shape[2]);
    let cout = w.shape()[1];
    let pad = (k - 1) / 2;
    let frames = x
        .pad_zero(2, pad, k - 1 - pad)
        .unfold_last(k, 1) // (B, Cin, L, k)
        .permute(&[0, 2, 1, 3]) // (B, L, Cin, k)
        .reshape(&[bs, l, cin * k]);
    linear(&frames, w, b).permute(&[0, 2, 1]).reshape(&[bs, cout, l])
}

fn forward(params: &crate::params::ParamVars, x: &Var, channels: usize, num_classes: usize) -> Var {
    let mut h = x.clone();
    for (i, _) in conv_widths(channels).into_iter().enumerate() {
        h = conv1d_same(&h, params.get(&format!("c.blk{i}.w")), params.get(&format!("c.blk{i}.b")), KERNEL)
            .relu()
            .maxpool_last(2);
    }
    let gap = h.mean_axis(2); // (B, 64)
    let logits = linear(&gap, params.get("c.head.w"), params.get("c.head.b"));
    debug_assert_eq!(logits.shape()[1], num_classes);
    logits
}

fn batch_tensor(set: &SignalSet, idx: &[usize]) -> ArrayD<f64> {
    let (c, w) = (set.channels(), set.width());
    let mut out = ArrayD::zeros(IxDyn(&[idx.len(), c, w]));
    for (bi, &i) in idx.iter().enumerate() {
        for ch in 0..c {
            for t in 0..w {
                out[[bi, ch, t]] = set.values[[i, ch, 0, t]] as f64;
            }
        }
    }
    out
}

fn onehot(graph: &Graph, labels: &[u32], k: usize) -> Var {
    let mut arr = ArrayD::zeros(IxDyn(&[labels.len(), k]));
    for (i, &l) in labels.iter().enumerate() {
        arr[[i, l as usize]] = 1.0;
    }
    graph.constant(arr)
}

impl Classifier {
    /// Trains on a labeled set with Adam and cross-entropy.
    pub fn fit(data: &SignalSet, num_classes: usize, fit: &FitParams) -> Result<Classifier> {
        let labels = data
            .labels
            .as_ref()
            .ok_or_else(|| Error::Usage("classifier training needs labels".into()))?;
        if num_classes < 2 || fit.epochs == 0 || fit.batch_size == 0 {
            return Err(Error::Config("invalid classifier settings".into()));
        }
        if data.width() < 8 {
            return Err(Error::Usage("signals too short for three pooling stages".into()));
        }
        let mut params = init_classifier(data.channels(), num_classes, fit.seed);
        let mut opt = Adam::new(fit.lr, 0.9, 0.999);
        let mut rng = ChaCha8Rng::seed_from_u64(fit.seed);
        let names: Vec<String> = params.names().to_vec();
        let n = data.n();
        for _ in 0..fit.epochs {
            // Fisher-Yates shuffle.
            let mut order: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                order.swap(i, rng.gen_range(0..=i));
            }
            for chunk in order.chunks(fit.batch_size) {
                let graph = Graph::new();
                let pv = params.leaves(&graph);
                let x = graph.constant(batch_tensor(data, chunk));
                let y: Vec<u32> = chunk.iter().map(|&i| labels[i]).collect();
                let logits = forward(&pv, &x, data.channels(), num_classes);
                let loss = nll_from_logits(&logits, &onehot(&graph, &y, num_classes));
                let v = loss.scalar_value();
                if !v.is_finite() {
                    return Err(Error::NanLoss { step: opt.t, term: "classifier".into() });
                }
                let vars = pv.var_list(&names);
                let gs = grad(&loss, &vars);
                let grads: HashMap<String, ArrayD<f64>> = names
                    .iter()
                    .zip(gs)
                    .filter_map(|(n, g)| g.map(|g| (n.clone(), g.value())))
                    .collect();
                opt.step(&mut params, &grads)?;
            }
        }
        Ok(Classifier { channels: data.channels(), width: data.width(), num_classes, params })
    }

    /// Predicted class per sample.
    pub fn predict(&self, data: &SignalSet) -> Result<Vec<u32>> {
        if data.channels() != self.channels {
            return Err(Error::Usage("channel count differs from training data".into()));
        }
        let mut out = Vec::with_capacity(data.n());
        for chunk in (0..data.n()).collect::<Vec<_>>().chunks(128) {
            let graph = Graph::new();
            let pv = self.params.leaves(&graph);
            let x = graph.constant(batch_tensor(data, chunk));
            let logits = forward(&pv, &x, self.channels, self.num_classes).value();
            for bi in 0..chunk.len() {
                let mut best = 0usize;
                for k in 1..self.num_classes {
                    if logits[[bi, k]] > logits[[bi, best]] {
                        best = k;
                    }
                }
                out.push(best as u32);
            }
        }
        Ok(out)
    }

    pub fn evaluate(&self, data: &SignalSet) -> Result<ClassificationMetrics> {
        let truth = data
            .labels
            .as_ref()
            .ok_or_else(|| Error::Usage("evaluation needs labels".into()))?;
        let predicted = self.predict(data)?;
        classification_metrics(truth, &predicted, self.num_classes)
    }
}

/// The four training compositions compared by the case study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseStudyMode {
    /// Full real training set.
    RealFull,
    /// Synthetic data only, same size as the full real set.
    SyntheticOnly,
    /// Reduced real training set.
    RealReduced,
    /// Reduced real set augmented with synthetic data up to full size.
    RealReducedPlusSynthetic,
}

/// Sizing and training knobs for [`run_case_study`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CaseStudyParams {
    /// Per-class sample count for the full compositions (modes a and b).
    pub per_class_full: usize,
    /// Per-class real sample count for the reduced compositions (c and d).
    pub per_class_reduced: usize,
    pub fit: FitParams,
}

impl Default for CaseStudyParams {
    fn default() -> Self {
        CaseStudyParams { per_class_full: 1000, per_class_reduced: 200, fit: FitParams::default() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseStudyEntry {
    pub mode: CaseStudyMode,
    pub train_size: usize,
    pub metrics: ClassificationMetrics,
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseStudyReport {
    pub entries: Vec<CaseStudyEntry>,
}

impl CaseStudyReport {
    pub fn accuracy(&self, mode: CaseStudyMode) -> f64 {
        self.entries
            .iter()
            .find(|e| e.mode == mode)
            .map(|e| e.metrics.accuracy)
            .expect("all four modes present")
    }
}

/// Trains the same classifier on four data compositions and evaluates every
/// variant on the held-out real test set.
pub fn run_case_study(
    real_train: &SignalSet,
    synthetic: &SignalSet,
    real_test: &SignalSet,
    num_classes: usize,
    params: &CaseStudyParams,
) -> Result<CaseStudyReport> {
    for (name, set) in [("real_train", real_train), ("synthetic", synthetic), ("real_test", real_test)] {
        if set.labels.is_none() {
            return Err(Error::Usage(format!("{name} must be labeled")));
        }
    }
    if params.per_class_reduced >= params.per_class_full {
        return Err(Error::Config("reduced size must be below full size".into()));
    }
    let seed = params.fit.seed;
    let full_real = resample_balanced(real_train, params.per_class_full, seed)?;
    let full_syn = resample_balanced(synthetic, params.per_class_full, seed.wrapping_add(1))?;
    let reduced_real = resample_balanced(real_train, params.per_class_reduced, seed.wrapping_add(2))?;
    let syn_topup = resample_balanced(
        synthetic,
        params.per_class_full - params.per_class_reduced,
        seed.wrapping_add(3),
    )?;
    let augmented = SignalSet::stack(&[reduced_real.clone(), syn_topup])?;

    let mut entries = Vec::new();
    for (mode, train_set) in [
        (CaseStudyMode::RealFull, &full_real),
        (CaseStudyMode::SyntheticOnly, &full_syn),
        (CaseStudyMode::RealReduced, &reduced_real),
        (CaseStudyMode::RealReducedPlusSynthetic, &augmented),
    ] {
        let clf = Classifier::fit(train_set, num_classes, &params.fit)?;
        let metrics = clf.evaluate(real_test)?;
        entries.push(CaseStudyEntry { mode, train_size: train_set.n(), metrics });
    }
    Ok(CaseStudyReport { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;

    /// Two-class toy set: class-dependent frequency plus noise.
    fn banded(n_per_class: usize, w: usize, noise: f64, seed: u64) -> SignalSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = n_per_class * 2;
        let mut values = Array4::from_shape_fn((n, 1, 1, w), |(i, _, _, t)| {
            let f = if i / n_per_class == 0 { 0.35 } else { 1.2 };
            let phase = (i as f64) * 0.13;
            ((f * t as f64 + phase).sin()) as f32
        });
        for v in values.iter_mut() {
            *v += (rng.gen_range(-1.0..1.0) * noise) as f32;
        }
        let labels = (0..n).map(|i| (i / n_per_class) as u32).collect();
        SignalSet::from_values(values).with_labels(labels, 2).unwrap()
    }

    #[test]
    fn classifier_learns_separable_frequencies() {
        let train = banded(40, 24, 0.05, 0);
        let test = banded(20, 24, 0.05, 1);
        let fit = FitParams { epochs: 12, batch_size: 16, ..Default::default() };
        let clf = Classifier::fit(&train, 2, &fit).unwrap();
        let m = clf.evaluate(&test).unwrap();
        assert!(m.accuracy > 0.9, "accuracy {}", m.accuracy);
    }

    #[test]
    fn classifier_fit_is_deterministic() {
        let train = banded(10, 24, 0.05, 2);
        let fit = FitParams { epochs: 2, batch_size: 8, ..Default::default() };
        let a = Classifier::fit(&train, 2, &fit).unwrap();
        let b = Classifier::fit(&train, 2, &fit).unwrap();
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn predict_rejects_wrong_channels() {
        let train = banded(10, 24, 0.05, 3);
        let fit = FitParams { epochs: 1, batch_size: 8, ..Default::default() };
        let clf = Classifier::fit(&train, 2, &fit).unwrap();
        let other = SignalSet::from_values(Array4::zeros((2, 3, 1, 24)));
        assert!(clf.predict(&other).is_err());
    }

    #[test]
    fn case_study_produces_four_modes_with_expected_sizes() {
        let real = banded(30, 24, 0.05, 4);
        let syn = banded(30, 24, 0.05, 5);
        let test = banded(10, 24, 0.05, 6);
        let params = CaseStudyParams {
            per_class_full: 20,
            per_class_reduced: 5,
            fit: FitParams { epochs: 2, batch_size: 16, ..Default::default() },
        };
        let report = run_case_study(&real, &syn, &test, 2, &params).unwrap();
        assert_eq!(report.entries.len(), 4);
        assert_eq!(report.entries[0].train_size, 40);
        assert_eq!(report.entries[1].train_size, 40);
        assert_eq!(report.entries[2].train_size, 10);
        assert_eq!(report.entries[3].train_size, 40);
        for e in &report.entries {
            assert!((0.0..=1.0).contains(&e.metrics.accuracy));
        }
    }
}
