//! Named trainable tensors and the Adam optimizer.
//!
//! Parameters are stored as f32 (the checkpoint currency) and promoted to
//! f64 graph leaves for every forward pass; optimizer math runs in f64 and
//! rounds back, so a reloaded checkpoint continues bit-identically.

use std::collections::HashMap;

use ndarray::{ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor32 {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor32 {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor32 { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn filled(shape: &[usize], v: f32) -> Self {
        Tensor32 { shape: shape.to_vec(), data: vec![v; shape.iter().product()] }
    }

    pub fn to_f64(&self) -> ArrayD<f64> {
        ArrayD::from_shape_vec(IxDyn(&self.shape), self.data.iter().map(|&v| v as f64).collect())
            .expect("tensor shape consistent")
    }
}

/// Ordered collection of named parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    index: HashMap<String, usize>,
    tensors: Vec<Tensor32>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor32) {
        assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        self.index.insert(name.to_string(), self.names.len());
        self.names.push(name.to_string());
        self.tensors.push(tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor32> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor32> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor32)> {
        self.names.iter().zip(self.tensors.iter())
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    /// Promotes every parameter to a differentiable leaf on `graph`.
    pub fn leaves(&self, graph: &Graph) -> ParamVars {
        let map = self
            .iter()
            .map(|(name, t)| (name.clone(), graph.leaf(t.to_f64())))
            .collect();
        ParamVars { map }
    }
}

/// Graph handles for one forward/backward pass.
pub struct ParamVars {
    map: HashMap<String, Var>,
}

impl ParamVars {
    pub fn from_map(map: HashMap<String, Var>) -> Self {
        ParamVars { map }
    }

    pub fn get(&self, name: &str) -> &Var {
        self.map
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
    }

    pub fn var_list(&self, names: &[String]) -> Vec<Var> {
        names.iter().map(|n| self.get(n).clone()).collect()
    }
}

/// Truncated-normal initializer (std 0.02, clipped at two sigma).
pub struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Init { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn trunc_normal(&mut self, shape: &[usize], std: f32) -> Tensor32 {
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        while data.len() < n {
            // Box-Muller.
            let u1: f64 = self.rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = self.rng.gen_range(0.0..1.0);
            let r = (-2.0 * u1.ln()).sqrt();
            for z in [r * (2.0 * std::f64::consts::PI * u2).cos(), r * (2.0 * std::f64::consts::PI * u2).sin()] {
                if z.abs() <= 2.0 && data.len() < n {
                    data.push((z * std as f64) as f32);
                }
            }
        }
        Tensor32 { shape: shape.to_vec(), data }
    }
}

/// Adam with per-parameter first/second moments, stored f32.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: HashMap<String, Tensor32>,
    v: HashMap<String, Tensor32>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Adam { lr, beta1, beta2, eps: 1e-8, t: 0, m: HashMap::new(), v: HashMap::new() }
    }

    /// Applies one update to every parameter named in `grads`.
    pub fn step(&mut self, store: &mut ParamStore, grads: &HashMap<String, ArrayD<f64>>) -> Result<()> {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut names: Vec<&String> = grads.keys().collect();
        names.sort();
        for name in names {
            let g = &grads[name];
            let param = store
                .get_mut(name)
                .ok_or_else(|| Error::Internal(format!("gradient for unknown parameter {name}")))?;
            let gflat = g.as_standard_layout();
            let gflat = gflat.as_slice().expect("standard layout");
            if gflat.len() != param.data.len() {
                return Err(Error::Internal(format!(
                    "gradient size {} != parameter size {} for {name}",
                    gflat.len(),
                    param.data.len()
                )));
            }
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor32::zeros(&param.shape));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor32::zeros(&param.shape));
            for i in 0..param.data.len() {
                let gi = gflat[i];
                let mi = self.beta1 * m.data[i] as f64 + (1.0 - self.beta1) * gi;
                let vi = self.beta2 * v.data[i] as f64 + (1.0 - self.beta2) * gi * gi;
                m.data[i] = mi as f32;
                v.data[i] = vi as f32;
                let update = self.lr * (mi / bc1) / ((vi / bc2).sqrt() + self.eps);
                param.data[i] = (param.data[i] as f64 - update) as f32;
            }
        }
        Ok(())
    }

    /// Moments flattened into named tensors for checkpointing.
    pub fn export_moments(&self, prefix: &str) -> Vec<(String, Tensor32)> {
        let mut out = Vec::new();
        let mut names: Vec<&String> = self.m.keys().collect();
        names.sort();
        for name in names {
            out.push((format!("{prefix}.m.{name}"), self.m[name].clone()));
            out.push((format!("{prefix}.v.{name}"), self.v[name].clone()));
        }
        out
    }

    pub fn import_moment(&mut self, kind: &str, name: &str, tensor: Tensor32) {
        match kind {
            "m" => self.m.insert(name.to_string(), tensor),
            "v" => self.v.insert(name.to_string(), tensor),
            _ => panic!("unknown moment kind {kind}"),
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_lr_step_leaves_params_bit_identical() {
        let mut store = ParamStore::new();
        let mut init = Init::new(0);
        store.insert("w", init.trunc_normal(&[4, 3], 0.02));
        let before = store.clone();
        let mut opt = Adam::new(0.0, 0.9, 0.999);
        let mut grads = HashMap::new();
        grads.insert("w".to_string(), ArrayD::from_elem(IxDyn(&[4, 3]), 0.37));
        opt.step(&mut store, &grads).unwrap();
        assert_eq!(before.get("w").unwrap().data, store.get("w").unwrap().data);
    }

    #[test]
    fn adam_first_step_magnitude() {
        // With bias correction the first step moves by ~lr in the gradient
        // direction regardless of gradient scale.
        let mut store = ParamStore::new();
        store.insert("w", Tensor32::zeros(&[1]));
        let mut opt = Adam::new(0.01, 0.9, 0.999);
        let mut grads = HashMap::new();
        grads.insert("w".to_string(), ArrayD::from_elem(IxDyn(&[1]), 5.0));
        opt.step(&mut store, &grads).unwrap();
        let w = store.get("w").unwrap().data[0];
        assert!((w + 0.01).abs() < 1e-6, "got {w}");
    }

    #[test]
    fn trunc_normal_within_two_sigma() {
        let mut init = Init::new(7);
        let t = init.trunc_normal(&[1000], 0.02);
        assert!(t.data.iter().all(|&v| v.abs() <= 0.04 + 1e-9));
        let mean: f32 = t.data.iter().sum::<f32>() / 1000.0;
        assert!(mean.abs() < 0.005);
    }
}
