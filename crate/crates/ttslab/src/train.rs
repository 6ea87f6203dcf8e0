//! Training loop: alternating discriminator/generator Adam updates,
//! loss logging, periodic checkpoints, and bit-exact resume.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{grad, Graph, Var};
use crate::error::{Error, Result};
use crate::losses::{
    categorical_loss, gradient_penalty, interpolate, mse_d_loss, mse_g_loss, wgan_adv_losses,
    MseLabels,
};
use crate::model::{
    discriminator_forward, generator_forward, init_params, load_checkpoint, save_checkpoint,
    Checkpoint, LatentBatch, ModelSpec, TrainerState,
};
use crate::params::{Adam, ParamStore, ParamVars};
use crate::signal::SignalSet;

/// Which adversarial objective drives the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[clap(rename_all = "kebab-case")]
pub enum Objective {
    #[default]
    Mse,
    WganGp,
}

/// Full run configuration; serializes to/from the resolved-config JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelSpec,
    pub objective: Objective,
    pub lr_g: f64,
    pub lr_d: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    /// Classification-loss weight (lambda) for conditional runs.
    pub lambda_cls: f64,
    /// Gradient-penalty weight for the Wasserstein objective.
    pub lambda_gp: f64,
    pub d_steps_per_g: usize,
    pub real_label: f64,
    pub fake_label: f64,
    pub flip_labels: bool,
    pub seed: u64,
    pub max_steps: u64,
    pub log_every: u64,
    pub ckpt_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelSpec::default(),
            objective: Objective::default(),
            lr_g: 1e-4,
            lr_d: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            batch_size: 32,
            lambda_cls: 1.0,
            lambda_gp: 10.0,
            d_steps_per_g: 1,
            real_label: 1.0,
            fake_label: 0.0,
            flip_labels: false,
            seed: 0,
            max_steps: 1000,
            log_every: 10,
            ckpt_every: 500,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 || self.d_steps_per_g == 0 {
            return Err(Error::Config("batch_size and d_steps_per_g must be positive".into()));
        }
        if !(self.lr_g >= 0.0 && self.lr_d >= 0.0 && self.lambda_cls >= 0.0 && self.lambda_gp >= 0.0) {
            return Err(Error::Config("rates and weights must be nonnegative".into()));
        }
        if !(self.beta1 >= 0.0 && self.beta1 < 1.0 && self.beta2 >= 0.0 && self.beta2 < 1.0) {
            return Err(Error::Config("betas must be in [0, 1)".into()));
        }
        if self.log_every == 0 || self.ckpt_every == 0 {
            return Err(Error::Config("log_every and ckpt_every must be positive".into()));
        }
        Ok(())
    }

    fn mse_labels(&self) -> MseLabels {
        MseLabels {
            real_label: self.real_label,
            fake_label: self.fake_label,
            flip_labels: self.flip_labels,
        }
    }
}

/// One logged row of losses.
#[derive(Debug, Clone, Serialize)]
pub struct LossRow {
    pub step: u64,
    pub l_d: f64,
    pub l_g: f64,
    pub l_adv: f64,
    pub l_cls_r: f64,
    pub l_cls_f: f64,
    pub gp: f64,
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub params: ParamStore,
    pub step: u64,
    opt_g: Adam,
    opt_d: Adam,
    rng: ChaCha8Rng,
}

fn real_batch(data: &SignalSet, idx: &[usize]) -> (ArrayD<f64>, Option<Vec<u32>>) {
    let (c, w) = (data.channels(), data.width());
    let mut out = ArrayD::zeros(IxDyn(&[idx.len(), c, 1, w]));
    for (bi, &i) in idx.iter().enumerate() {
        for ch in 0..c {
            for t in 0..w {
                out[[bi, ch, 0, t]] = data.values[[i, ch, 0, t]] as f64;
            }
        }
    }
    let labels = data
        .labels
        .as_ref()
        .map(|l| idx.iter().map(|&i| l[i]).collect());
    (out, labels)
}

fn prefixed(names: &[String], prefix: &str) -> Vec<String> {
    names.iter().filter(|n| n.starts_with(prefix)).cloned().collect()
}

/// Gradients of `loss` with respect to the named parameters (absent
/// gradients count as zero and are skipped).
fn param_grads(loss: &Var, pv: &ParamVars, names: &[String]) -> HashMap<String, ArrayD<f64>> {
    let vars = pv.var_list(names);
    let grads = grad(loss, &vars);
    names
        .iter()
        .zip(grads)
        .filter_map(|(n, g)| g.map(|g| (n.clone(), g.value())))
        .collect()
}

fn finite_or_nan_err(v: f64, step: u64, term: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NanLoss { step, term: term.to_string() })
    }
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let params = init_params(&cfg.model, cfg.seed)?;
        let opt_g = Adam::new(cfg.lr_g, cfg.beta1, cfg.beta2);
        let opt_d = Adam::new(cfg.lr_d, cfg.beta1, cfg.beta2);
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Trainer { cfg, params, step: 0, opt_g, opt_d, rng })
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let state = ckpt
            .trainer
            .ok_or_else(|| Error::Load("checkpoint has no trainer state; cannot resume".into()))?;
        state.cfg.validate()?;
        let mut opt_g = Adam::new(state.cfg.lr_g, state.cfg.beta1, state.cfg.beta2);
        let mut opt_d = Adam::new(state.cfg.lr_d, state.cfg.beta1, state.cfg.beta2);
        opt_g.t = state.adam_g_t;
        opt_d.t = state.adam_d_t;
        for (name, tensor) in ckpt.extra {
            let mut parts = name.splitn(3, '.');
            let which = parts.next().unwrap_or("");
            let kind = parts.next().unwrap_or("");
            let pname = parts.next().unwrap_or("");
            match which {
                "optg" => opt_g.import_moment(kind, pname, tensor),
                "optd" => opt_d.import_moment(kind, pname, tensor),
                _ => return Err(Error::Load(format!("unexpected tensor {name}"))),
            }
        }
        let mut rng = ChaCha8Rng::from_seed(state.rng_seed);
        rng.set_word_pos(((state.rng_word_pos.0 as u128) << 64) | state.rng_word_pos.1 as u128);
        Ok(Trainer { cfg: state.cfg, params: ckpt.params, step: ckpt.step, opt_g, opt_d, rng })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let wp = self.rng.get_word_pos();
        let state = TrainerState {
            cfg: self.cfg.clone(),
            rng_seed: self.rng.get_seed(),
            rng_word_pos: ((wp >> 64) as u64, wp as u64),
            adam_g_t: self.opt_g.t,
            adam_d_t: self.opt_d.t,
        };
        let mut extra = self.opt_g.export_moments("optg");
        extra.extend(self.opt_d.export_moments("optd"));
        Checkpoint {
            spec: self.cfg.model.clone(),
            step: self.step,
            params: self.params.clone(),
            extra,
            trainer: Some(state),
        }
    }

    fn sample_indices(&mut self, n: usize) -> Vec<usize> {
        (0..self.cfg.batch_size).map(|_| self.rng.gen_range(0..n)).collect()
    }

    fn sample_targets(&mut self) -> Vec<u32> {
        let k = self.cfg.model.num_classes as u32;
        (0..self.cfg.batch_size).map(|_| self.rng.gen_range(0..k)).collect()
    }

    fn fake_batch(
        &mut self,
        graph: &Graph,
        pv: &ParamVars,
    ) -> Result<(Var, Option<Vec<u32>>)> {
        let mut lb = LatentBatch::sample(self.cfg.batch_size, self.cfg.model.latent_dim, &mut self.rng);
        let targets = if self.cfg.model.conditional() {
            let t = self.sample_targets();
            lb = lb.with_labels(t.clone());
            Some(t)
        } else {
            None
        };
        let fake = generator_forward(&lb, &self.cfg.model, pv, graph, &mut None)?;
        Ok((fake, targets))
    }

    fn d_update(&mut self, data: &SignalSet) -> Result<(f64, f64, f64, f64)> {
        let spec = self.cfg.model.clone();
        let graph = Graph::new();
        let pv = self.params.leaves(&graph);
        let idx = self.sample_indices(data.n());
        let (real_arr, real_labels) = real_batch(data, &idx);
        let real = graph.constant(real_arr.clone());
        let (fake_var, fake_targets) = self.fake_batch(&graph, &pv)?;
        let fake = fake_var.detach();

        let d_labels = |l: &Option<Vec<u32>>| -> Option<Vec<u32>> { l.clone() };
        let real_out =
            discriminator_forward(&real, &spec, &pv, d_labels(&real_labels).as_deref(), &mut None)?;
        let fake_out =
            discriminator_forward(&fake, &spec, &pv, d_labels(&fake_targets).as_deref(), &mut None)?;

        let cls_r = if spec.conditional() {
            let labels = real_labels
                .as_ref()
                .ok_or_else(|| Error::Usage("conditional training requires labeled data".into()))?;
            Some(categorical_loss(
                real_out.class_logits.as_ref().expect("conditional head"),
                labels,
                spec.num_classes,
            )?)
        } else {
            None
        };

        let (adv_val, gp_val, mut total) = match self.cfg.objective {
            Objective::Mse => {
                let d = mse_d_loss(&real_out.adv, &fake_out.adv, &self.cfg.mse_labels());
                (d.scalar_value(), 0.0, d)
            }
            Objective::WganGp => {
                let w = wgan_adv_losses(&real_out.adv, &fake_out.adv);
                let xhat = interpolate(&graph, &real_arr, &fake.value(), &mut self.rng)?;
                let xhat_out =
                    discriminator_forward(&xhat, &spec, &pv, d_labels(&real_labels).as_deref(), &mut None)?;
                let gp = gradient_penalty(&xhat_out.adv, &xhat)?;
                let gp_val = gp.scalar_value();
                let total = w.d_loss.add(&gp.mul_scalar(self.cfg.lambda_gp));
                (w.adv.scalar_value(), gp_val, total)
            }
        };
        let mut cls_r_val = 0.0;
        if let Some(c) = cls_r {
            cls_r_val = c.scalar_value();
            total = total.add(&c.mul_scalar(self.cfg.lambda_cls));
        }
        let l_d = finite_or_nan_err(total.scalar_value(), self.step, "L_D")?;
        finite_or_nan_err(adv_val, self.step, "L_adv")?;
        finite_or_nan_err(gp_val, self.step, "GP")?;
        finite_or_nan_err(cls_r_val, self.step, "L_cls_r")?;

        let d_names = prefixed(self.params.names(), "d.");
        let grads = param_grads(&total, &pv, &d_names);
        self.opt_d.step(&mut self.params, &grads)?;
        Ok((l_d, adv_val, cls_r_val, gp_val))
    }

    fn g_update(&mut self) -> Result<(f64, f64)> {
        let spec = self.cfg.model.clone();
        let graph = Graph::new();
        let pv = self.params.leaves(&graph);
        let (fake, targets) = self.fake_batch(&graph, &pv)?;
        let fake_out =
            discriminator_forward(&fake, &spec, &pv, targets.as_deref(), &mut None)?;
        let mut total = match self.cfg.objective {
            Objective::Mse => mse_g_loss(&fake_out.adv, &self.cfg.mse_labels()),
            Objective::WganGp => wgan_adv_losses(&fake_out.adv, &fake_out.adv).g_loss,
        };
        let mut cls_f_val = 0.0;
        if spec.conditional() {
            let c = categorical_loss(
                fake_out.class_logits.as_ref().expect("conditional head"),
                targets.as_ref().expect("targets sampled"),
                spec.num_classes,
            )?;
            cls_f_val = c.scalar_value();
            total = total.add(&c.mul_scalar(self.cfg.lambda_cls));
        }
        let l_g = finite_or_nan_err(total.scalar_value(), self.step, "L_G")?;
        finite_or_nan_err(cls_f_val, self.step, "L_cls_f")?;

        let g_names = prefixed(self.params.names(), "g.");
        let grads = param_grads(&total, &pv, &g_names);
        self.opt_g.step(&mut self.params, &grads)?;
        Ok((l_g, cls_f_val))
    }

    /// One full training step: `d_steps_per_g` discriminator updates, then
    /// one generator update. Returns the losses of the final inner updates.
    pub fn train_step(&mut self, data: &SignalSet) -> Result<LossRow> {
        if data.n() == 0 {
            return Err(Error::Usage("training data is empty".into()));
        }
        if data.channels() != self.cfg.model.channels || data.width() != self.cfg.model.seq_len {
            return Err(Error::Usage(format!(
                "data ({} ch x {}) does not match model ({} ch x {})",
                data.channels(),
                data.width(),
                self.cfg.model.channels,
                self.cfg.model.seq_len
            )));
        }
        if self.cfg.model.conditional() {
            match &data.labels {
                None => return Err(Error::Usage("conditional model but unlabeled data".into())),
                Some(l) => {
                    if let Some(&bad) = l.iter().find(|&&v| v as usize >= self.cfg.model.num_classes) {
                        return Err(Error::Usage(format!(
                            "label {bad} out of range for {} classes",
                            self.cfg.model.num_classes
                        )));
                    }
                }
            }
        }
        let (mut l_d, mut adv, mut cls_r, mut gp) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..self.cfg.d_steps_per_g {
            (l_d, adv, cls_r, gp) = self.d_update(data)?;
        }
        let (l_g, cls_f) = self.g_update()?;
        self.step += 1;
        Ok(LossRow { step: self.step, l_d, l_g, l_adv: adv, l_cls_r: cls_r, l_cls_f: cls_f, gp })
    }
}

/// Outcome of [`train`].
pub struct TrainSummary {
    pub final_step: u64,
    pub checkpoints: Vec<PathBuf>,
    pub last_row: Option<LossRow>,
}

/// Runs (or resumes) training, writing `losses.csv` and periodic
/// `ckpt_<step>` files under `out_dir`.
pub fn train(
    trainer: &mut Trainer,
    data: &SignalSet,
    out_dir: &Path,
    mut on_row: impl FnMut(&LossRow),
) -> Result<TrainSummary> {
    fs::create_dir_all(out_dir)?;
    let losses_path = out_dir.join("losses.csv");
    let fresh = !losses_path.exists() || trainer.step == 0;
    let file = fs::OpenOptions::new()
        .create(true)
        .append(!fresh)
        .write(true)
        .truncate(fresh)
        .open(&losses_path)?;
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if fresh {
        writer.write_record(["step", "L_D", "L_G", "L_adv", "L_cls_r", "L_cls_f", "GP"])?;
    }

    let mut checkpoints = Vec::new();
    let mut last_row = None;
    while trainer.step < trainer.cfg.max_steps {
        let row = trainer.train_step(data)?;
        if row.step % trainer.cfg.log_every == 0 || row.step == trainer.cfg.max_steps {
            writer.write_record([
                row.step.to_string(),
                format!("{:.6e}", row.l_d),
                format!("{:.6e}", row.l_g),
                format!("{:.6e}", row.l_adv),
                format!("{:.6e}", row.l_cls_r),
                format!("{:.6e}", row.l_cls_f),
                format!("{:.6e}", row.gp),
            ])?;
            writer.flush()?;
            on_row(&row);
        }
        if row.step % trainer.cfg.ckpt_every == 0 || row.step == trainer.cfg.max_steps {
            let path = out_dir.join(format!("ckpt_{}", row.step));
            save_checkpoint(&trainer.checkpoint(), &path)?;
            checkpoints.push(path);
        }
        last_row = Some(row);
    }
    Ok(TrainSummary { final_step: trainer.step, checkpoints, last_row })
}

/// Samples `n` synthetic signals from a trained checkpoint. For conditional
/// models `labels` selects the class of each sample (defaulting to a
/// balanced cycle over classes).
pub fn generate(
    ckpt_path: &Path,
    n: usize,
    labels: Option<Vec<u32>>,
    seed: u64,
) -> Result<SignalSet> {
    let ckpt = load_checkpoint(ckpt_path)?;
    generate_from(&ckpt.spec, &ckpt.params, n, labels, seed)
}

/// Like [`generate`], from in-memory parameters.
pub fn generate_from(
    spec: &ModelSpec,
    params: &ParamStore,
    n: usize,
    labels: Option<Vec<u32>>,
    seed: u64,
) -> Result<SignalSet> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Usage("cannot generate zero samples".into()));
    }
    let labels = if spec.conditional() {
        let l = labels.unwrap_or_else(|| (0..n).map(|i| (i % spec.num_classes) as u32).collect());
        if l.len() != n {
            return Err(Error::Usage(format!("{} labels for {n} samples", l.len())));
        }
        if let Some(&bad) = l.iter().find(|&&v| v as usize >= spec.num_classes) {
            return Err(Error::Usage(format!("label {bad} out of range")));
        }
        Some(l)
    } else {
        if labels.is_some() {
            return Err(Error::Usage("labels supplied for an unconditional model".into()));
        }
        None
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = ndarray::Array4::<f32>::zeros((n, spec.channels, 1, spec.seq_len));
    let chunk = 64usize;
    let mut start = 0;
    while start < n {
        let b = chunk.min(n - start);
        let graph = Graph::new();
        let pv = params.leaves(&graph);
        let mut lb = LatentBatch::sample(b, spec.latent_dim, &mut rng);
        if let Some(l) = &labels {
            lb = lb.with_labels(l[start..start + b].to_vec());
        }
        let out = generator_forward(&lb, spec, &pv, &graph, &mut None)?.value();
        for bi in 0..b {
            for c in 0..spec.channels {
                for t in 0..spec.seq_len {
                    values[[start + bi, c, 0, t]] = out[[bi, c, 0, t]] as f32;
                }
            }
        }
        start += b;
    }
    let mut set = SignalSet::from_values(values);
    if let Some(l) = labels {
        set = set.with_labels(l, spec.num_classes)?;
    }
    Ok(set)
}
