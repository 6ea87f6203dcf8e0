//! Scratch probe for sizing training budgets. Not part of the test suite.

use ndarray::Array4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ttslab::coherence::{wcoh_set, CwtSpec};
use ttslab::signal::{load_signal_set, simulate_sine, SignalSet, SineParams};
use ttslab::train::{generate_from, train, Objective, TrainConfig, Trainer};

fn noise_like(set: &SignalSet, seed: u64) -> SignalSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, c, _, w) = set.values.dim();
    // Match the amplitude range of the data.
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in set.values.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let values = Array4::from_shape_fn((n, c, 1, w), |_| rng.gen_range(lo..hi));
    SignalSet::from_values(values)
}

fn subset(set: &SignalSet, n: usize) -> SignalSet {
    set.select(&(0..n).collect::<Vec<_>>())
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(String::as_str).unwrap_or("c6");
    match mode {
        "c6" => c6(args.get(2).and_then(|s| s.parse().ok()).unwrap_or(300)),
        "c7" => c7(args.get(2).and_then(|s| s.parse().ok()).unwrap_or(500)),
        "cls" => cls_probe(args.get(2).and_then(|s| s.parse().ok()).unwrap_or(300)),
        other => eprintln!("unknown mode {other}"),
    }
}

fn c6(steps: u64) {
    let data = simulate_sine(&SineParams { n_samples: 10000, ..Default::default() }).unwrap();
    let spec = CwtSpec::default();
    let n_eval = 12;
    let real = subset(&data, n_eval);
    let noise = noise_like(&real, 99);
    let base = wcoh_set(&real, &noise, &spec).unwrap();
    println!("noise baseline = {base:.4}  (margin bar = {:.4})", 1.2 * base);
    for seed in [0u64, 1, 2] {
        let t0 = std::time::Instant::now();
        let mut cfg = TrainConfig::default();
        cfg.model.channels = 5;
        cfg.model.seq_len = 24;
        cfg.objective = Objective::Mse;
        cfg.seed = seed;
        cfg.max_steps = steps;
        cfg.log_every = steps;
        cfg.ckpt_every = steps;
        let dir = std::env::temp_dir().join(format!("tune_c6_{seed}"));
        let mut tr = Trainer::new(cfg).unwrap();
        train(&mut tr, &data, &dir, |_| {}).unwrap();
        let syn = generate_from(&tr.cfg.model, &tr.params, n_eval, None, 1234 + seed).unwrap();
        let score = wcoh_set(&real, &syn, &spec).unwrap();
        println!(
            "seed {seed}: steps {steps}  wcoh(real,syn) = {score:.4}  ({:.1}s)",
            t0.elapsed().as_secs_f64()
        );
    }
}

fn two_band_set(n_per_class: usize, seed: u64) -> SignalSet {
    // Class 0: A in (0.4, 0.7); class 1: A in (1.4, 1.7). x_t = sin(A t + B).
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = 24;
    let n = 2 * n_per_class;
    let mut values = Array4::zeros((n, 1, 1, w));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = (i % 2) as u32;
        let a = if class == 0 { rng.gen_range(0.4..0.7) } else { rng.gen_range(1.4..1.7) };
        let b: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        for t in 0..w {
            values[[i, 0, 0, t]] = (a * t as f64 + b).sin() as f32;
        }
        labels.push(class);
    }
    SignalSet::from_values(values).with_labels(labels, 2).unwrap()
}

/// Dominant angular frequency (rad/sample) of x via zero-padded FFT.
fn dominant_freq(x: &[f32]) -> f64 {
    use rustfft::{num_complex::Complex, FftPlanner};
    let n = 256;
    let mut buf: Vec<Complex<f64>> =
        x.iter().map(|&v| Complex::new(v as f64, 0.0)).collect();
    let mean = buf.iter().map(|c| c.re).sum::<f64>() / buf.len() as f64;
    for c in buf.iter_mut() {
        c.re -= mean;
    }
    buf.resize(n, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mut best = 1;
    for k in 1..n / 2 {
        if buf[k].norm_sqr() > buf[best].norm_sqr() {
            best = k;
        }
    }
    best as f64 * std::f64::consts::TAU / n as f64
}

fn c7(steps: u64) {
    let args: Vec<String> = std::env::args().collect();
    let objective = if args.get(3).map(String::as_str) == Some("wgan") {
        Objective::WganGp
    } else {
        Objective::Mse
    };
    let lambda_cls: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let label_dim: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(10);
    println!("objective {objective:?} lambda_cls {lambda_cls} label_dim {label_dim}");
    let data = two_band_set(2500, 11);
    let t0 = std::time::Instant::now();
    let mut cfg = TrainConfig::default();
    cfg.model.channels = 1;
    cfg.model.seq_len = 24;
    cfg.model.num_classes = 2;
    cfg.model.patch_len = 4;
    cfg.model.label_embed_dim = label_dim;
    cfg.objective = objective;
    cfg.lambda_cls = lambda_cls;
    cfg.seed = 0;
    cfg.max_steps = 0;
    cfg.log_every = 200;
    cfg.ckpt_every = steps;
    let dir = std::env::temp_dir().join("tune_c7");
    let mut tr = Trainer::new(cfg).unwrap();
    let mut done = 0;
    while done < steps {
        let seg = 200.min(steps - done);
        done += seg;
        tr.cfg.max_steps = done;
        train(&mut tr, &data, &dir, |r| {
            println!(
                "  step {} L_D {:.4} L_G {:.4} cls_r {:.4} cls_f {:.4}",
                r.step, r.l_d, r.l_g, r.l_cls_r, r.l_cls_f
            )
        })
        .unwrap();
        let mut report = format!("after {done} steps ({:.0}s):", t0.elapsed().as_secs_f64());
        for class in 0..2u32 {
            let labels = vec![class; 200];
            let syn = generate_from(&tr.cfg.model, &tr.params, 200, Some(labels), 777).unwrap();
            let (lo, hi) = if class == 0 { (0.25, 0.85) } else { (1.25, 1.85) };
            let mut hits = 0;
            let mut freqs = Vec::new();
            for i in 0..200 {
                let x: Vec<f32> = (0..24).map(|t| syn.values[[i, 0, 0, t]]).collect();
                let f = dominant_freq(&x);
                freqs.push(f);
                if f > lo && f < hi {
                    hits += 1;
                }
            }
            freqs.sort_by(f64::total_cmp);
            report.push_str(&format!(
                "  class {class}: {hits}/200 in-band, median {:.3} [{:.3},{:.3}]",
                freqs[100], freqs[20], freqs[180]
            ));
        }
        println!("{report}");
    }
    let _ = load_signal_set; // keep import used
}

/// Supervised-only probe: can the discriminator's class head learn the toy
/// frequency classes at all?
fn cls_probe(steps: u64) {
    use ndarray::ArrayD;
    use ttslab::autodiff::{grad, Graph};
    use ttslab::losses::categorical_loss;
    use ttslab::model::{discriminator_forward, init_params, ModelSpec};
    use ttslab::params::Adam;

    let data = two_band_set(2500, 11);
    let patch: usize =
        std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(1);
    let spec = ModelSpec {
        channels: 1,
        seq_len: 24,
        num_classes: 2,
        patch_len: patch,
        ..Default::default()
    };
    let mut store = init_params(&spec, 0).unwrap();
    let mut opt = Adam::new(1e-3, 0.9, 0.999);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let d_names: Vec<String> =
        store.names().iter().filter(|n| n.starts_with("d.")).cloned().collect();
    for step in 1..=steps {
        let idx: Vec<usize> = (0..32).map(|_| rng.gen_range(0..data.n())).collect();
        let labels: Vec<u32> =
            idx.iter().map(|&i| data.labels.as_ref().unwrap()[i]).collect();
        let graph = Graph::new();
        let pv = store.leaves(&graph);
        let x = ArrayD::from_shape_fn(ndarray::IxDyn(&[32, 1, 1, 24]), |ix| {
            data.values[[idx[ix[0]], 0, 0, ix[3]]] as f64
        });
        let xv = graph.constant(x);
        let out = discriminator_forward(&xv, &spec, &pv, Some(&labels), &mut None).unwrap();
        let loss =
            categorical_loss(out.class_logits.as_ref().unwrap(), &labels, 2).unwrap();
        if step % 25 == 0 || step == 1 {
            let lv = out.class_logits.as_ref().unwrap().value();
            let col0: Vec<f64> = (0..32).map(|i| lv[[i, 0]] - lv[[i, 1]]).collect();
            let mean = col0.iter().sum::<f64>() / 32.0;
            let var = col0.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 32.0;
            println!(
                "step {step}: cls loss {:.4}  logit-margin mean {mean:.4} std {:.4}",
                loss.scalar_value(),
                var.sqrt()
            );
        }
        let vars = pv.var_list(&d_names);
        let grads = grad(&loss, &vars);
        let mut gm = std::collections::HashMap::new();
        let mut missing = 0;
        for (n, g) in d_names.iter().zip(grads) {
            match g {
                Some(g) => {
                    gm.insert(n.clone(), g.value());
                }
                None => missing += 1,
            }
        }
        if step == 1 {
            println!("  d params: {} with grads, {missing} without", gm.len());
            for probe in ["d.cls_w", "d.cls_head.w", "d.head_cls.w"] {
                if let Some(g) = gm.get(probe) {
                    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                    println!("  |grad {probe}| = {norm:.6}");
                }
            }
            let mut top: Vec<(&String, f64)> = gm
                .iter()
                .map(|(n, g)| (n, g.iter().map(|v| v * v).sum::<f64>().sqrt()))
                .collect();
            top.sort_by(|a, b| b.1.total_cmp(&a.1));
            for (n, v) in top.iter().take(6) {
                println!("  top grad {n}: {v:.5}");
            }
        }
        opt.step(&mut store, &gm).unwrap();
    }
}
