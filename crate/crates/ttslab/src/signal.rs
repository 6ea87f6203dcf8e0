//! Dataset simulation, loading, preprocessing and the on-disk container
//! format for labeled multichannel time-series sets.
//!
//! A set is stored as `<name>.f32` (raw little-endian floats, row-major
//! `(N, C, 1, W)`) plus a `<name>.json` sidecar with shapes and metadata.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{s, Array4, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Batch of labeled multichannel sequences, the universal data currency.
///
/// `values` has shape `(N, C, 1, W)`; the height axis is always 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSet {
    pub values: Array4<f32>,
    pub labels: Option<Vec<u32>>,
    pub num_classes: Option<usize>,
    pub class_names: Option<Vec<String>>,
    pub sampling_rate_hz: Option<f64>,
    pub channel_names: Option<Vec<String>>,
    /// Per-channel normalization statistics of the split these values were
    /// normalized against, if any.
    pub norm_stats: Option<NormStats>,
}

/// Per-channel mean/std recorded in the sidecar so evaluation splits can
/// reuse training-split statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Configuration for the sinusoidal-wave simulator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SineParams {
    pub n_samples: usize,
    pub length_w: usize,
    pub channels: usize,
    pub freq_range: (f64, f64),
    pub phase_range: (f64, f64),
    pub seed: u64,
}

impl Default for SineParams {
    fn default() -> Self {
        SineParams {
            n_samples: 10000,
            length_w: 24,
            channels: 5,
            freq_range: (0.0, 0.1),
            phase_range: (0.0, 0.1),
            seed: 0,
        }
    }
}

impl SineParams {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("freq_range", self.freq_range), ("phase_range", self.phase_range)] {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::Config(format!(
                    "{name} must be a finite interval with low < high, got ({lo}, {hi})"
                )));
            }
        }
        if self.n_samples == 0 || self.length_w == 0 || self.channels == 0 {
            return Err(Error::Config("n_samples, length_w and channels must be positive".into()));
        }
        Ok(())
    }
}

impl SignalSet {
    pub fn n(&self) -> usize {
        self.values.shape()[0]
    }
    pub fn channels(&self) -> usize {
        self.values.shape()[1]
    }
    pub fn width(&self) -> usize {
        self.values.shape()[3]
    }

    pub fn from_values(values: Array4<f32>) -> Self {
        SignalSet {
            values,
            labels: None,
            num_classes: None,
            class_names: None,
            sampling_rate_hz: None,
            channel_names: None,
            norm_stats: None,
        }
    }

    pub fn with_labels(mut self, labels: Vec<u32>, num_classes: usize) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(Error::Usage(format!(
                "labels length {} does not match sample count {}",
                labels.len(),
                self.n()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= num_classes) {
            return Err(Error::Usage(format!("label {bad} out of range for {num_classes} classes")));
        }
        self.labels = Some(labels);
        self.num_classes = Some(num_classes);
        Ok(self)
    }

    /// Stacks several sets along the sample axis. Shapes must agree; labels
    /// are kept only if every input carries them.
    pub fn stack(sets: &[SignalSet]) -> Result<SignalSet> {
        if sets.is_empty() {
            return Err(Error::Usage("cannot stack zero sets".into()));
        }
        let views: Vec<_> = sets.iter().map(|s| s.values.view()).collect();
        let values = ndarray::concatenate(Axis(0), &views)
            .map_err(|e| Error::Usage(format!("incompatible shapes for stack: {e}")))?;
        let mut out = SignalSet::from_values(values);
        if sets.iter().all(|s| s.labels.is_some()) {
            let labels: Vec<u32> = sets.iter().flat_map(|s| s.labels.clone().unwrap()).collect();
            let k = sets.iter().filter_map(|s| s.num_classes).max().unwrap_or(0);
            out = out.with_labels(labels, k)?;
        }
        out.sampling_rate_hz = sets[0].sampling_rate_hz;
        out.channel_names = sets[0].channel_names.clone();
        out.class_names = sets[0].class_names.clone();
        Ok(out)
    }

    /// Returns the subset at the given sample indices (duplicates allowed).
    pub fn select(&self, idx: &[usize]) -> SignalSet {
        let values = self.values.select(Axis(0), idx);
        let labels = self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect());
        SignalSet {
            values,
            labels,
            num_classes: self.num_classes,
            class_names: self.class_names.clone(),
            sampling_rate_hz: self.sampling_rate_hz,
            channel_names: self.channel_names.clone(),
            norm_stats: self.norm_stats.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Load("values contain NaN or Inf".into()));
        }
        if let Some(labels) = &self.labels {
            let k = self.num_classes.unwrap_or(0);
            if k == 0 {
                return Err(Error::Load("labels present but k is zero".into()));
            }
            if labels.len() != self.n() {
                return Err(Error::Load(format!(
                    "labels: length {} does not match n={}",
                    labels.len(),
                    self.n()
                )));
            }
            if let Some(&bad) = labels.iter().find(|&&l| l as usize >= k) {
                return Err(Error::Load(format!("label out of range: {bad} >= k={k}")));
            }
        }
        Ok(())
    }
}

/// Simulates multichannel sinusoidal waves `x_i(t) = sin(A_i t + B_i)` with
/// per-channel frequency and phase drawn uniformly from the configured
/// ranges. The time index is the integer step `0..W-1`.
pub fn simulate_sine(params: &SineParams) -> Result<SignalSet> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (n, c, w) = (params.n_samples, params.channels, params.length_w);
    let mut values = Array4::<f32>::zeros((n, c, 1, w));
    for i in 0..n {
        for ch in 0..c {
            let a = rng.gen_range(params.freq_range.0..params.freq_range.1);
            let b = rng.gen_range(params.phase_range.0..params.phase_range.1);
            for t in 0..w {
                values[[i, ch, 0, t]] = (a * t as f64 + b).sin() as f32;
            }
        }
    }
    Ok(SignalSet::from_values(values))
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    n: usize,
    c: usize,
    w: usize,
    k: usize,
    labels: Option<Vec<u32>>,
    class_names: Option<Vec<String>>,
    sampling_rate_hz: Option<f64>,
    channel_names: Option<Vec<String>>,
    norm_stats: Option<NormStats>,
}

/// Resolves a user-supplied path to the `<prefix>` of `<prefix>.f32` /
/// `<prefix>.json`. Accepts a prefix, either of the two files, or a
/// directory containing exactly one `.json` sidecar.
fn resolve_prefix(path: &Path) -> Result<PathBuf> {
    if path.is_dir() {
        let mut jsons: Vec<PathBuf> = fs::read_dir(path)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().map(|e| e == "json") == Some(true))
            .filter(|p| p.file_name().map(|n| n != "config.resolved.json") == Some(true))
            .collect();
        jsons.sort();
        match jsons.len() {
            1 => Ok(jsons[0].with_extension("")),
            0 => Err(Error::Load(format!("no .json sidecar found in {}", path.display()))),
            _ => Err(Error::Load(format!("multiple sidecars found in {}", path.display()))),
        }
    } else {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") | Some("f32") => Ok(path.with_extension("")),
            _ => Ok(path.to_path_buf()),
        }
    }
}

fn save_prefix(path: &Path) -> Result<PathBuf> {
    let treat_as_dir = path.is_dir() || path.to_string_lossy().ends_with(std::path::MAIN_SEPARATOR);
    if treat_as_dir {
        fs::create_dir_all(path)?;
        Ok(path.join("signals"))
    } else {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        Ok(path.to_path_buf())
    }
}

/// Writes `<prefix>.f32` + `<prefix>.json`. A directory path stores
/// `signals.f32` / `signals.json` inside it.
pub fn save_signal_set(set: &SignalSet, path: &Path) -> Result<PathBuf> {
    set.validate().map_err(|e| Error::Usage(format!("refusing to save invalid set: {e}")))?;
    let prefix = save_prefix(path)?;
    let (n, c, _, w) = set.values.dim();
    let mut bytes = Vec::with_capacity(n * c * w * 4);
    for v in set.values.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(prefix.with_extension("f32"), bytes)?;
    let sidecar = Sidecar {
        n,
        c,
        w,
        k: set.num_classes.unwrap_or(0),
        labels: set.labels.clone(),
        class_names: set.class_names.clone(),
        sampling_rate_hz: set.sampling_rate_hz,
        channel_names: set.channel_names.clone(),
        norm_stats: set.norm_stats.clone(),
    };
    fs::write(prefix.with_extension("json"), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(prefix)
}

/// Loads a set saved by [`save_signal_set`], validating every invariant.
pub fn load_signal_set(path: &Path) -> Result<SignalSet> {
    let prefix = resolve_prefix(path)?;
    let json_path = prefix.with_extension("json");
    let blob_path = prefix.with_extension("f32");
    let sidecar: Sidecar = serde_json::from_str(
        &fs::read_to_string(&json_path)
            .map_err(|e| Error::Load(format!("{}: {e}", json_path.display())))?,
    )?;
    let bytes = fs::read(&blob_path).map_err(|e| Error::Load(format!("{}: {e}", blob_path.display())))?;
    let expect = sidecar.n * sidecar.c * sidecar.w * 4;
    if bytes.len() != expect {
        return Err(Error::Load(format!(
            "values: blob has {} bytes, sidecar shape ({}, {}, 1, {}) needs {expect}",
            bytes.len(),
            sidecar.n,
            sidecar.c,
            sidecar.w
        )));
    }
    let floats: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    let values = Array4::from_shape_vec((sidecar.n, sidecar.c, 1, sidecar.w), floats)
        .map_err(|e| Error::Load(format!("values: {e}")))?;
    let set = SignalSet {
        values,
        labels: sidecar.labels,
        num_classes: if sidecar.k > 0 { Some(sidecar.k) } else { None },
        class_names: sidecar.class_names,
        sampling_rate_hz: sidecar.sampling_rate_hz,
        channel_names: sidecar.channel_names,
        norm_stats: sidecar.norm_stats,
    };
    set.validate()?;
    Ok(set)
}

/// CSV import for single-channel data: one row per sample; with
/// `labeled`, the last column is an integer class label.
pub fn import_csv(path: &Path, labeled: bool) -> Result<SignalSet> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut rows: Vec<Vec<f32>> = Vec::new();
    let mut labels: Vec<u32> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let mut vals: Vec<f32> = Vec::with_capacity(record.len());
        for field in record.iter() {
            vals.push(
                field
                    .trim()
                    .parse::<f32>()
                    .map_err(|e| Error::Load(format!("csv field '{field}': {e}")))?,
            );
        }
        if labeled {
            let l = vals.pop().ok_or_else(|| Error::Load("empty csv row".into()))?;
            if l < 0.0 || l.fract() != 0.0 {
                return Err(Error::Load(format!("label column value {l} is not a nonnegative integer")));
            }
            labels.push(l as u32);
        }
        if let Some(first) = rows.first() {
            if first.len() != vals.len() {
                return Err(Error::Load("csv rows have inconsistent lengths".into()));
            }
        }
        rows.push(vals);
    }
    if rows.is_empty() {
        return Err(Error::Load("csv file has no rows".into()));
    }
    let (n, w) = (rows.len(), rows[0].len());
    let flat: Vec<f32> = rows.into_iter().flatten().collect();
    let values = Array4::from_shape_vec((n, 1, 1, w), flat).expect("shape checked");
    let mut set = SignalSet::from_values(values);
    if labeled {
        let k = labels.iter().copied().max().unwrap_or(0) as usize + 1;
        set = set.with_labels(labels, k)?;
    }
    set.validate()?;
    Ok(set)
}

/// Computes per-channel population mean/std over all samples and timesteps.
pub fn channel_stats(set: &SignalSet) -> NormStats {
    let (n, c, _, w) = set.values.dim();
    let count = (n * w) as f64;
    let mut mean = vec![0.0f64; c];
    let mut std = vec![0.0f64; c];
    for ch in 0..c {
        let slice = set.values.slice(s![.., ch, .., ..]);
        let m: f64 = slice.iter().map(|&v| v as f64).sum::<f64>() / count;
        let var: f64 = slice.iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / count;
        mean[ch] = m;
        std[ch] = var.sqrt();
    }
    NormStats { mean, std }
}

/// Channel-wise normalization to mean 0 and population std 1, with the
/// statistics computed over this set and recorded for reuse on other splits.
pub fn normalize_channels(set: &SignalSet) -> Result<SignalSet> {
    let stats = channel_stats(set);
    normalize_with(set, &stats)
}

/// Applies precomputed normalization statistics (training-split reuse).
pub fn normalize_with(set: &SignalSet, stats: &NormStats) -> Result<SignalSet> {
    let c = set.channels();
    if stats.mean.len() != c || stats.std.len() != c {
        return Err(Error::Usage(format!(
            "norm stats cover {} channels, set has {c}",
            stats.mean.len()
        )));
    }
    if let Some(ch) = stats.std.iter().position(|&s| s <= 0.0 || !s.is_finite()) {
        return Err(Error::ZeroVariance { channel: ch });
    }
    let mut out = set.clone();
    for ch in 0..c {
        let (m, s) = (stats.mean[ch], stats.std[ch]);
        out.values
            .slice_mut(s![.., ch, .., ..])
            .mapv_inplace(|v| ((v as f64 - m) / s) as f32);
    }
    out.norm_stats = Some(stats.clone());
    Ok(out)
}

/// Keeps timesteps `start..end` of every sample.
pub fn crop_window(set: &SignalSet, start: usize, end: usize) -> Result<SignalSet> {
    let w = set.width();
    if start >= end || end > w {
        return Err(Error::Bounds(format!(
            "crop window {start}..{end} invalid for W={w}"
        )));
    }
    let mut out = set.clone();
    out.values = set.values.slice(s![.., .., .., start..end]).to_owned();
    Ok(out)
}

/// Resamples to exactly `per_class` samples of every class: with
/// replacement for classes smaller than `per_class`, without otherwise.
pub fn resample_balanced(set: &SignalSet, per_class: usize, seed: u64) -> Result<SignalSet> {
    let labels = set
        .labels
        .as_ref()
        .ok_or_else(|| Error::Usage("resample_balanced requires labels".into()))?;
    let k = set.num_classes.unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = Vec::with_capacity(per_class * k);
    for class in 0..k as u32 {
        let members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == class).then_some(i))
            .collect();
        if members.is_empty() {
            return Err(Error::Usage(format!("class {class} has no samples")));
        }
        if members.len() >= per_class {
            // Partial Fisher-Yates draw without replacement.
            let mut pool = members;
            for j in 0..per_class {
                let pick = rng.gen_range(j..pool.len());
                pool.swap(j, pick);
            }
            picked.extend_from_slice(&pool[..per_class]);
        } else {
            for _ in 0..per_class {
                picked.push(members[rng.gen_range(0..members.len())]);
            }
        }
    }
    Ok(set.select(&picked))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn toy_labeled(counts: &[usize]) -> SignalSet {
        let n: usize = counts.iter().sum();
        let mut values = Array4::<f32>::zeros((n, 1, 1, 8));
        let mut labels = Vec::new();
        let mut i = 0;
        for (class, &count) in counts.iter().enumerate() {
            for _ in 0..count {
                values[[i, 0, 0, 0]] = i as f32;
                labels.push(class as u32);
                i += 1;
            }
        }
        SignalSet::from_values(values).with_labels(labels, counts.len()).unwrap()
    }

    #[test]
    fn simulate_sine_shape_and_range() {
        let set = simulate_sine(&SineParams { n_samples: 100, ..Default::default() }).unwrap();
        assert_eq!(set.values.dim(), (100, 5, 1, 24));
        assert!(set.labels.is_none());
        for &v in set.values.iter() {
            assert!((-1.0..=1.0).contains(&v));
        }
        // At t=0 the value is sin(B) with B in (0, 0.1).
        for i in 0..100 {
            for c in 0..5 {
                let v = set.values[[i, c, 0, 0]];
                assert!(v > 0.0 && v < 0.1f32.sin() + 1e-6);
            }
        }
    }

    #[test]
    fn simulate_sine_deterministic() {
        let p = SineParams { n_samples: 17, seed: 42, ..Default::default() };
        assert_eq!(simulate_sine(&p).unwrap(), simulate_sine(&p).unwrap());
    }

    #[test]
    fn simulate_sine_rejects_bad_interval() {
        let p = SineParams { freq_range: (0.2, 0.1), ..Default::default() };
        assert!(matches!(simulate_sine(&p), Err(Error::Config(_))));
    }

    #[test]
    fn sine_least_squares_fit_recovers_parameters() {
        // Grid-refine (A, B) and check the sum of squared residuals is at
        // the f32 quantization floor.
        let p = SineParams { n_samples: 5, seed: 7, ..Default::default() };
        let set = simulate_sine(&p).unwrap();
        for i in 0..set.n() {
            for ch in 0..set.channels() {
                let xs: Vec<f64> = (0..set.width()).map(|t| set.values[[i, ch, 0, t]] as f64).collect();
                let sse_of = |a: f64, b: f64| -> f64 {
                    xs.iter()
                        .enumerate()
                        .map(|(t, &x)| (x - (a * t as f64 + b).sin()).powi(2))
                        .sum()
                };
                // Coarse grid, then Gauss-Newton on the two parameters.
                let mut best = (f64::INFINITY, 0.0, 0.0);
                for ai in 0..=100 {
                    let a = 0.1 * ai as f64 / 100.0;
                    for bi in 0..=100 {
                        let b = 0.1 * bi as f64 / 100.0;
                        let sse = sse_of(a, b);
                        if sse < best.0 {
                            best = (sse, a, b);
                        }
                    }
                }
                let (mut a, mut b) = (best.1, best.2);
                for _ in 0..50 {
                    // Normal equations for residual r_t = sin(a t + b) - x_t.
                    let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for (t, &x) in xs.iter().enumerate() {
                        let tf = t as f64;
                        let arg = a * tf + b;
                        let r = arg.sin() - x;
                        let (da, db) = (tf * arg.cos(), arg.cos());
                        jaa += da * da;
                        jab += da * db;
                        jbb += db * db;
                        ga += da * r;
                        gb += db * r;
                    }
                    let det = jaa * jbb - jab * jab;
                    if det.abs() < 1e-18 {
                        break;
                    }
                    a -= (jbb * ga - jab * gb) / det;
                    b -= (jaa * gb - jab * ga) / det;
                }
                let sse = sse_of(a, b);
                assert!(sse < 1e-8, "residual {sse} too large");
            }
        }
    }

    #[test]
    fn container_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut set = simulate_sine(&SineParams { n_samples: 12, ..Default::default() }).unwrap();
        set = set.with_labels((0..12).map(|i| (i % 3) as u32).collect(), 3).unwrap();
        set.sampling_rate_hz = Some(125.0);
        set.class_names = Some(vec!["a".into(), "b".into(), "c".into()]);
        let prefix = save_signal_set(&set, &dir.path().join("toy")).unwrap();
        let loaded = load_signal_set(&prefix).unwrap();
        assert_eq!(set, loaded);
        // Loading via the directory works too.
        assert_eq!(set, load_signal_set(dir.path()).unwrap());
    }

    #[test]
    fn load_rejects_out_of_range_label() {
        let dir = tempfile::tempdir().unwrap();
        let set = toy_labeled(&[4, 4]);
        let prefix = save_signal_set(&set, &dir.path().join("t")).unwrap();
        // Corrupt the sidecar: claim k=2 but write a label 7.
        let json = fs::read_to_string(prefix.with_extension("json")).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
        v["labels"][0] = serde_json::json!(7);
        fs::write(prefix.with_extension("json"), v.to_string()).unwrap();
        let err = load_signal_set(&prefix).unwrap_err();
        assert!(err.to_string().contains("label out of range"), "{err}");
    }

    #[test]
    fn load_rejects_nan() {
        let dir = tempfile::tempdir().unwrap();
        let mut set = toy_labeled(&[4]);
        set.values[[0, 0, 0, 0]] = 1.0;
        let prefix = save_signal_set(&set, &dir.path().join("t")).unwrap();
        let mut bytes = fs::read(prefix.with_extension("f32")).unwrap();
        bytes[..4].copy_from_slice(&f32::NAN.to_le_bytes());
        fs::write(prefix.with_extension("f32"), bytes).unwrap();
        let err = load_signal_set(&prefix).unwrap_err();
        assert!(err.to_string().contains("NaN"), "{err}");
    }

    #[test]
    fn normalize_produces_unit_stats() {
        let mut set = simulate_sine(&SineParams { n_samples: 50, ..Default::default() }).unwrap();
        set.values.mapv_inplace(|v| v * 3.0 + 2.0);
        let out = normalize_channels(&set).unwrap();
        let stats = channel_stats(&out);
        for ch in 0..out.channels() {
            assert_abs_diff_eq!(stats.mean[ch], 0.0, epsilon = 1e-6);
            assert_abs_diff_eq!(stats.std[ch], 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn normalize_idempotent() {
        let set = simulate_sine(&SineParams { n_samples: 30, ..Default::default() }).unwrap();
        let once = normalize_channels(&set).unwrap();
        let twice = normalize_channels(&once).unwrap();
        for (a, b) in once.values.iter().zip(twice.values.iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-6);
        }
    }

    #[test]
    fn normalize_rejects_zero_variance() {
        let set = SignalSet::from_values(Array4::zeros((4, 2, 1, 8)));
        let err = normalize_channels(&set).unwrap_err();
        assert!(matches!(err, Error::ZeroVariance { channel: 0 }));
    }

    #[test]
    fn crop_rules() {
        let set = simulate_sine(&SineParams { n_samples: 3, length_w: 188, ..Default::default() }).unwrap();
        let cropped = crop_window(&set, 5, 55).unwrap();
        assert_eq!(cropped.width(), 50);
        assert_eq!(crop_window(&set, 0, 188).unwrap(), set);
        assert!(crop_window(&set, 10, 10).is_err());
        assert!(crop_window(&set, 0, 189).is_err());
        // Composition: crop(crop(s,a,b),c,d) = crop(s,a+c,a+d).
        let inner = crop_window(&crop_window(&set, 20, 100).unwrap(), 5, 30).unwrap();
        assert_eq!(inner, crop_window(&set, 25, 50).unwrap());
    }

    #[test]
    fn resample_balances_counts() {
        let set = toy_labeled(&[600, 1500, 900, 2000, 1200]);
        let out = resample_balanced(&set, 1000, 3).unwrap();
        assert_eq!(out.n(), 5000);
        let mut counts = [0usize; 5];
        for &l in out.labels.as_ref().unwrap() {
            counts[l as usize] += 1;
        }
        assert!(counts.iter().all(|&c| c == 1000));
        // Minority class (600 originals) must contain duplicates.
        let firsts: Vec<i64> = out
            .labels
            .as_ref()
            .unwrap()
            .iter()
            .zip(out.values.axis_iter(Axis(0)))
            .filter(|(l, _)| **l == 0)
            .map(|(_, row)| row[[0, 0, 0]] as i64)
            .collect();
        let unique: std::collections::HashSet<i64> = firsts.iter().copied().collect();
        assert!(unique.len() < firsts.len());
        // Deterministic given seed.
        assert_eq!(out, resample_balanced(&set, 1000, 3).unwrap());
    }

    #[test]
    fn resample_exact_counts_is_permutation() {
        let set = toy_labeled(&[10, 10]);
        let out = resample_balanced(&set, 10, 1).unwrap();
        let mut ids: Vec<i64> = out.values.axis_iter(Axis(0)).map(|r| r[[0, 0, 0]] as i64).collect();
        ids.sort();
        assert_eq!(ids, (0..20).collect::<Vec<i64>>());
    }

    #[test]
    fn resample_requires_labels() {
        let set = simulate_sine(&SineParams { n_samples: 5, ..Default::default() }).unwrap();
        assert!(matches!(resample_balanced(&set, 3, 0), Err(Error::Usage(_))));
    }

    #[test]
    fn csv_import_labeled() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.csv");
        fs::write(&path, "0.5,1.0,2.0,0\n1.5,2.0,3.0,1\n").unwrap();
        let set = import_csv(&path, true).unwrap();
        assert_eq!(set.values.dim(), (2, 1, 1, 3));
        assert_eq!(set.labels, Some(vec![0, 1]));
        let unlabeled = import_csv(&path, false).unwrap();
        assert_eq!(unlabeled.values.dim(), (2, 1, 1, 4));
    }
}
