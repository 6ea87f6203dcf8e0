//! Wavelet coherence between signals: Morlet continuous wavelet transform,
//! smoothed cross-spectrum coherence, and the set-level similarity score.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::SignalSet;

/// Continuous-wavelet-transform settings. Periods are log-spaced between
/// `min_period` and `max_period` (defaulting to `W/2`) with `voices` scales
/// per octave.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct CwtSpec {
    /// Morlet center frequency (nondimensional).
    pub omega0: f64,
    /// Scales per octave.
    pub voices: usize,
    pub min_period: f64,
    /// `None` means `W/2` for a length-`W` signal.
    pub max_period: Option<f64>,
}

impl Default for CwtSpec {
    fn default() -> Self {
        CwtSpec { omega0: 6.0, voices: 10, min_period: 2.0, max_period: None }
    }
}

impl CwtSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega0 > 0.0) || self.voices == 0 || !(self.min_period >= 1.0) {
            return Err(Error::Config("invalid CWT spec".into()));
        }
        if let Some(mp) = self.max_period {
            if mp < self.min_period {
                return Err(Error::Config("max_period < min_period".into()));
            }
        }
        Ok(())
    }

    /// Log-spaced wavelet periods for a length-`w` signal.
    pub fn periods(&self, w: usize) -> Vec<f64> {
        let max_p = self.max_period.unwrap_or(w as f64 / 2.0).max(self.min_period);
        let octaves = (max_p / self.min_period).log2();
        let n = (octaves * self.voices as f64).floor() as usize + 1;
        (0..n)
            .map(|j| self.min_period * 2f64.powf(j as f64 / self.voices as f64))
            .collect()
    }

    /// Fourier scale for a period: `s = p (omega0 + sqrt(2 + omega0^2)) / (4 pi)`.
    pub fn scale_for_period(&self, period: f64) -> f64 {
        period * (self.omega0 + (2.0 + self.omega0 * self.omega0).sqrt()) / (4.0 * std::f64::consts::PI)
    }
}

/// CWT coefficients of one signal: `coeffs[scale][time]`.
pub struct Cwt {
    pub coeffs: Vec<Vec<Complex64>>,
    pub periods: Vec<f64>,
    pub scales: Vec<f64>,
}

/// Analytic Morlet CWT of a real signal, computed in the frequency domain
/// with zero padding to the next power of two. The daughter wavelet at
/// scale `s` weights positive frequencies by
/// `sqrt(2 pi s) pi^{-1/4} exp(-(s w - omega0)^2 / 2)`.
pub fn cwt_morlet(x: &[f64], spec: &CwtSpec) -> Result<Cwt> {
    spec.validate()?;
    let w = x.len();
    if w < 4 {
        return Err(Error::Usage(format!("signal too short for CWT: {w}")));
    }
    let n = w.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);

    let mut xf: Vec<Complex64> = x
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(n)
        .collect();
    fft.process(&mut xf);

    // Angular frequencies of the FFT bins; only w_k > 0 carry wavelet mass
    // (analytic wavelet).
    let two_pi = 2.0 * std::f64::consts::PI;
    let omega: Vec<f64> = (0..n)
        .map(|k| {
            if k <= n / 2 {
                two_pi * k as f64 / n as f64
            } else {
                -two_pi * (n - k) as f64 / n as f64
            }
        })
        .collect();

    let periods = spec.periods(w);
    let scales: Vec<f64> = periods.iter().map(|&p| spec.scale_for_period(p)).collect();
    let norm0 = std::f64::consts::PI.powf(-0.25);
    let mut coeffs = Vec::with_capacity(scales.len());
    for &s in &scales {
        let amp = (two_pi * s).sqrt() * norm0;
        let mut buf: Vec<Complex64> = (0..n)
            .map(|k| {
                if omega[k] > 0.0 {
                    let d = s * omega[k] - spec.omega0;
                    xf[k] * (amp * (-0.5 * d * d).exp())
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        ifft.process(&mut buf);
        let inv_n = 1.0 / n as f64;
        coeffs.push(buf[..w].iter().map(|c| c * inv_n).collect());
    }
    Ok(Cwt { coeffs, periods, scales })
}

/// Smooths `field[scale][time]` the way coherence requires: a Gaussian in
/// time with standard deviation equal to the scale (kernel renormalized at
/// the edges), then a boxcar over `max(1, round(0.6 * voices))` scale bins.
fn smooth(field: &[Vec<Complex64>], scales: &[f64], voices: usize) -> Vec<Vec<Complex64>> {
    let ns = field.len();
    let w = field[0].len();
    // Time smoothing per scale.
    let mut tsm = vec![vec![Complex64::new(0.0, 0.0); w]; ns];
    for (si, row) in field.iter().enumerate() {
        let s = scales[si];
        let half = (3.0 * s).ceil() as isize;
        let weights: Vec<f64> = (-half..=half)
            .map(|d| (-0.5 * (d as f64 / s).powi(2)).exp())
            .collect();
        for t in 0..w {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut wsum = 0.0;
            for (wi, d) in (-half..=half).enumerate() {
                let u = t as isize + d;
                if u >= 0 && (u as usize) < w {
                    acc += row[u as usize] * weights[wi];
                    wsum += weights[wi];
                }
            }
            tsm[si][t] = acc / wsum;
        }
    }
    // Boxcar across scales.
    let win = ((0.6 * voices as f64).round() as usize).max(1);
    let half = win as isize / 2;
    let mut out = vec![vec![Complex64::new(0.0, 0.0); w]; ns];
    for si in 0..ns {
        for t in 0..w {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut cnt = 0.0;
            for d in -half..=(win as isize - 1 - half) {
                let u = si as isize + d;
                if u >= 0 && (u as usize) < ns {
                    acc += tsm[u as usize][t];
                    cnt += 1.0;
                }
            }
            out[si][t] = acc / cnt;
        }
    }
    out
}

/// Wavelet coherence of two equal-length channels: `coh[scale][time]` in
/// `[0, 1]`. Auto-spectra go through the identical smoothing path as the
/// cross-spectrum, so `wcoh(x, x)` is exactly 1 wherever power is nonzero.
pub fn wcoh(x: &[f64], y: &[f64], spec: &CwtSpec) -> Result<Vec<Vec<f64>>> {
    if x.len() != y.len() {
        return Err(Error::Usage(format!("length mismatch {} vs {}", x.len(), y.len())));
    }
    let cx = cwt_morlet(x, spec)?;
    let cy = cwt_morlet(y, spec)?;
    let ns = cx.scales.len();
    let w = x.len();

    // 1/s weighting before smoothing, per the standard estimator.
    let weighted = |c: &Cwt, other: &Cwt, conj_first: bool| -> Vec<Vec<Complex64>> {
        (0..ns)
            .map(|si| {
                let inv_s = 1.0 / c.scales[si];
                (0..w)
                    .map(|t| {
                        let a = if conj_first { c.coeffs[si][t].conj() } else { c.coeffs[si][t] };
                        a * other.coeffs[si][t] * inv_s
                    })
                    .collect()
            })
            .collect()
    };
    let cross = weighted(&cx, &cy, true);
    let sxx = weighted(&cx, &cx, true);
    let syy = weighted(&cy, &cy, true);

    let s_cross = smooth(&cross, &cx.scales, spec.voices);
    let s_xx = smooth(&sxx, &cx.scales, spec.voices);
    let s_yy = smooth(&syy, &cx.scales, spec.voices);

    let mut denom_max = 0.0f64;
    for si in 0..ns {
        for t in 0..w {
            denom_max = denom_max.max(s_xx[si][t].re * s_yy[si][t].re);
        }
    }
    let floor = f64::EPSILON * denom_max.max(f64::MIN_POSITIVE);

    let coh = (0..ns)
        .map(|si| {
            (0..w)
                .map(|t| {
                    let num = s_cross[si][t].norm_sqr();
                    let den = (s_xx[si][t].re * s_yy[si][t].re).max(floor);
                    (num / den).clamp(0.0, 1.0)
                })
                .collect()
        })
        .collect();
    Ok(coh)
}

/// Signal-level score: per channel, the coherence field is averaged over
/// scales and summed over time; channels are then averaged. For identical
/// inputs this equals the window length `W` exactly.
pub fn wcoh_s(x: &SignalSet, i: usize, y: &SignalSet, j: usize, spec: &CwtSpec) -> Result<f64> {
    if x.channels() != y.channels() || x.width() != y.width() {
        return Err(Error::Usage("signal sets are not comparable".into()));
    }
    if i >= x.n() || j >= y.n() {
        return Err(Error::Bounds(format!("sample index out of range ({i}, {j})")));
    }
    let mut per_channel_sum = 0.0;
    for ch in 0..x.channels() {
        let xs: Vec<f64> = (0..x.width()).map(|t| x.values[[i, ch, 0, t]] as f64).collect();
        let ys: Vec<f64> = (0..y.width()).map(|t| y.values[[j, ch, 0, t]] as f64).collect();
        let coh = wcoh(&xs, &ys, spec)?;
        let ns = coh.len() as f64;
        let mut time_sum = 0.0;
        for t in 0..x.width() {
            let mut scale_sum = 0.0;
            for row in &coh {
                scale_sum += row[t];
            }
            time_sum += scale_sum / ns;
        }
        per_channel_sum += time_sum;
    }
    Ok(per_channel_sum / x.channels() as f64)
}

/// Set-level similarity: the average of `wcoh_s` over every ordered pair
/// (one sample from each set).
pub fn wcoh_set(a: &SignalSet, b: &SignalSet, spec: &CwtSpec) -> Result<f64> {
    if a.n() == 0 || b.n() == 0 {
        return Err(Error::Usage("empty signal set".into()));
    }
    let pairs: Vec<(usize, usize)> =
        (0..a.n()).flat_map(|i| (0..b.n()).map(move |j| (i, j))).collect();
    let scores: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| wcoh_s(a, i, b, j, spec))
        .collect::<Result<Vec<f64>>>()?;
    // Fixed summation order regardless of thread scheduling.
    Ok(scores.iter().sum::<f64>() / (a.n() * b.n()) as f64)
}
