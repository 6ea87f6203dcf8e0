//! Fusion maps: 2-D histograms of (timestep, value) occurrences across all
//! samples of a set, visualizing where signal mass concentrates over time.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::signal::SignalSet;

/// A `value_bins x time_bins` count grid for one channel. Every (sample,
/// timestep) pair lands in exactly one cell (out-of-range values clip into
/// the boundary rows), so the counts always sum to `N * W`.
#[derive(Debug, Clone, Serialize)]
pub struct FusionMap {
    pub channel: usize,
    pub time_bins: usize,
    pub value_bins: usize,
    pub value_min: f64,
    pub value_max: f64,
    /// Row-major `value_bins * time_bins`; row 0 is the lowest value bin.
    pub counts: Vec<u64>,
}

impl FusionMap {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn at(&self, value_bin: usize, time_bin: usize) -> u64 {
        self.counts[value_bin * self.time_bins + time_bin]
    }

    /// Value-bin center with the highest count in one time column.
    pub fn column_argmax_value(&self, time_bin: usize) -> f64 {
        let mut best = 0usize;
        for vb in 1..self.value_bins {
            if self.at(vb, time_bin) > self.at(best, time_bin) {
                best = vb;
            }
        }
        let width = (self.value_max - self.value_min) / self.value_bins as f64;
        self.value_min + (best as f64 + 0.5) * width
    }
}

fn clip_bin(v: f64, lo: f64, hi: f64, bins: usize) -> usize {
    if hi <= lo {
        return 0;
    }
    let raw = ((v - lo) / (hi - lo) * bins as f64).floor() as isize;
    raw.clamp(0, bins as isize - 1) as usize
}

/// Histograms one channel of `set`. `value_range` of `None` uses the
/// channel's empirical min/max; `time_bins` of `None` uses one bin per
/// timestep.
pub fn fusion_map(
    set: &SignalSet,
    channel: usize,
    time_bins: Option<usize>,
    value_bins: usize,
    value_range: Option<(f64, f64)>,
) -> Result<FusionMap> {
    if set.n() == 0 {
        return Err(Error::Usage("fusion map needs a nonempty set".into()));
    }
    if channel >= set.channels() {
        return Err(Error::Bounds(format!(
            "channel {channel} out of range for {} channels",
            set.channels()
        )));
    }
    let w = set.width();
    let time_bins = time_bins.unwrap_or(w);
    if time_bins == 0 || value_bins == 0 {
        return Err(Error::Config("fusion map needs positive bin counts".into()));
    }
    let (lo, hi) = match value_range {
        Some((lo, hi)) => {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::Config("invalid value range".into()));
            }
            (lo, hi)
        }
        None => {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for i in 0..set.n() {
                for t in 0..w {
                    let v = set.values[[i, channel, 0, t]] as f64;
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            if lo == hi {
                // Constant channel: widen symmetrically so the single value
                // lands mid-grid.
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        }
    };
    let mut counts = vec![0u64; value_bins * time_bins];
    for i in 0..set.n() {
        for t in 0..w {
            let tb = (t * time_bins) / w;
            let vb = clip_bin(set.values[[i, channel, 0, t]] as f64, lo, hi, value_bins);
            counts[vb * time_bins + tb] += 1;
        }
    }
    Ok(FusionMap { channel, time_bins, value_bins, value_min: lo, value_max: hi, counts })
}
