//! Minimal PNG emitters for projections and fusion maps.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::eval::fusion::FusionMap;

const SIZE: u32 = 512;
const MARGIN: u32 = 20;

pub const REAL_COLOR: Rgb<u8> = Rgb([31, 119, 180]);
pub const SYN_COLOR: Rgb<u8> = Rgb([214, 39, 40]);

fn save(img: RgbImage, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    img.save(path).map_err(|e| Error::Io(std::io::Error::other(e)))
}

/// Scatter plot of labeled point groups on a white background.
pub fn scatter_png(groups: &[(&[(f64, f64)], Rgb<u8>)], path: &Path) -> Result<()> {
    let mut img = RgbImage::from_pixel(SIZE, SIZE, Rgb([255, 255, 255]));
    let all: Vec<&(f64, f64)> = groups.iter().flat_map(|(pts, _)| pts.iter()).collect();
    if all.is_empty() {
        return Err(Error::Usage("nothing to plot".into()));
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &&(x, y) in &all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let sx = (x1 - x0).max(f64::MIN_POSITIVE);
    let sy = (y1 - y0).max(f64::MIN_POSITIVE);
    let span = (SIZE - 2 * MARGIN) as f64;
    for (pts, color) in groups {
        for &(x, y) in *pts {
            let px = MARGIN as f64 + (x - x0) / sx * span;
            // Flip y so larger values render higher.
            let py = MARGIN as f64 + (1.0 - (y - y0) / sy) * span;
            for dx in -1i64..=1 {
                for dy in -1i64..=1 {
                    let u = (px as i64 + dx).clamp(0, SIZE as i64 - 1) as u32;
                    let v = (py as i64 + dy).clamp(0, SIZE as i64 - 1) as u32;
                    img.put_pixel(u, v, *color);
                }
            }
        }
    }
    save(img, path)
}

/// Renders the fusion histogram as a heatmap: brighter cells hold more
/// points (dark background, yellow-white ridge).
pub fn fusion_png(map: &FusionMap, path: &Path) -> Result<()> {
    let cw = (SIZE / map.time_bins as u32).max(1);
    let ch = (SIZE / map.value_bins as u32).max(1);
    let width = map.time_bins as u32 * cw;
    let height = map.value_bins as u32 * ch;
    let mut img = RgbImage::from_pixel(width, height, Rgb([10, 10, 35]));
    let max = map.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    for vb in 0..map.value_bins {
        for tb in 0..map.time_bins {
            let f = (map.at(vb, tb) as f64 / max).sqrt();
            let px = Rgb([
                (10.0 + 245.0 * f) as u8,
                (10.0 + 215.0 * f) as u8,
                (35.0 + 90.0 * f) as u8,
            ]);
            for dy in 0..ch {
                for dx in 0..cw {
                    // Row 0 is the lowest value bin; draw it at the bottom.
                    let y = height - 1 - (vb as u32 * ch + dy);
                    img.put_pixel(tb as u32 * cw + dx, y, px);
                }
            }
        }
    }
    save(img, path)
}

/// Line plot of the channels of one signal sample.
pub fn signal_png(channels: &[Vec<f64>], path: &Path) -> Result<()> {
    if channels.is_empty() || channels[0].is_empty() {
        return Err(Error::Usage("nothing to plot".into()));
    }
    let mut img = RgbImage::from_pixel(SIZE, SIZE, Rgb([255, 255, 255]));
    let (mut lo, mut hi) = (f64::MAX, f64::MIN);
    for ch in channels {
        for &v in ch {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let span_v = (hi - lo).max(f64::MIN_POSITIVE);
    let palette = [
        Rgb([31u8, 119, 180]),
        Rgb([255, 127, 14]),
        Rgb([44, 160, 44]),
        Rgb([214, 39, 40]),
        Rgb([148, 103, 189]),
        Rgb([140, 86, 75]),
    ];
    let inner = (SIZE - 2 * MARGIN) as f64;
    for (ci, ch) in channels.iter().enumerate() {
        let color = palette[ci % palette.len()];
        let w = ch.len();
        let to_px = |t: usize, v: f64| -> (f64, f64) {
            let x = MARGIN as f64 + t as f64 / (w - 1).max(1) as f64 * inner;
            let y = MARGIN as f64 + (1.0 - (v - lo) / span_v) * inner;
            (x, y)
        };
        for t in 0..w.saturating_sub(1) {
            let (x0, y0) = to_px(t, ch[t]);
            let (x1, y1) = to_px(t + 1, ch[t + 1]);
            let steps = ((x1 - x0).abs().max((y1 - y0).abs()) as usize).max(1);
            for s in 0..=steps {
                let f = s as f64 / steps as f64;
                let u = (x0 + (x1 - x0) * f) as u32;
                let v = (y0 + (y1 - y0) * f) as u32;
                img.put_pixel(u.min(SIZE - 1), v.min(SIZE - 1), color);
            }
        }
    }
    save(img, path)
}
