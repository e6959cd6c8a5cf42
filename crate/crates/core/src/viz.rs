//! Grayscale renderings of maps, templates and peak-location heatmaps.
//!
//! Grids are upsampled nearest-neighbour: image pixel `(r, c)` shows cell
//! `(r·n/H, c·n/W)`.

use crate::interp::{FeatureMap, Location, TemplateBank};
use crate::pnm::GrayImage;

/// Grey level for `value` when `scale` maps to white; zero or negative
/// scales render black.
pub fn level(value: f64, scale: f64) -> u8 {
    if scale <= 0.0 {
        return 0;
    }
    (value / scale * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Upsamples an `n×n` grid to `height×width`, mapping each value through `f`.
pub fn upsample(grid: &[f64], n: usize, height: usize, width: usize, f: impl Fn(f64) -> u8) -> GrayImage {
    let mut pixels = Vec::with_capacity(height * width);
    for r in 0..height {
        let i = r * n / height;
        for c in 0..width {
            pixels.push(f(grid[i * n + c * n / width]));
        }
    }
    GrayImage { width, height, pixels }
}

/// The map scaled by `scale` (normally its own peak).
pub fn render_map(map: &FeatureMap, height: usize, width: usize, scale: f64) -> GrayImage {
    upsample(map.values(), map.n(), height, width, |v| level(v, scale))
}

/// A positive template with `−τ` as black and `τ` as white.
pub fn render_template(bank: &TemplateBank, mu: Location, height: usize, width: usize) -> GrayImage {
    let tau = bank.tau();
    upsample(bank.positive(mu), bank.n(), height, width, |t| level(t + tau, 2.0 * tau))
}

/// Count of images whose peak falls in each cell.
pub fn peak_histogram(selections: &[Location], n: usize) -> Vec<u64> {
    let mut counts = vec![0u64; n * n];
    for mu in selections {
        counts[mu.row * n + mu.col] += 1;
    }
    counts
}

/// Heatmap of `counts`, scaled by the largest count.
pub fn render_heatmap(counts: &[u64], n: usize, height: usize, width: usize) -> GrayImage {
    let max = counts.iter().copied().max().unwrap_or(0) as f64;
    let grid: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    upsample(&grid, n, height, width, |v| level(v, max))
}
