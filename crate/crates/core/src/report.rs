//! Analysis outputs: CSV tables, PPM heatmaps, and key=value metadata
//! sidecars. Everything here is byte-deterministic for a given input so
//! runs can be diffed.

use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::SweepReport;
use crate::spectrum::{SpectralPoint, SpectrumSummary};
use crate::tensor::Tensor;

/// Sigma column format: whole numbers print without a decimal point.
fn format_sigma(sigma: f64) -> String {
    if sigma == sigma.trunc() && sigma.abs() < 1e15 {
        format!("{}", sigma as i64)
    } else {
        format!("{sigma}")
    }
}

/// `sigma,images,correct,accuracy` rows in ascending sigma, accuracy with
/// four decimals, LF endings.
pub fn sweep_csv_bytes(report: &SweepReport) -> Vec<u8> {
    let mut rows: Vec<_> = report.rows.iter().collect();
    rows.sort_by(|a, b| a.sigma.total_cmp(&b.sigma));
    let mut out = String::from("sigma,images,correct,accuracy\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{:.4}\n",
            format_sigma(row.sigma),
            row.images_evaluated,
            row.correct,
            row.accuracy
        ));
    }
    out.into_bytes()
}

pub fn write_sweep_csv(report: &SweepReport, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(&path, sweep_csv_bytes(report)).map_err(|e| Error::io(&path, e))
}

/// Piecewise-linear blue -> cyan -> yellow -> red over t in [0, 1].
pub fn colormap(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    let anchors: [(f64, [f64; 3]); 4] = [
        (0.0, [0.0, 0.0, 255.0]),
        (1.0 / 3.0, [0.0, 255.0, 255.0]),
        (2.0 / 3.0, [255.0, 255.0, 0.0]),
        (1.0, [255.0, 0.0, 0.0]),
    ];
    for pair in anchors.windows(2) {
        let (t0, c0) = pair[0];
        let (t1, c1) = pair[1];
        if t <= t1 {
            let u = (t - t0) / (t1 - t0);
            return [
                (c0[0] + u * (c1[0] - c0[0])).round() as u8,
                (c0[1] + u * (c1[1] - c0[1])).round() as u8,
                (c0[2] + u * (c1[2] - c0[2])).round() as u8,
            ];
        }
    }
    [255, 0, 0]
}

/// Binary PPM (P6) of a non-negative grid, colored over
/// `log(1 + m) / log(1 + peak)`. Zero bins render blue, the peak red.
pub fn heatmap_bytes(grid: &Tensor) -> Result<Vec<u8>> {
    if grid.rank() != 2 {
        return Err(Error::RankMismatch {
            expected: 2,
            shape: grid.shape().to_vec(),
        });
    }
    if grid.data().iter().any(|&v| v < 0.0) {
        return Err(Error::NegativeGrid);
    }
    let (height, width) = (grid.shape()[0], grid.shape()[1]);
    let peak = grid.data().iter().cloned().fold(0.0f64, f64::max);
    let scale = (1.0 + peak).ln();
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    for &value in grid.data() {
        let t = if scale > 0.0 {
            (1.0 + value).ln() / scale
        } else {
            0.0
        };
        out.extend_from_slice(&colormap(t));
    }
    Ok(out)
}

pub fn write_heatmap(grid: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let bytes = heatmap_bytes(grid)?;
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
}

/// `freq_channel,freq_y,freq_x,magnitude` rows for a 3D kernel spectrum.
pub fn pointcloud_csv_bytes(points: &[SpectralPoint]) -> Vec<u8> {
    let mut out = String::from("freq_channel,freq_y,freq_x,magnitude\n");
    for p in points {
        out.push_str(&format!(
            "{:.6},{:.6},{:.6},{:.9}\n",
            p.freq_channel, p.freq_y, p.freq_x, p.magnitude
        ));
    }
    out.into_bytes()
}

pub fn write_pointcloud_csv(points: &[SpectralPoint], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(&path, pointcloud_csv_bytes(points)).map_err(|e| Error::io(&path, e))
}

/// `filter_id,peak,concentration,entropy` rows.
pub fn metrics_csv_bytes(summaries: &[SpectrumSummary]) -> Vec<u8> {
    let mut out = String::from("filter_id,peak,concentration,entropy\n");
    for s in summaries {
        out.push_str(&format!(
            "{},{:.9},{:.9},{:.9}\n",
            s.filter_id, s.peak, s.concentration, s.entropy
        ));
    }
    out.into_bytes()
}

pub fn write_metrics_csv(summaries: &[SpectrumSummary], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(&path, metrics_csv_bytes(summaries)).map_err(|e| Error::io(&path, e))
}

/// key=value metadata sidecar, one entry per line, insertion order.
pub fn write_meta(path: impl AsRef<Path>, entries: &[(String, String)]) -> Result<()> {
    let mut out = String::new();
    for (key, value) in entries {
        out.push_str(&format!("{key}={value}\n"));
    }
    std::fs::write(&path, out).map_err(|e| Error::io(&path, e))
}
