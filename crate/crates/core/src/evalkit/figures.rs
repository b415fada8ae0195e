//! Deterministic figure rendering: impedance sections, residual panels, trace
//! overlays, and metric line charts, plus a JSON index of everything written.

use super::metrics::MetricReport;
use crate::error::Result;
use crate::io::atomic_write;
use image::{Rgb, RgbImage};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// One line chart: a metric against a swept parameter, one series per method.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x: Vec<f64>,
    pub series: Vec<(String, Vec<f64>)>,
}

/// Everything the renderer needs for one experiment's figure set.
#[derive(Debug, Clone, Default)]
pub struct ResultSet {
    pub truth: Option<Array2<f64>>,
    /// (method name, inverted impedance)
    pub sections: Vec<(String, Array2<f64>)>,
    pub reports: Vec<(String, MetricReport)>,
    pub sweeps: Vec<SweepChart>,
    /// Trace index for the overlay plot; defaults to the middle trace.
    pub overlay_trace: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FigureIndex {
    pub files: Vec<String>,
    pub reports: Vec<(String, MetricReport)>,
    pub sweeps: Vec<SweepChart>,
}

fn colormap(t: f64) -> Rgb<u8> {
    // compact blue->green->yellow ramp
    let t = t.clamp(0.0, 1.0);
    let r = (255.0 * (1.5 * t - 0.25).clamp(0.0, 1.0)) as u8;
    let g = (255.0 * (1.2 * t + 0.05).clamp(0.0, 1.0)) as u8;
    let b = (255.0 * (1.0 - 0.9 * t)) as u8;
    Rgb([r, g, b])
}

fn render_field(field: &Array2<f64>, lo: f64, hi: f64) -> RgbImage {
    let (m, n) = field.dim();
    let scale = if hi > lo { 1.0 / (hi - lo) } else { 1.0 };
    let mut img = RgbImage::new(n as u32, m as u32);
    for i in 0..m {
        for j in 0..n {
            let t = (field[[i, j]] - lo) * scale;
            img.put_pixel(j as u32, i as u32, colormap(t));
        }
    }
    img
}

fn png_bytes(img: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut buf), image::ImageFormat::Png)
        .map_err(|e| crate::error::SaiiError::Format(e.to_string()))?;
    Ok(buf)
}

const SERIES_COLORS: [Rgb<u8>; 6] = [
    Rgb([200, 40, 40]),
    Rgb([40, 90, 200]),
    Rgb([30, 150, 60]),
    Rgb([200, 140, 20]),
    Rgb([130, 60, 180]),
    Rgb([20, 20, 20]),
];

fn draw_line(img: &mut RgbImage, x0: i64, y0: i64, x1: i64, y1: i64, color: Rgb<u8>) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let (mut x, mut y) = (x0, y0);
    loop {
        if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn render_chart(xs: &[f64], series: &[(String, Vec<f64>)]) -> RgbImage {
    let (w, h) = (640u32, 480u32);
    let margin = 50i64;
    let mut img = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
    // axes
    draw_line(&mut img, margin, h as i64 - margin, w as i64 - 10, h as i64 - margin, Rgb([0, 0, 0]));
    draw_line(&mut img, margin, 10, margin, h as i64 - margin, Rgb([0, 0, 0]));

    let x_lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let x_hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    for (_, ys) in series {
        for &y in ys {
            y_lo = y_lo.min(y);
            y_hi = y_hi.max(y);
        }
    }
    if !(y_hi > y_lo) {
        y_hi = y_lo + 1.0;
    }
    let x_span = if x_hi > x_lo { x_hi - x_lo } else { 1.0 };
    let plot_w = (w as i64 - 10 - margin) as f64;
    let plot_h = (h as i64 - 10 - margin) as f64;
    let to_px = |x: f64, y: f64| -> (i64, i64) {
        let px = margin as f64 + (x - x_lo) / x_span * plot_w;
        let py = (h as i64 - margin) as f64 - (y - y_lo) / (y_hi - y_lo) * plot_h;
        (px as i64, py as i64)
    };
    for (si, (_, ys)) in series.iter().enumerate() {
        let color = SERIES_COLORS[si % SERIES_COLORS.len()];
        for k in 1..ys.len().min(xs.len()) {
            let (x0, y0) = to_px(xs[k - 1], ys[k - 1]);
            let (x1, y1) = to_px(xs[k], ys[k]);
            draw_line(&mut img, x0, y0, x1, y1, color);
        }
        // markers
        for k in 0..ys.len().min(xs.len()) {
            let (x0, y0) = to_px(xs[k], ys[k]);
            for di in -2i64..=2 {
                for dj in -2i64..=2 {
                    if di.abs() + dj.abs() <= 2 {
                        let (px, py) = (x0 + dj, y0 + di);
                        if px >= 0 && py >= 0 && (px as u32) < w && (py as u32) < h {
                            img.put_pixel(px as u32, py as u32, color);
                        }
                    }
                }
            }
        }
    }
    img
}

fn render_overlay(truth: Option<&Array2<f64>>, sections: &[(String, Array2<f64>)], trace: usize) -> RgbImage {
    let mut series: Vec<(String, Vec<f64>)> = Vec::new();
    if let Some(t) = truth {
        series.push(("truth".into(), t.column(trace).to_vec()));
    }
    for (name, s) in sections {
        series.push((name.clone(), s.column(trace).to_vec()));
    }
    let len = series.first().map(|(_, v)| v.len()).unwrap_or(0);
    let xs: Vec<f64> = (0..len).map(|i| i as f64).collect();
    render_chart(&xs, &series)
}

/// Renders the full figure set and writes `index.json` describing it.
pub fn emit_figures(result_set: &ResultSet, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    let mut write_png = |name: &str, img: &RgbImage, files: &mut Vec<PathBuf>| -> Result<()> {
        let path = out_dir.join(name);
        atomic_write(&path, &png_bytes(img)?)?;
        files.push(path);
        Ok(())
    };

    // shared color scale anchored on the truth when present
    let (lo, hi) = match &result_set.truth {
        Some(t) => (
            t.iter().cloned().fold(f64::INFINITY, f64::min),
            t.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        ),
        None => {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for (_, s) in &result_set.sections {
                lo = lo.min(s.iter().cloned().fold(f64::INFINITY, f64::min));
                hi = hi.max(s.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
            }
            (lo, hi)
        }
    };

    if let Some(t) = &result_set.truth {
        write_png("truth.png", &render_field(t, lo, hi), &mut files)?;
    }
    for (name, section) in &result_set.sections {
        write_png(&format!("section_{name}.png"), &render_field(section, lo, hi), &mut files)?;
        if let Some(t) = &result_set.truth {
            let residual = section - t;
            let r = residual.iter().cloned().fold(0.0f64, |m, v| m.max(v.abs()));
            write_png(
                &format!("residual_{name}.png"),
                &render_field(&residual, -r, r),
                &mut files,
            )?;
        }
    }

    if !result_set.sections.is_empty() || result_set.truth.is_some() {
        let cols = result_set
            .sections
            .first()
            .map(|(_, s)| s.ncols())
            .or_else(|| result_set.truth.as_ref().map(|t| t.ncols()))
            .unwrap_or(1);
        let trace = result_set.overlay_trace.unwrap_or(cols / 2).min(cols.saturating_sub(1));
        write_png(
            "trace_overlay.png",
            &render_overlay(result_set.truth.as_ref(), &result_set.sections, trace),
            &mut files,
        )?;
    }

    for (k, sweep) in result_set.sweeps.iter().enumerate() {
        write_png(&format!("sweep_{k}_{}.png", sweep.title), &render_chart(&sweep.x, &sweep.series), &mut files)?;
    }

    let index = FigureIndex {
        files: files
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect(),
        reports: result_set.reports.clone(),
        sweeps: result_set.sweeps.clone(),
    };
    let index_path = out_dir.join("index.json");
    atomic_write(&index_path, &serde_json::to_vec_pretty(&index)?)?;
    files.push(index_path);
    Ok(files)
}
