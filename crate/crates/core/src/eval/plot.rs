//! Path-count sweep output: a CSV table and a PNG line chart of the
//! response-side metrics against the number of candidate paths.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use super::report::MetricsReport;
use crate::error::{DicrError, Result};

/// Metrics drawn in the chart, with their line colours.
pub const SWEEP_SERIES: [(&str, [u8; 3]); 5] = [
    ("hit", [214, 39, 40]),
    ("g_inter", [31, 119, 180]),
    ("g_inner", [44, 160, 44]),
    ("p_inter", [255, 127, 14]),
    ("p_inner", [148, 103, 189]),
];

const WIDTH: u32 = 640;
const HEIGHT: u32 = 400;
const MARGIN: i64 = 40;

fn value(r: &MetricsReport, name: &str) -> f64 {
    r.metrics()
        .into_iter()
        .find(|(k, _)| *k == name)
        .map_or(f64::NAN, |(_, v)| v)
}

/// Sorted by path count; rejects mixed schema versions.
fn sorted(reports: &[MetricsReport]) -> Result<Vec<&MetricsReport>> {
    let Some(first) = reports.first() else {
        return Err(DicrError::Precondition("nothing to plot".into()));
    };
    if let Some(bad) = reports
        .iter()
        .find(|r| r.schema_version != first.schema_version)
    {
        return Err(DicrError::Version(format!(
            "mixed report schema versions {} and {}",
            first.schema_version, bad.schema_version
        )));
    }
    let mut out: Vec<&MetricsReport> = reports.iter().collect();
    out.sort_by_key(|r| r.n_paths);
    Ok(out)
}

pub fn sweep_csv(reports: &[MetricsReport]) -> Result<String> {
    let rows = sorted(reports)?;
    let names: Vec<&str> = rows[0].metrics().iter().map(|(k, _)| *k).collect();
    let mut out = format!("n_paths,{}\n", names.join(","));
    for r in rows {
        let vals: Vec<String> = r.metrics().iter().map(|(_, v)| format!("{v:.6}")).collect();
        out.push_str(&format!("{},{}\n", r.n_paths, vals.join(",")));
    }
    Ok(out)
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
    let steps = (x1 - x0).abs().max((y1 - y0).abs()).max(1);
    for s in 0..=steps {
        let x = x0 + (x1 - x0) * s / steps;
        let y = y0 + (y1 - y0) * s / steps;
        for d in 0..2 {
            put(img, x, y + d, c);
        }
    }
}

/// Line chart of [`SWEEP_SERIES`] over the reports' path counts, y in `[0, 1]`.
pub fn sweep_chart(reports: &[MetricsReport]) -> Result<RgbImage> {
    let rows = sorted(reports)?;
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
    let (w, h) = (WIDTH as i64, HEIGHT as i64);
    let black = Rgb([0, 0, 0]);
    let grey = Rgb([220, 220, 220]);
    for k in 0..=4 {
        let y = h - MARGIN - (h - 2 * MARGIN) * k / 4;
        line(&mut img, (MARGIN, y), (w - MARGIN, y), grey);
    }
    line(
        &mut img,
        (MARGIN, h - MARGIN),
        (w - MARGIN, h - MARGIN),
        black,
    );
    line(&mut img, (MARGIN, MARGIN), (MARGIN, h - MARGIN), black);
    let lo = rows[0].n_paths as f64;
    let hi = rows[rows.len() - 1].n_paths as f64;
    let px = |n: usize| -> i64 {
        if hi > lo {
            MARGIN + ((n as f64 - lo) / (hi - lo) * (w - 2 * MARGIN) as f64).round() as i64
        } else {
            w / 2
        }
    };
    let py = |v: f64| -> i64 {
        h - MARGIN - (v.clamp(0.0, 1.0) * (h - 2 * MARGIN) as f64).round() as i64
    };
    for (i, (name, rgb)) in SWEEP_SERIES.iter().enumerate() {
        let c = Rgb(*rgb);
        let pts: Vec<(i64, i64)> = rows
            .iter()
            .filter(|r| value(r, name).is_finite())
            .map(|r| (px(r.n_paths), py(value(r, name))))
            .collect();
        for win in pts.windows(2) {
            line(&mut img, win[0], win[1], c);
        }
        for &(x, y) in &pts {
            for dx in -3..=3 {
                for dy in -3..=3 {
                    put(&mut img, x + dx, y + dy, c);
                }
            }
        }
        // Legend swatch, in series order from the top right.
        let lx = w - MARGIN - 12;
        let ly = MARGIN + 14 * i as i64;
        for dx in 0..10 {
            for dy in 0..10 {
                put(&mut img, lx + dx, ly + dy, c);
            }
        }
    }
    // Tick marks at each path count.
    for r in &rows {
        let x = px(r.n_paths);
        line(&mut img, (x, h - MARGIN), (x, h - MARGIN + 6), black);
    }
    Ok(img)
}

/// Writes `sweep.csv` and `sweep.png` into `dir`.
pub fn emit_plots(reports: &[MetricsReport], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| DicrError::path(dir, e))?;
    let csv = dir.join("sweep.csv");
    std::fs::write(&csv, sweep_csv(reports)?).map_err(|e| DicrError::path(&csv, e))?;
    let png = dir.join("sweep.png");
    sweep_chart(reports)?
        .save(&png)
        .map_err(|e| DicrError::Image(e.to_string()))?;
    Ok(vec![csv, png])
}
