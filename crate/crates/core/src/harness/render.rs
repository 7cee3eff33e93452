use std::collections::BTreeMap;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{ImageFormat, Rgb, RgbImage};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{assemble_report, Experiment, ExperimentConfig, ExperimentReport, Histogram};
use crate::error::{Error, Result};
use crate::grid_io::{grid_to_csv, read_grid, write_atomic, write_grid};

const CELL_PX: u32 = 4;
const HIST_W: u32 = 600;
const HIST_H: u32 = 300;
const NAN_COLOR: Rgb<u8> = Rgb([128, 128, 128]);

/// Colormap anchors, dark blue through teal to yellow.
const RAMP: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

#[derive(Debug, Clone, Default)]
pub struct OutputFiles {
    pub csv: Vec<PathBuf>,
    pub json: Vec<PathBuf>,
    pub images: Vec<PathBuf>,
}

impl OutputFiles {
    pub fn all(&self) -> impl Iterator<Item = &PathBuf> {
        self.csv.iter().chain(&self.json).chain(&self.images)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ImageNote {
    file: String,
    grid: String,
    min: Option<f64>,
    max: Option<f64>,
    scale: String,
    pixels_per_cell: u32,
}

pub fn render_outputs(report: &ExperimentReport, dir: impl AsRef<Path>) -> Result<OutputFiles> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = OutputFiles::default();

    let grids: [(&str, &DMatrix<f64>); 6] = [
        ("probability", &report.probability),
        ("e_sub", &report.e_sub),
        ("e_whole", &report.e_whole),
        ("rel_improvement", &report.rel_improvement),
        ("upper_rate", &report.bounds.upper_rate),
        ("lower_rate", &report.bounds.lower_rate),
    ];
    for (name, grid) in grids {
        let path = dir.join(format!("{name}.csv"));
        write_grid(&path, grid)?;
        files.csv.push(path);
    }
    let ok = report.bounds.preconditions.ok.map(|b| if b { 1.0 } else { 0.0 });
    let path = dir.join("precondition_ok.csv");
    write_atomic(&path, grid_to_csv(&ok).as_bytes())?;
    files.csv.push(path);

    let path = dir.join("summary.json");
    write_json(&path, &summary_json(report))?;
    files.json.push(path);

    let mut notes = Vec::new();
    for (name, grid) in [
        ("probability", &report.probability),
        ("e_whole", &report.e_whole),
        ("e_sub", &report.e_sub),
        ("rel_improvement", &report.rel_improvement),
    ] {
        let (img, range) = heatmap(grid);
        let file = format!("{name}.png");
        let path = dir.join(&file);
        write_png(&path, &img)?;
        files.images.push(path);
        notes.push(ImageNote {
            file,
            grid: format!("{name}.csv"),
            min: range.map(|r| r.0),
            max: range.map(|r| r.1),
            scale: "linear, per-grid min to max; NaN cells grey".into(),
            pixels_per_cell: CELL_PX,
        });
    }
    let path = dir.join("rel_improvement_hist.png");
    write_png(&path, &histogram_image(&report.histogram))?;
    files.images.push(path);

    let path = dir.join("images.json");
    write_json(
        &path,
        &json!({
            "heatmaps": notes,
            "histogram": {
                "file": "rel_improvement_hist.png",
                "bins": report.histogram.counts.len(),
                "range": [report.histogram.edges.first(), report.histogram.edges.last()],
                "scale": "bar height proportional to count, tallest bar fills the plot",
            },
        }),
    )?;
    files.json.push(path);
    Ok(files)
}

/// Rebuilds a report from a directory written by [`render_outputs`].
pub fn load_report(dir: impl AsRef<Path>) -> Result<ExperimentReport> {
    let dir = dir.as_ref();
    let path = dir.join("summary.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let summary: Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.clone(),
        message: e.to_string(),
    })?;
    let config: ExperimentConfig =
        serde_json::from_value(summary["config"].clone()).map_err(|e| Error::Parse {
            path: path.clone(),
            message: format!("config: {e}"),
        })?;
    let exp = Experiment::prepare(config)?;
    let e_sub = read_grid(dir.join("e_sub.csv"))?;
    let e_whole = read_grid(dir.join("e_whole.csv"))?;
    assemble_report(&exp, e_sub, e_whole)
}

fn summary_json(report: &ExperimentReport) -> Value {
    let cfg = &report.config;
    let block_means: BTreeMap<&str, _> = report
        .aggregates
        .iter()
        .map(|a| (a.name.as_str(), a))
        .collect();
    let pre = &report.bounds.preconditions.summary;
    json!({
        "config": cfg,
        "block_means": block_means,
        "overall_mean": report.mean_improvement("overall"),
        "fraction_positive": report.fraction_positive,
        "histogram": report.histogram,
        "i_star": report.i_star,
        "manifest": {
            "r": cfg.r,
            "seed": cfg.seed,
            "trials": cfg.trials,
            "estimators": ["svt_sub", "svt_whole"],
            "error_metric": "mean_absolute",
            "group_shapes": report.group_shapes,
            "warnings": {
                "precondition_flagged_entries": pre.flagged,
                "whole_matrix_precondition_failed": !pre.whole_matrix_ok,
                "excluded_rel_improvement_entries": report.excluded,
                "infinite_upper_rate_entries":
                    report.bounds.upper_rate.iter().filter(|v| v.is_infinite()).count(),
            },
        },
        "bounds": {
            "delta": report.bounds.delta,
            "flagged": pre.flagged,
            "total": pre.total,
            "whole_matrix_ok": pre.whole_matrix_ok,
            "block_table": report.bounds.block_summary,
        },
    })
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn write_png(path: &Path, img: &RgbImage) -> Result<()> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    write_atomic(path, buf.get_ref())
}

fn ramp(t: f64) -> Rgb<u8> {
    let t = t.clamp(0.0, 1.0) * (RAMP.len() - 1) as f64;
    let k = (t.floor() as usize).min(RAMP.len() - 2);
    let f = t - k as f64;
    let c = |c: usize| (RAMP[k][c] + f * (RAMP[k + 1][c] - RAMP[k][c])).round() as u8;
    Rgb([c(0), c(1), c(2)])
}

fn heatmap(grid: &DMatrix<f64>) -> (RgbImage, Option<(f64, f64)>) {
    let finite = grid.iter().copied().filter(|v| v.is_finite());
    let range = finite.fold(None, |acc: Option<(f64, f64)>, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    });
    let (n, m) = grid.shape();
    let img = RgbImage::from_fn(m as u32 * CELL_PX, n as u32 * CELL_PX, |x, y| {
        let v = grid[((y / CELL_PX) as usize, (x / CELL_PX) as usize)];
        match range {
            Some((lo, hi)) if v.is_finite() => {
                ramp(if hi > lo { (v - lo) / (hi - lo) } else { 0.5 })
            }
            _ => NAN_COLOR,
        }
    });
    (img, range)
}

fn histogram_image(h: &Histogram) -> RgbImage {
    let mut img = RgbImage::from_pixel(HIST_W, HIST_H, Rgb([255, 255, 255]));
    let peak = h.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let bar_w = HIST_W / h.counts.len().max(1) as u32;
    for (k, &c) in h.counts.iter().enumerate() {
        let height = ((c as f64 / peak) * (HIST_H - 1) as f64).round() as u32;
        let x0 = k as u32 * bar_w;
        for x in x0..(x0 + bar_w.saturating_sub(1)).min(HIST_W) {
            for y in (HIST_H - height)..HIST_H {
                img.put_pixel(x, y, Rgb([49, 104, 142]));
            }
        }
    }
    // zero marker when the range straddles it
    if let (Some(&lo), Some(&hi)) = (h.edges.first(), h.edges.last()) {
        if lo < 0.0 && hi > 0.0 {
            let x = ((-lo / (hi - lo)) * (bar_w * h.counts.len() as u32) as f64) as u32;
            for y in 0..HIST_H {
                img.put_pixel(x.min(HIST_W - 1), y, Rgb([200, 30, 30]));
            }
        }
    }
    img
}
