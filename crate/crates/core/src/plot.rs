//! Training-curve rendering: per-configuration mean with a min/max band over
//! runs (seeds), for average reward and average steps.

use std::path::{Path, PathBuf};

use plotters::prelude::*;
use thiserror::Error;

use crate::trainer::{MetricsRow, METRICS_HEADER};

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: row {row}: {message}")]
    Malformed { path: PathBuf, row: usize, message: String },
    #[error("{0}: no metrics rows")]
    Empty(PathBuf),
    #[error("nothing to plot")]
    NoRuns,
    #[error("rendering failed: {0}")]
    Render(String),
}

/// One metrics CSV tagged with the configuration it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRun {
    pub label: String,
    pub rows: Vec<MetricsRow>,
}

/// Reads a metrics CSV. Rows are numbered from 1 after the header, so row 0
/// is the header itself.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>, PlotError> {
    let text = std::fs::read_to_string(path).map_err(|source| PlotError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_metrics(path, &text)
}

pub fn parse_metrics(path: &Path, text: &str) -> Result<Vec<MetricsRow>, PlotError> {
    let malformed = |row: usize, message: String| PlotError::Malformed {
        path: path.to_path_buf(),
        row,
        message,
    };
    if text.trim().is_empty() {
        return Err(PlotError::Empty(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| malformed(0, e.to_string()))?;
    if header.iter().map(str::trim).ne(METRICS_HEADER) {
        return Err(malformed(0, format!("expected header `{}`", METRICS_HEADER.join(","))));
    }
    let mut rows: Vec<MetricsRow> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| malformed(row, e.to_string()))?;
        let field = |k: usize| -> Result<f64, PlotError> {
            let raw = record.get(k).unwrap_or("").trim();
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| malformed(row, format!("{} `{raw}` is not a finite number", METRICS_HEADER[k])))
        };
        let iteration = record
            .get(0)
            .and_then(|s| s.trim().parse::<u64>().ok())
            .ok_or_else(|| malformed(row, "iteration is not a non-negative integer".into()))?;
        if rows.last().is_some_and(|prev| prev.iteration >= iteration) {
            return Err(malformed(row, "iterations must increase".into()));
        }
        rows.push(MetricsRow {
            iteration,
            wall_seconds: field(1)?,
            avg_reward: field(2)?,
            avg_steps: field(3)?,
            success_ratio: field(4)?,
        });
    }
    if rows.is_empty() {
        return Err(PlotError::Empty(path.to_path_buf()));
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPoint {
    pub iteration: u64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Aggregate curves of all runs sharing a label.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub label: String,
    pub runs: usize,
    pub reward: Vec<BandPoint>,
    pub steps: Vec<BandPoint>,
}

/// Groups runs by label (first-appearance order) and aggregates them at the
/// iterations every run of the group has logged.
pub fn bands(runs: &[MetricsRun]) -> Vec<Band> {
    let mut labels: Vec<&str> = Vec::new();
    for r in runs {
        if !labels.contains(&r.label.as_str()) {
            labels.push(&r.label);
        }
    }
    labels
        .into_iter()
        .map(|label| {
            let group: Vec<&MetricsRun> = runs.iter().filter(|r| r.label == label).collect();
            let common: Vec<u64> = group[0]
                .rows
                .iter()
                .map(|row| row.iteration)
                .filter(|it| group.iter().all(|r| r.rows.iter().any(|row| row.iteration == *it)))
                .collect();
            let aggregate = |pick: fn(&MetricsRow) -> f64| -> Vec<BandPoint> {
                common
                    .iter()
                    .map(|&it| {
                        let values: Vec<f64> = group
                            .iter()
                            .filter_map(|r| r.rows.iter().find(|row| row.iteration == it))
                            .map(pick)
                            .collect();
                        BandPoint {
                            iteration: it,
                            mean: values.iter().sum::<f64>() / values.len() as f64,
                            min: values.iter().cloned().fold(f64::INFINITY, f64::min),
                            max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                        }
                    })
                    .collect()
            };
            Band {
                label: label.to_string(),
                runs: group.len(),
                reward: aggregate(|r| r.avg_reward),
                steps: aggregate(|r| r.avg_steps),
            }
        })
        .collect()
}

type Series = fn(&Band) -> &[BandPoint];

fn render_err(e: impl std::fmt::Display) -> PlotError {
    PlotError::Render(e.to_string())
}

/// Draws both panels (average reward above, average steps below) as SVG.
pub fn render_svg(bands: &[Band], out: &Path) -> Result<(), PlotError> {
    if bands.is_empty() || bands.iter().all(|b| b.reward.is_empty()) {
        return Err(PlotError::NoRuns);
    }
    let root = SVGBackend::new(out, (960, 800)).into_drawing_area();
    root.fill(&WHITE).map_err(render_err)?;
    let panels = root.split_evenly((2, 1));
    let metrics: [(&str, Series); 2] =
        [("Average reward", |b| &b.reward), ("Average steps", |b| &b.steps)];
    let max_iter = bands
        .iter()
        .flat_map(|b| b.reward.last())
        .map(|p| p.iteration)
        .max()
        .unwrap_or(1)
        .max(1);

    for (panel, (title, series)) in panels.iter().zip(metrics) {
        let (lo, hi) = bands
            .iter()
            .flat_map(|b| series(b).iter())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.min), hi.max(p.max)));
        let pad = ((hi - lo) * 0.05).max(1e-6);
        let mut chart = ChartBuilder::on(panel)
            .caption(title, ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(36)
            .y_label_area_size(60)
            .build_cartesian_2d(0u64..max_iter, (lo - pad)..(hi + pad))
            .map_err(render_err)?;
        chart
            .configure_mesh()
            .x_desc("iteration")
            .y_desc(title)
            .draw()
            .map_err(render_err)?;

        for (i, band) in bands.iter().enumerate() {
            let color = Palette99::pick(i).to_rgba();
            let points = series(band);
            if band.runs > 1 {
                let outline: Vec<(u64, f64)> = points
                    .iter()
                    .map(|p| (p.iteration, p.max))
                    .chain(points.iter().rev().map(|p| (p.iteration, p.min)))
                    .collect();
                chart
                    .draw_series(std::iter::once(Polygon::new(outline, color.mix(0.2).filled())))
                    .map_err(render_err)?;
            }
            let label = format!("{} (n={})", band.label, band.runs);
            chart
                .draw_series(LineSeries::new(
                    points.iter().map(|p| (p.iteration, p.mean)),
                    color.stroke_width(2),
                ))
                .map_err(render_err)?
                .label(label)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(render_err)?;
    }
    root.present().map_err(render_err)?;
    Ok(())
}
