//! Run summaries and SVG line charts over metrics files.
//!
//! Charts overlay one polyline per run on shared axes without resampling;
//! runs with different evaluation grids plot at their own step positions.

use crate::error::{Result, RisError};
use crate::metrics::{parse_csv, MetricsRow};
use std::fs;
use std::path::{Path, PathBuf};

pub struct RunSeries {
    pub name: String,
    pub rows: Vec<MetricsRow>,
}

/// Loads every readable, well-formed metrics file; malformed or empty files
/// become warnings instead of failures.
pub fn load_runs(paths: &[PathBuf]) -> (Vec<RunSeries>, Vec<String>) {
    let mut runs = Vec::new();
    let mut warnings = Vec::new();
    for path in paths {
        let name = run_name(path);
        match fs::read_to_string(path) {
            Err(e) => warnings.push(format!("skipping {}: {e}", path.display())),
            Ok(text) => match parse_csv(&text) {
                Err(e) => warnings.push(format!("skipping {}: {e}", path.display())),
                Ok(rows) if rows.is_empty() => {
                    warnings.push(format!("skipping {}: no metrics rows", path.display()))
                }
                Ok(rows) => runs.push(RunSeries { name, rows }),
            },
        }
    }
    (runs, warnings)
}

fn run_name(path: &Path) -> String {
    // runs/u_maze/metrics.csv -> "u_maze"; bare files keep their stem
    let parent = path
        .parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().to_string());
    match parent {
        Some(dir) if path.file_name().map(|f| f == "metrics.csv").unwrap_or(false) => dir,
        _ => path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| path.display().to_string()),
    }
}

/// Fixed-width text table of final evaluation results per run.
pub fn summary_table(runs: &[RunSeries]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<24} {:>10} {:>12} {:>12} {:>14}\n",
        "run", "env_steps", "eval_succ", "mean_return", "subgoal_error"
    ));
    for run in runs {
        let last = run.rows.last().expect("load_runs drops empty runs");
        out.push_str(&format!(
            "{:<24} {:>10} {:>12.3} {:>12.2} {:>14.3}\n",
            run.name, last.env_steps, last.eval_success, last.mean_return, last.subgoal_error
        ));
    }
    out
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 48.0;

/// One chart: a polyline per (name, points) series on shared axes.
pub fn line_chart_svg(series: &[(String, Vec<(f64, f64)>)], title: &str, y_label: &str) -> String {
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for (_, pts) in series {
        for &(x, y) in pts {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if !x_min.is_finite() {
        (x_min, x_max, y_min, y_max) = (0.0, 1.0, 0.0, 1.0);
    }
    if (x_max - x_min).abs() < 1e-12 {
        x_max = x_min + 1.0;
    }
    if (y_max - y_min).abs() < 1e-12 {
        y_max = y_min + 1.0;
    }
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = |y: f64| MARGIN_T + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"monospace\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    ));
    // axes
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{}\" stroke=\"black\"/>\n",
        MARGIN_T + plot_h
    ));
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        MARGIN_T + plot_h,
        MARGIN_L + plot_w,
        MARGIN_T + plot_h
    ));
    // axis labels and extrema ticks
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\">env_steps</text>\n",
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0,
        escape(y_label)
    ));
    for (v, x, y, anchor) in [
        (x_min, MARGIN_L, MARGIN_T + plot_h + 16.0, "middle"),
        (x_max, MARGIN_L + plot_w, MARGIN_T + plot_h + 16.0, "middle"),
    ] {
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{y}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"{anchor}\">{v:.0}</text>\n"
        ));
    }
    for (v, y) in [(y_min, MARGIN_T + plot_h), (y_max, MARGIN_T)] {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"end\">{v:.3}</text>\n",
            MARGIN_L - 6.0,
            y + 4.0
        ));
    }
    // series
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            coords.join(" ")
        ));
        let ly = MARGIN_T + 16.0 * k as f64;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"3\"/>\n",
            MARGIN_L + plot_w - 150.0,
            MARGIN_L + plot_w - 130.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\">{}</text>\n",
            MARGIN_L + plot_w - 124.0,
            ly + 4.0,
            escape(name)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub struct ReportOutcome {
    pub table: String,
    pub svg_paths: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// Loads runs, writes `eval_success.svg` and `subgoal_error.svg` under
/// `out_dir`, and returns the summary table. Fails only when no run loads.
pub fn write_report(paths: &[PathBuf], out_dir: &Path) -> Result<ReportOutcome> {
    let (runs, warnings) = load_runs(paths);
    if runs.is_empty() {
        return Err(RisError::Usage(format!(
            "no usable metrics files among {} inputs: {}",
            paths.len(),
            warnings.join("; ")
        )));
    }
    fs::create_dir_all(out_dir)?;
    let success_series: Vec<(String, Vec<(f64, f64)>)> = runs
        .iter()
        .map(|r| {
            (
                r.name.clone(),
                r.rows
                    .iter()
                    .map(|m| (m.env_steps as f64, m.eval_success))
                    .collect(),
            )
        })
        .collect();
    let subgoal_series: Vec<(String, Vec<(f64, f64)>)> = runs
        .iter()
        .map(|r| {
            (
                r.name.clone(),
                r.rows
                    .iter()
                    .map(|m| (m.env_steps as f64, m.subgoal_error))
                    .collect(),
            )
        })
        .collect();
    let mut svg_paths = Vec::new();
    for (series, title, y_label, file) in [
        (&success_series, "evaluation success rate", "eval_success", "eval_success.svg"),
        (&subgoal_series, "subgoal error vs oracle midpoints", "subgoal_error", "subgoal_error.svg"),
    ] {
        let svg = line_chart_svg(series, title, y_label);
        let path = out_dir.join(file);
        fs::write(&path, svg)?;
        svg_paths.push(path);
    }
    Ok(ReportOutcome {
        table: summary_table(&runs),
        svg_paths,
        warnings,
    })
}
