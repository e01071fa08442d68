//! Standalone SVG charts: measured-vs-estimated SOH per cycle, and the
//! RMSE-per-threshold bar chart for sweep results.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::{write_atomic, DataError};
use crate::pipeline::{EstimationReport, SweepTable};

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 55.0;

struct Canvas {
    svg: String,
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Canvas {
    fn new(title: &str, x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        let mut svg = String::new();
        let _ = write!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
        );
        svg.push_str(r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = write!(
            svg,
            r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            escape(title)
        );
        Self {
            svg,
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    fn px(&self, x: f64) -> f64 {
        let span = (self.x_max - self.x_min).max(1e-12);
        MARGIN_LEFT + (x - self.x_min) / span * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        let span = (self.y_max - self.y_min).max(1e-12);
        HEIGHT - MARGIN_BOTTOM - (y - self.y_min) / span * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }

    fn axes(&mut self, x_label: &str, y_label: &str, x_ticks: &[f64], y_ticks: &[f64]) {
        let x0 = MARGIN_LEFT;
        let x1 = WIDTH - MARGIN_RIGHT;
        let y0 = HEIGHT - MARGIN_BOTTOM;
        let y1 = MARGIN_TOP;
        let _ = write!(
            self.svg,
            r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/><line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#
        );
        for &t in x_ticks {
            let x = self.px(t);
            let _ = write!(
                self.svg,
                r#"<line x1="{x}" y1="{y0}" x2="{x}" y2="{}" stroke="black"/><text x="{x}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
                y0 + 5.0,
                y0 + 18.0,
                trim_number(t)
            );
        }
        for &t in y_ticks {
            let y = self.py(t);
            let _ = write!(
                self.svg,
                r#"<line x1="{}" y1="{y}" x2="{x0}" y2="{y}" stroke="black"/><text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
                x0 - 5.0,
                x0 - 8.0,
                y + 4.0,
                trim_number(t)
            );
            let _ = write!(
                self.svg,
                r##"<line x1="{x0}" y1="{y}" x2="{x1}" y2="{y}" stroke="#dddddd" stroke-width="0.5"/>"##
            );
        }
        let _ = write!(
            self.svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            HEIGHT - 12.0,
            escape(x_label)
        );
        let _ = write!(
            self.svg,
            r#"<text x="18" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(y_label)
        );
    }

    fn polyline(&mut self, points: &[(f64, f64)], color: &str) {
        if points.is_empty() {
            return;
        }
        let coords: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y)))
            .collect();
        let _ = write!(
            self.svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.6"/>"#,
            coords.join(" ")
        );
    }

    fn legend(&mut self, entries: &[(&str, &str)]) {
        let mut y = MARGIN_TOP + 8.0;
        for (label, color) in entries {
            let _ = write!(
                self.svg,
                r#"<rect x="{}" y="{}" width="14" height="4" fill="{color}"/><text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
                MARGIN_LEFT + 12.0,
                y - 3.0,
                MARGIN_LEFT + 32.0,
                y + 2.0,
                escape(label)
            );
            y += 18.0;
        }
    }

    fn finish(mut self) -> String {
        self.svg.push_str("</svg>");
        self.svg
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn trim_number(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() {
        "0".into()
    } else {
        s.to_string()
    }
}

fn ticks(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..=count)
        .map(|i| lo + (hi - lo) * i as f64 / count as f64)
        .collect()
}

/// Measured and estimated SOH per online cycle, as two polylines.
pub fn soh_chart(report: &EstimationReport, path: &Path) -> Result<(), DataError> {
    let xs: Vec<f64> = report.rows.iter().map(|r| r.cycle as f64).collect();
    let x_min = xs.first().copied().unwrap_or(0.0);
    let x_max = xs.last().copied().unwrap_or(1.0);
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for row in &report.rows {
        y_min = y_min.min(row.measured).min(row.estimated);
        y_max = y_max.max(row.measured).max(row.estimated);
    }
    if report.rows.is_empty() {
        y_min = 0.0;
        y_max = 1.0;
    }
    let pad = ((y_max - y_min) * 0.1).max(1e-3);
    let mut canvas = Canvas::new(
        &format!(
            "{}: measured vs estimated SOH (RMSE {:.4}, MAE {:.4})",
            report.battery_id, report.rmse, report.mae
        ),
        x_min,
        x_max,
        y_min - pad,
        y_max + pad,
    );
    canvas.axes(
        "cycle",
        "SOH",
        &ticks(x_min, x_max, 8),
        &ticks(y_min - pad, y_max + pad, 6),
    );
    let measured: Vec<(f64, f64)> = report
        .rows
        .iter()
        .map(|r| (r.cycle as f64, r.measured))
        .collect();
    let estimated: Vec<(f64, f64)> = report
        .rows
        .iter()
        .map(|r| (r.cycle as f64, r.estimated))
        .collect();
    canvas.polyline(&measured, "#1f77b4");
    canvas.polyline(&estimated, "#d62728");
    canvas.legend(&[("measured", "#1f77b4"), ("estimated", "#d62728")]);
    write_atomic(path, canvas.finish().as_bytes())
}

/// RMSE per candidate threshold as a bar chart; the MP-selected bar is
/// highlighted and failed candidates are marked.
pub fn sweep_chart(table: &SweepTable, path: &Path) -> Result<(), DataError> {
    let n = table.rows.len().max(1);
    let max_rmse = table
        .rows
        .iter()
        .filter_map(|r| r.rmse)
        .fold(0.0f64, f64::max)
        .max(1e-6);
    let mut canvas = Canvas::new(
        &format!("{}: online RMSE per segment threshold", table.battery_id),
        0.0,
        n as f64,
        0.0,
        max_rmse * 1.15,
    );
    canvas.axes("segment threshold (V)", "RMSE", &[], &ticks(0.0, max_rmse * 1.15, 6));
    let y0 = canvas.py(0.0);
    for (i, row) in table.rows.iter().enumerate() {
        let x_left = canvas.px(i as f64 + 0.15);
        let x_right = canvas.px(i as f64 + 0.85);
        let color = if row.mp_selected { "#d62728" } else { "#1f77b4" };
        let label_x = (x_left + x_right) / 2.0;
        match row.rmse {
            Some(rmse) => {
                let y = canvas.py(rmse);
                let _ = write!(
                    canvas.svg,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
                    x_left,
                    y,
                    x_right - x_left,
                    y0 - y
                );
                let _ = write!(
                    canvas.svg,
                    r#"<text x="{label_x:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="middle">{:.4}</text>"#,
                    y - 4.0,
                    rmse
                );
            }
            None => {
                let _ = write!(
                    canvas.svg,
                    r##"<text x="{label_x:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="middle" fill="#999999">failed</text>"##,
                    y0 - 8.0
                );
            }
        }
        let _ = write!(
            canvas.svg,
            r#"<text x="{label_x:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{}{}</text>"#,
            y0 + 18.0,
            trim_number(row.v_ref),
            if row.mp_selected { "*" } else { "" }
        );
    }
    canvas.legend(&[("MP-selected", "#d62728"), ("candidate", "#1f77b4")]);
    write_atomic(path, canvas.finish().as_bytes())
}
