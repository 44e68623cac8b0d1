//! Static SVG line and bar charts.
//!
//! Output depends only on the input values: coordinates are printed with a
//! fixed number of decimals and series keep their input order.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlotError {
    #[error("malformed CSV: {0}")]
    MalformedCsv(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#e377c2", "#2ca02c", "#ff7f0e", "#7f7f7f", "#9467bd", "#8c564b", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn parse_table(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>), PlotError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| PlotError::MalformedCsv(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(PlotError::MalformedCsv("missing header".into()));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| PlotError::MalformedCsv(e.to_string()))?;
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| PlotError::MalformedCsv(format!("row {}: {e}", i + 2)))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(PlotError::MalformedCsv("no data rows".into()));
    }
    Ok((header, rows))
}

/// First column is x; every further column becomes a series.
pub fn series_from_columns(text: &str) -> Result<Vec<Series>, PlotError> {
    let (header, rows) = parse_table(text)?;
    if header.len() < 2 {
        return Err(PlotError::MalformedCsv("need an x column and at least one series".into()));
    }
    Ok((1..header.len())
        .map(|c| Series {
            label: header[c].clone(),
            points: rows.iter().map(|r| (r[0], r[c])).collect(),
        })
        .collect())
}

/// One series from `column` of a CSV, x taken from the first column.
pub fn series_from_column(label: &str, text: &str, column: &str) -> Result<Series, PlotError> {
    let (header, rows) = parse_table(text)?;
    let c = header
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| PlotError::MalformedCsv(format!("no column `{column}`")))?;
    Ok(Series {
        label: label.to_string(),
        points: rows.iter().map(|r| (r[0], r[c])).collect(),
    })
}

/// Trailing moving average over `window` points.
pub fn smooth(series: &Series, window: usize) -> Series {
    if window <= 1 {
        return series.clone();
    }
    let mut acc = 0.0;
    let mut points = Vec::with_capacity(series.points.len());
    for (i, &(x, y)) in series.points.iter().enumerate() {
        acc += y;
        if i >= window {
            acc -= series.points[i - window].1;
        }
        points.push((x, acc / (i + 1).min(window) as f64));
    }
    Series {
        label: series.label.clone(),
        points,
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if (hi - lo).abs() < 1e-12 {
        (lo - 1.0, hi + 1.0)
    } else {
        (lo, hi)
    }
}

fn frame(out: &mut String, title: &str, x_label: &str, y_label: &str) {
    let _ = writeln!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">
<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>
<text x="{:.1}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>
<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>
<text x="16" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        escape(title),
        (LEFT + WIDTH - RIGHT) / 2.0,
        HEIGHT - 12.0,
        escape(x_label),
        (TOP + HEIGHT - BOTTOM) / 2.0,
        (TOP + HEIGHT - BOTTOM) / 2.0,
        escape(y_label),
    );
}

fn axes(out: &mut String, (x0, x1): (f64, f64), (y0, y1): (f64, f64), x_ticks: bool) {
    let (px0, px1, py0, py1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        out,
        r#"<line x1="{px0:.1}" y1="{py0:.1}" x2="{px1:.1}" y2="{py0:.1}" stroke="black"/>
<line x1="{px0:.1}" y1="{py0:.1}" x2="{px0:.1}" y2="{py1:.1}" stroke="black"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let y = py0 + (py1 - py0) * f;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="end">{}</text>"#,
            px0 - 6.0,
            y + 3.0,
            tick_label(y0 + (y1 - y0) * f)
        );
        if x_ticks {
            let x = px0 + (px1 - px0) * f;
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="middle">{}</text>"#,
                x,
                py0 + 16.0,
                tick_label(x0 + (x1 - x0) * f)
            );
        }
    }
}

fn tick_label(v: f64) -> String {
    if v.abs() >= 1000.0 || (v - v.round()).abs() < 1e-9 {
        format!("{:.0}", v)
    } else {
        format!("{:.2}", v)
    }
}

fn legend(out: &mut String, labels: &[&str]) {
    for (i, label) in labels.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let x = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.1}" y="{:.1}" width="12" height="12" fill="{}"/>
<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12">{}</text>"#,
            y - 10.0,
            PALETTE[i % PALETTE.len()],
            x + 18.0,
            y,
            escape(label)
        );
    }
}

/// Line chart with one polyline per series.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let xb = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let yb = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let sx = |x: f64| LEFT + (x - xb.0) / (xb.1 - xb.0) * (WIDTH - RIGHT - LEFT);
    let sy = |y: f64| HEIGHT - BOTTOM - (y - yb.0) / (yb.1 - yb.0) * (HEIGHT - BOTTOM - TOP);
    let mut out = String::new();
    frame(&mut out, title, x_label, y_label);
    axes(&mut out, xb, yb, true);
    for (i, s) in series.iter().enumerate() {
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            PALETTE[i % PALETTE.len()],
            pts.join(" ")
        );
    }
    let labels: Vec<&str> = series.iter().map(|s| s.label.as_str()).collect();
    legend(&mut out, &labels);
    out.push_str("</svg>\n");
    out
}

/// Grouped bar chart: one group per category, one bar per series.
pub fn bar_chart(
    title: &str,
    y_label: &str,
    categories: &[&str],
    series: &[(&str, Vec<f64>)],
) -> String {
    let top = series
        .iter()
        .flat_map(|s| s.1.iter().copied())
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let yb = (0.0, top);
    let mut out = String::new();
    frame(&mut out, title, "", y_label);
    axes(&mut out, (0.0, 1.0), yb, false);
    let plot_w = WIDTH - RIGHT - LEFT;
    let plot_h = HEIGHT - BOTTOM - TOP;
    let group_w = plot_w / categories.len().max(1) as f64;
    let bar_w = group_w * 0.8 / series.len().max(1) as f64;
    for (c, cat) in categories.iter().enumerate() {
        let gx = LEFT + group_w * c as f64 + group_w * 0.1;
        for (s, (_, values)) in series.iter().enumerate() {
            let v = values.get(c).copied().unwrap_or(0.0).max(0.0);
            let h = v / yb.1 * plot_h;
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                gx + bar_w * s as f64,
                HEIGHT - BOTTOM - h,
                bar_w,
                h,
                PALETTE[s % PALETTE.len()]
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
            gx + group_w * 0.4,
            HEIGHT - BOTTOM + 16.0,
            escape(cat)
        );
    }
    let labels: Vec<&str> = series.iter().map(|s| s.0).collect();
    legend(&mut out, &labels);
    out.push_str("</svg>\n");
    out
}

/// Renders CSV input as a line chart.
///
/// Without `column`, a single input is read as `x, series1, series2, …`.
/// With `column`, each input contributes that column as one series.
pub fn emit_plot(
    inputs: &[(String, String)],
    column: Option<&str>,
    smooth_window: usize,
    title: &str,
) -> Result<String, PlotError> {
    if inputs.is_empty() {
        return Err(PlotError::MalformedCsv("no input".into()));
    }
    let (series, y_label) = match column {
        None => {
            let mut all = Vec::new();
            for (_, text) in inputs {
                all.extend(series_from_columns(text)?);
            }
            (all, "value".to_string())
        }
        Some(col) => (
            inputs
                .iter()
                .map(|(label, text)| series_from_column(label, text, col))
                .collect::<Result<Vec<_>, _>>()?,
            col.to_string(),
        ),
    };
    let series: Vec<Series> = series.iter().map(|s| smooth(s, smooth_window)).collect();
    let x_label = "episode";
    Ok(line_chart(title, x_label, &y_label, &series))
}
