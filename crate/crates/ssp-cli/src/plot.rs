//! Per-step error curves as self-contained SVG files.
//!
//! The plot is meant to be both looked at and diffed: every series is drawn
//! as a polyline on a shared log axis, and the raw values are embedded as
//! comments at the top of the file, one line per series. Nothing external is
//! referenced — no fonts, stylesheets, or scripts — so the file stands alone.

use std::path::Path;

use ssp_core::Result;
use ssp_eval::MetricsReport;

/// Metric names in curve order; matches the CSV column order.
pub const SERIES: [&str; 7] =
    ["rel_l2", "e_max", "brms", "f_low", "f_mid", "f_high", "f_mse"];

/// One distinguishable stroke color per series.
const COLORS: [&str; 7] =
    ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"];

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 130.0;
const MARGIN_T: f64 = 20.0;
const MARGIN_B: f64 = 45.0;

/// Values at or below this floor are clamped before taking the log, so an
/// all-zero curve (e.g. the ground-truth stub) still renders.
const FLOOR: f64 = 1e-16;

/// Renders the report's per-step curves; always a valid SVG, even when the
/// report is empty.
pub fn plot_svg(report: &MetricsReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str(&format!(
        "<!-- per-step error curves: steps {}..{}, {} samples, series {} -->\n",
        report.first_step,
        report.first_step + report.per_step.len().saturating_sub(1),
        report.n_samples,
        SERIES.join(" ")
    ));
    // Raw data lines, one per series, so the plot can be diffed and re-read.
    for (s, name) in SERIES.iter().enumerate() {
        out.push_str(&format!("<!-- data {name}:"));
        for (i, m) in report.per_step.iter().enumerate() {
            out.push_str(&format!(" {}:{}", report.first_step + i, m.to_array()[s]));
        }
        out.push_str(" -->\n");
    }
    out.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));

    if report.per_step.is_empty() {
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"14\" \
             text-anchor=\"middle\">no evaluated steps</text>\n</svg>\n",
            WIDTH / 2.0,
            HEIGHT / 2.0
        ));
        return out;
    }

    // Shared log-scale y range across all series.
    let logs: Vec<[f64; 7]> = report
        .per_step
        .iter()
        .map(|m| {
            let mut row = m.to_array();
            row.iter_mut().for_each(|v| *v = v.max(FLOOR).log10());
            row
        })
        .collect();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for row in &logs {
        for &v in row {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if hi - lo < 1e-9 {
        lo -= 1.0;
        hi += 1.0;
    }

    let x_span = (report.per_step.len().saturating_sub(1)).max(1) as f64;
    let x_of = |i: usize| MARGIN_L + (WIDTH - MARGIN_L - MARGIN_R) * i as f64 / x_span;
    let y_of = |v: f64| HEIGHT - MARGIN_B - (HEIGHT - MARGIN_T - MARGIN_B) * (v - lo) / (hi - lo);

    // Axes.
    out.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{}\" \
         stroke=\"black\"/>\n",
        HEIGHT - MARGIN_B
    ));
    out.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        HEIGHT - MARGIN_B,
        WIDTH - MARGIN_R,
        HEIGHT - MARGIN_B
    ));

    // Y ticks at whole decades.
    let first_decade = lo.ceil() as i64;
    let last_decade = hi.floor() as i64;
    for d in first_decade..=last_decade {
        let y = y_of(d as f64);
        out.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{MARGIN_L}\" y2=\"{y:.2}\" stroke=\"black\"/>\n",
            MARGIN_L - 5.0
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"11\" \
             text-anchor=\"end\">1e{d}</text>\n",
            MARGIN_L - 8.0,
            y + 4.0
        ));
    }

    // X ticks on up to 8 integer steps.
    let n = report.per_step.len();
    let stride = n.div_ceil(8).max(1);
    for i in (0..n).step_by(stride) {
        let x = x_of(i);
        out.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\n",
            HEIGHT - MARGIN_B,
            HEIGHT - MARGIN_B + 5.0
        ));
        out.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"11\" \
             text-anchor=\"middle\">{}</text>\n",
            HEIGHT - MARGIN_B + 18.0,
            report.first_step + i
        ));
    }
    out.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"12\" \
         text-anchor=\"middle\">rollout step</text>\n",
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        HEIGHT - 8.0
    ));

    // Curves with point markers (a one-step report still shows its value).
    for (s, name) in SERIES.iter().enumerate() {
        let color = COLORS[s];
        let points: Vec<String> = logs
            .iter()
            .enumerate()
            .map(|(i, row)| format!("{:.2},{:.2}", x_of(i), y_of(row[s])))
            .collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            points.join(" ")
        ));
        for (i, row) in logs.iter().enumerate() {
            out.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"{color}\"/>\n",
                x_of(i),
                y_of(row[s])
            ));
        }
        // Legend entry, right-hand column.
        let ly = MARGIN_T + 16.0 * (s as f64 + 1.0);
        out.push_str(&format!(
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"10\" height=\"10\" fill=\"{color}\"/>\n",
            WIDTH - MARGIN_R + 12.0,
            ly - 9.0
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{ly:.2}\" font-family=\"monospace\" font-size=\"12\">\
             {name}</text>\n",
            WIDTH - MARGIN_R + 28.0
        ));
    }

    out.push_str("</svg>\n");
    out
}

/// Writes the SVG next to the other artifacts.
pub fn write_plot(path: &Path, report: &MetricsReport) -> Result<()> {
    std::fs::write(path, plot_svg(report))?;
    Ok(())
}
