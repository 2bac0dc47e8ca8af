//! Run artifacts: the JSON report, CSV traces and summaries, and small
//! self-contained SVG figures.
//!
//! Everything written here is deterministic for a fixed config and seed
//! except wall-clock measurements; those all live under JSON keys ending in
//! `_seconds` (plus the derived `s_alg_modeled`), so [`strip_timing`] can
//! remove them and the remainder must be byte-identical across reruns.

use std::io;
use std::path::Path;

use serde_json::Value;

use crate::engine::{CostModelPoint, RunReport, RunStatus, SweepCell};

/// Column header of the per-interval trace CSV; kept stable for downstream
/// tooling.
pub const TRACE_CSV_HEADER: &str =
    "k,interval,update_inf_norm,converged,fine_ms,coarse_ms,model_ms";

/// Serializes a run report to pretty JSON.
pub fn report_to_json(report: &RunReport) -> Value {
    serde_json::to_value(report).expect("report serializes")
}

/// Writes the pretty-printed JSON report to `path`.
pub fn write_report_json(report: &RunReport, path: &Path) -> io::Result<()> {
    let text = serde_json::to_string_pretty(&report_to_json(report)).expect("report serializes");
    std::fs::write(path, text + "\n")
}

/// Removes every timing field (keys ending `_seconds`, plus the derived
/// `s_alg_modeled`) recursively. What remains must be identical across runs
/// with the same config and seed.
pub fn strip_timing(value: &Value) -> Value {
    match value {
        Value::Object(map) => Value::Object(
            map.iter()
                .filter(|(key, _)| !key.ends_with("_seconds") && key.as_str() != "s_alg_modeled")
                .map(|(key, inner)| (key.clone(), strip_timing(inner)))
                .collect(),
        ),
        Value::Array(items) => Value::Array(items.iter().map(strip_timing).collect()),
        other => other.clone(),
    }
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Per-interval trace of every iteration as CSV (times in milliseconds).
pub fn trace_csv(report: &RunReport) -> String {
    let mut out = String::from(TRACE_CSV_HEADER);
    out.push('\n');
    for iteration in &report.trace {
        for row in &iteration.intervals {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                iteration.k,
                row.interval,
                fmt(row.update_inf_norm),
                row.converged,
                fmt(row.fine_seconds * 1e3),
                fmt(row.coarse_seconds * 1e3),
                fmt(row.model_seconds * 1e3),
            ));
        }
    }
    out
}

/// One line of the model-comparison summary.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub model: String,
    pub status: String,
    pub iterations: usize,
    pub accuracy_vs_fine: Option<f64>,
    pub t_model_seconds: f64,
    pub t_alg_modeled_seconds: f64,
    pub s_alg_modeled: f64,
}

impl ComparisonRow {
    pub fn from_report(report: &RunReport) -> Self {
        Self {
            model: report.config.correction.name().to_string(),
            status: status_word(&report.status).to_string(),
            iterations: report.iterations,
            accuracy_vs_fine: report.accuracy_vs_fine,
            t_model_seconds: report.cost.t_model_seconds,
            t_alg_modeled_seconds: report.cost.t_alg_modeled_seconds,
            s_alg_modeled: report.cost.s_alg_modeled,
        }
    }
}

/// Canonical one-word status (abort details stay in the JSON report).
pub fn status_word(status: &RunStatus) -> &'static str {
    match status {
        RunStatus::Converged => "converged",
        RunStatus::BudgetExhausted => "budget_exhausted",
        RunStatus::Aborted { .. } => "aborted",
    }
}

/// Model-comparison summary CSV.
pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from(
        "model,status,iterations,accuracy_vs_fine,t_model_seconds,t_alg_modeled_seconds,s_alg_modeled\n",
    );
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.model,
            row.status,
            row.iterations,
            row.accuracy_vs_fine.map_or(String::new(), fmt),
            fmt(row.t_model_seconds),
            fmt(row.t_alg_modeled_seconds),
            fmt(row.s_alg_modeled),
        ));
    }
    out
}

/// Robustness-sweep CSV: one row per (m, hidden, seed) cell.
pub fn sweep_csv(cells: &[SweepCell]) -> String {
    let mut out = String::from("m,hidden,seed,iterations,outcome\n");
    for cell in cells {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            cell.m,
            cell.hidden,
            cell.seed,
            cell.iterations.map_or(String::new(), |k| k.to_string()),
            cell.outcome,
        ));
    }
    out
}

/// Correction-cost bound curves as CSV.
pub fn costmodel_csv(points: &[CostModelPoint]) -> String {
    let mut out = String::from("dimension,t_nngp,t_randnet\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{}\n",
            p.dimension,
            fmt(p.t_nngp),
            fmt(p.t_randnet)
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// SVG figures
// ---------------------------------------------------------------------------

const SVG_WIDTH: f64 = 640.0;
const SVG_HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        let span = (self.x_max - self.x_min).max(1e-12);
        MARGIN_LEFT + (v - self.x_min) / span * (SVG_WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        let span = (self.y_max - self.y_min).max(1e-12);
        SVG_HEIGHT
            - MARGIN_BOTTOM
            - (v - self.y_min) / span * (SVG_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn svg_open(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_WIDTH}\" height=\"{SVG_HEIGHT}\" \
         viewBox=\"0 0 {SVG_WIDTH} {SVG_HEIGHT}\">\n\
         <rect width=\"{SVG_WIDTH}\" height=\"{SVG_HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" font-family=\"monospace\" \
         font-size=\"14\">{title}</text>\n",
        SVG_WIDTH / 2.0
    )
}

fn svg_axes(frame: &Frame, x_label: &str, y_label: &str) -> String {
    let x0 = frame.x(frame.x_min);
    let x1 = frame.x(frame.x_max);
    let y0 = frame.y(frame.y_min);
    let y1 = frame.y(frame.y_max);
    let mut out = format!(
        "<line x1=\"{x0:.1}\" y1=\"{y0:.1}\" x2=\"{x1:.1}\" y2=\"{y0:.1}\" stroke=\"black\"/>\n\
         <line x1=\"{x0:.1}\" y1=\"{y0:.1}\" x2=\"{x0:.1}\" y2=\"{y1:.1}\" stroke=\"black\"/>\n"
    );
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"monospace\" \
         font-size=\"12\">{x_label}</text>\n",
        (x0 + x1) / 2.0,
        SVG_HEIGHT - 12.0
    ));
    out.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"monospace\" \
         font-size=\"12\" transform=\"rotate(-90 16 {:.1})\">{y_label}</text>\n",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    ));
    // Min/max tick labels on both axes.
    out.push_str(&format!(
        "<text x=\"{x0:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"monospace\" \
         font-size=\"10\">{:.3}</text>\n",
        y0 + 16.0,
        frame.x_min
    ));
    out.push_str(&format!(
        "<text x=\"{x1:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"monospace\" \
         font-size=\"10\">{:.3}</text>\n",
        y0 + 16.0,
        frame.x_max
    ));
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{y0:.1}\" text-anchor=\"end\" font-family=\"monospace\" \
         font-size=\"10\">{:.3}</text>\n",
        x0 - 6.0,
        frame.y_min
    ));
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{y1:.1}\" text-anchor=\"end\" font-family=\"monospace\" \
         font-size=\"10\">{:.3}</text>\n",
        x0 - 6.0,
        frame.y_max
    ));
    out
}

fn svg_polyline(frame: &Frame, points: &[(f64, f64)], color: &str) -> String {
    let coords: Vec<String> = points
        .iter()
        .map(|&(x, y)| format!("{:.2},{:.2}", frame.x(x), frame.y(y)))
        .collect();
    format!(
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
        coords.join(" ")
    )
}

fn log10_floor(v: f64) -> f64 {
    v.max(1e-300).log10()
}

/// Convergence history figure: per-iteration maximum update norm (log10)
/// against iteration index. Built only from deterministic report fields.
pub fn convergence_svg(report: &RunReport) -> String {
    let n = report.config.n_intervals;
    let points: Vec<(f64, f64)> = report
        .trace
        .iter()
        .map(|row| {
            let max_norm = row
                .intervals
                .iter()
                .filter(|iv| iv.interval < n)
                .map(|iv| iv.update_inf_norm)
                .fold(0.0_f64, f64::max);
            (row.k as f64, log10_floor(max_norm))
        })
        .collect();
    let title = format!(
        "{} / {}: max update norm per iteration",
        report.config.system.name(),
        report.config.correction.name()
    );
    let eps_line = log10_floor(report.config.epsilon);
    let y_min = points
        .iter()
        .map(|&(_, y)| y)
        .fold(eps_line, f64::min)
        .floor()
        - 0.5;
    let y_max = points
        .iter()
        .map(|&(_, y)| y)
        .fold(eps_line, f64::max)
        .ceil()
        + 0.5;
    let frame = Frame {
        x_min: 1.0,
        x_max: points.last().map_or(2.0, |&(x, _)| x.max(2.0)),
        y_min,
        y_max,
    };
    let mut out = svg_open(&title);
    out.push_str(&svg_axes(&frame, "iteration k", "log10 max update norm"));
    // Tolerance threshold as a dashed rule.
    out.push_str(&format!(
        "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"gray\" \
         stroke-dasharray=\"4 3\"/>\n",
        frame.x(frame.x_min),
        frame.y(eps_line),
        frame.x(frame.x_max),
        frame.y(eps_line)
    ));
    out.push_str(&svg_polyline(&frame, &points, "steelblue"));
    for &(x, y) in &points {
        out.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"steelblue\"/>\n",
            frame.x(x),
            frame.y(y)
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// Correction-cost bound figure: log-log curves of the per-iteration cost
/// bounds against state dimension, one polyline per model.
pub fn costmodel_svg(points: &[CostModelPoint]) -> String {
    assert!(!points.is_empty());
    let xs: Vec<f64> = points
        .iter()
        .map(|p| (p.dimension as f64).log10())
        .collect();
    let nngp: Vec<(f64, f64)> = xs
        .iter()
        .zip(points)
        .map(|(&x, p)| (x, log10_floor(p.t_nngp)))
        .collect();
    let randnet: Vec<(f64, f64)> = xs
        .iter()
        .zip(points)
        .map(|(&x, p)| (x, log10_floor(p.t_randnet)))
        .collect();
    let all_y: Vec<f64> = nngp.iter().chain(&randnet).map(|&(_, y)| y).collect();
    let frame = Frame {
        x_min: xs.first().copied().unwrap(),
        x_max: xs.last().copied().unwrap().max(xs[0] + 1e-9),
        y_min: all_y.iter().copied().fold(f64::INFINITY, f64::min).floor() - 0.5,
        y_max: all_y
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
            .ceil()
            + 0.5,
    };
    let mut out = svg_open("correction cost bounds vs dimension");
    out.push_str(&svg_axes(&frame, "log10 dimension", "log10 modeled cost"));
    out.push_str(&svg_polyline(&frame, &nngp, "firebrick"));
    out.push_str(&svg_polyline(&frame, &randnet, "steelblue"));
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"12\" \
         fill=\"firebrick\">nngp</text>\n",
        MARGIN_LEFT + 10.0,
        MARGIN_TOP + 14.0
    ));
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"12\" \
         fill=\"steelblue\">randnet</text>\n",
        MARGIN_LEFT + 10.0,
        MARGIN_TOP + 30.0
    ));
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{
        cost_model_curves, run_pint, CorrectionConfig, CostModelParams, PintConfig,
    };
    use crate::integrators::{RkMethod, SolverSpec};
    use crate::systems::{LinearSpec, SystemSpec};

    fn tiny_report() -> RunReport {
        let config = PintConfig {
            system: SystemSpec::Linear(LinearSpec { d: 3, lambda: -1.0 }),
            n_intervals: 4,
            t0: 0.0,
            t_end: 1.0,
            coarse: SolverSpec {
                method: RkMethod::Rk1,
                steps: 2,
            },
            fine: SolverSpec {
                method: RkMethod::Rk4,
                steps: 16,
            },
            epsilon: 1e-10,
            correction: CorrectionConfig::Randnet { m: 3, hidden: 20 },
            seed: 11,
            threads: 1,
            budget_seconds: 60.0,
        };
        run_pint(&config).unwrap()
    }

    #[test]
    fn strip_timing_removes_all_timing_keys() {
        let report = tiny_report();
        let stripped = strip_timing(&report_to_json(&report));
        fn scan(v: &Value) {
            match v {
                Value::Object(map) => {
                    for (key, inner) in map {
                        assert!(!key.ends_with("_seconds"), "leaked key {key}");
                        assert_ne!(key, "s_alg_modeled");
                        scan(inner);
                    }
                }
                Value::Array(items) => items.iter().for_each(scan),
                _ => {}
            }
        }
        scan(&stripped);
        // Deterministic fields survive.
        assert!(stripped["cost"]["coarse_applications"].is_number());
        assert!(stripped["final_states"].is_array());
    }

    #[test]
    fn stripped_reports_are_identical_across_runs() {
        let a = strip_timing(&report_to_json(&tiny_report()));
        let b = strip_timing(&report_to_json(&tiny_report()));
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn trace_csv_has_exact_header_and_row_count() {
        let report = tiny_report();
        let csv = trace_csv(&report);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), TRACE_CSV_HEADER);
        let expected: usize = report.trace.iter().map(|row| row.intervals.len()).sum();
        assert_eq!(lines.count(), expected);
    }

    #[test]
    fn trace_csv_parses_as_csv() {
        let report = tiny_report();
        let text = trace_csv(&report);
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let headers = reader.headers().unwrap().clone();
        assert_eq!(headers.len(), 7);
        for record in reader.records() {
            let record = record.unwrap();
            assert_eq!(record.len(), 7);
            let _: usize = record[0].parse().unwrap();
            let _: f64 = record[2].parse().unwrap();
            let _: bool = record[3].parse().unwrap();
        }
    }

    #[test]
    fn summary_and_sweep_csvs_are_well_formed() {
        let report = tiny_report();
        let rows = vec![ComparisonRow::from_report(&report)];
        let text = comparison_csv(&rows);
        assert!(text.starts_with("model,status,iterations,"));
        assert!(text.contains("randnet,converged,"));
        let cells = vec![crate::engine::SweepCell {
            m: 4,
            hidden: 100,
            seed: 1,
            iterations: Some(5),
            outcome: "converged".into(),
        }];
        let text = sweep_csv(&cells);
        assert_eq!(
            text,
            "m,hidden,seed,iterations,outcome\n4,100,1,5,converged\n"
        );
    }

    #[test]
    fn figures_are_deterministic_svg_documents() {
        let report = tiny_report();
        let a = convergence_svg(&report);
        let b = convergence_svg(&report);
        assert_eq!(a, b);
        assert!(a.starts_with("<svg "));
        assert!(a.trim_end().ends_with("</svg>"));
        assert!(a.contains("polyline"));

        let points = cost_model_curves(&CostModelParams::default(), &[100, 1000, 10000]);
        let figure = costmodel_svg(&points);
        assert!(figure.contains("nngp") && figure.contains("randnet"));
        assert_eq!(figure, costmodel_svg(&points));
    }

    #[test]
    fn costmodel_csv_lists_every_dimension() {
        let points = cost_model_curves(&CostModelParams::default(), &[10, 100]);
        let text = costmodel_csv(&points);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("10,"));
        assert!(lines[2].starts_with("100,"));
    }
}
