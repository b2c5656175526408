//! Fixed-layout SVG of ROC curves. Output depends only on the inputs.

use std::fmt::Write as _;
use std::path::Path;

use dementia_mm::models::ModelKind;
use dementia_mm::{Error, Result};

pub const WIDTH: u32 = 640;
pub const HEIGHT: u32 = 480;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 620.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 420.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Curve {
    /// Trapezoid area under the stored points.
    pub fn area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
            .sum()
    }
}

/// Parses an `fpr,tpr` file; coordinates must be in [0, 1] and non-decreasing.
pub fn read_curve(path: &Path) -> Result<Curve> {
    let name = path.display().to_string();
    let bad = |line: usize, m: String| Error::Parse {
        path: name.clone(),
        line,
        message: m,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => bad(1, format!("{other:?}")),
    })?;
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["fpr", "tpr"] {
        return Err(bad(1, "header must be fpr,tpr".into()));
    }
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| bad(line, e.to_string()))?;
        let num = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .filter(|v| (0.0..=1.0).contains(v))
                .ok_or_else(|| bad(line, format!("field {} is not a number in [0, 1]", k + 1)))
        };
        let p = (num(0)?, num(1)?);
        if let Some(prev) = points.last() {
            if p.0 < prev.0 || p.1 < prev.1 {
                return Err(bad(line, "coordinates must be non-decreasing".into()));
            }
        }
        points.push(p);
    }
    if points.is_empty() {
        return Err(bad(1, "no points".into()));
    }
    Ok(Curve {
        label: curve_label(path),
        points,
    })
}

/// `roc_text_time_2.csv` becomes "Text+Time (run 2)"; other names are kept.
pub fn curve_label(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    if let Some(rest) = stem.strip_prefix("roc_") {
        if let Some((kind, run)) = rest.rsplit_once('_') {
            if let (Ok(k), Ok(r)) = (kind.parse::<ModelKind>(), run.parse::<usize>()) {
                return format!("{} (run {r})", k.title());
            }
        }
    }
    stem
}

fn px(p: (f64, f64)) -> (f64, f64) {
    (LEFT + p.0 * (RIGHT - LEFT), BOTTOM - p.1 * (BOTTOM - TOP))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub fn render_svg(curves: &[Curve], title: Option<&str>) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(
        s,
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
    );
    if let Some(t) = title {
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"14\" text-anchor=\"middle\">{}</text>",
            (LEFT + RIGHT) / 2.0,
            escape(t)
        );
    }
    let _ = writeln!(
        s,
        "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        RIGHT - LEFT,
        BOTTOM - TOP
    );
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let (x, y) = px((v, v));
        let _ = writeln!(
            s,
            "<line x1=\"{x:.2}\" y1=\"{BOTTOM}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
            BOTTOM + 5.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{v:.1}</text>",
            BOTTOM + 18.0
        );
        let _ = writeln!(
            s,
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{LEFT}\" y2=\"{y:.2}\" stroke=\"black\"/>",
            LEFT - 5.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{v:.1}</text>",
            LEFT - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">False positive rate</text>",
        (LEFT + RIGHT) / 2.0,
        BOTTOM + 38.0
    );
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{0:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0:.2})\">True positive rate</text>",
        (TOP + BOTTOM) / 2.0
    );
    let (x0, y0) = px((0.0, 0.0));
    let (x1, y1) = px((1.0, 1.0));
    let _ = writeln!(
        s,
        "<line class=\"diagonal\" x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x1:.2}\" y2=\"{y1:.2}\" stroke=\"gray\" stroke-dasharray=\"6 4\"/>"
    );

    for (i, c) in curves.iter().enumerate() {
        let pts: Vec<String> = c
            .points
            .iter()
            .map(|&p| {
                let (x, y) = px(p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            s,
            "<polyline class=\"roc\" points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>",
            pts.join(" "),
            COLORS[i % COLORS.len()]
        );
    }

    let row = 18.0;
    let box_h = row * curves.len() as f64 + 8.0;
    let (bx, by) = (RIGHT - 250.0, BOTTOM - box_h - 10.0);
    let _ = writeln!(
        s,
        "<rect x=\"{bx:.2}\" y=\"{by:.2}\" width=\"240\" height=\"{box_h:.2}\" fill=\"white\" stroke=\"gray\"/>"
    );
    for (i, c) in curves.iter().enumerate() {
        let y = by + 4.0 + row * (i as f64 + 0.5);
        let _ = writeln!(
            s,
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"{}\" stroke-width=\"2\"/>",
            bx + 8.0,
            bx + 30.0,
            COLORS[i % COLORS.len()]
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\">{} (AUC {:.4})</text>",
            bx + 36.0,
            y + 4.0,
            escape(&c.label),
            c.area()
        );
    }
    s.push_str("</svg>\n");
    s
}
