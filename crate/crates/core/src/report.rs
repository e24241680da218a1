//! Per-method aggregation of single-life outcomes and visitation plots.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::envs::EnvId;
use crate::runner::{Method, RunRecord, TraceRow};
use crate::{Error, Result};

/// One table row: statistics of completion steps over a set of seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: Method,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator) over √n; 0 when n = 1.
    pub std_err: f64,
    pub median: f64,
    pub successes: usize,
    pub budget: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub env_id: EnvId,
    pub rows: Vec<MethodRow>,
}

impl AggregateReport {
    pub fn row(&self, method: Method) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

/// Mean, sample standard error and midpoint median of `values`.
pub fn summary_stats(values: &[f64]) -> Result<(f64, f64, f64)> {
    if values.is_empty() {
        return Err(Error::contract("cannot summarize an empty sample"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std_err = if values.len() < 2 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 0 {
        0.5 * (sorted[mid - 1] + sorted[mid])
    } else {
        sorted[mid]
    };
    Ok((mean, std_err, median))
}

/// Aggregates the records of one method on one environment. Failed lives
/// count as the full budget.
pub fn aggregate(records: &[RunRecord]) -> Result<MethodRow> {
    let first = records
        .first()
        .ok_or_else(|| Error::contract("aggregate needs at least one record"))?;
    let (method, env_id, budget) = (first.method(), first.config.env_id, first.budget());
    if let Some(r) = records
        .iter()
        .find(|r| r.method() != method || r.config.env_id != env_id || r.budget() != budget)
    {
        return Err(Error::contract(format!(
            "mixed records: {method}/{env_id}/{budget} and {}/{}/{}",
            r.method(),
            r.config.env_id,
            r.budget()
        )));
    }
    let steps: Vec<f64> = records
        .iter()
        .map(|r| if r.success { r.completion_step.min(budget) } else { budget } as f64)
        .collect();
    let (mean, std_err, median) = summary_stats(&steps)?;
    Ok(MethodRow {
        method,
        n: records.len(),
        mean,
        std_err,
        median,
        successes: records.iter().filter(|r| r.success).count(),
        budget,
    })
}

/// Groups records by method, in order of first appearance, and aggregates
/// each group.
pub fn aggregate_all(records: &[RunRecord]) -> Result<AggregateReport> {
    let first = records
        .first()
        .ok_or_else(|| Error::contract("aggregate needs at least one record"))?;
    let mut methods: Vec<Method> = Vec::new();
    for r in records {
        if !methods.contains(&r.method()) {
            methods.push(r.method());
        }
    }
    let rows = methods
        .into_iter()
        .map(|m| {
            let group: Vec<RunRecord> = records.iter().filter(|r| r.method() == m).cloned().collect();
            aggregate(&group)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AggregateReport {
        env_id: first.config.env_id,
        rows,
    })
}

fn kilo(v: f64) -> String {
    format!("{:.1}k", v / 1000.0)
}

/// Fixed-width text table with the columns method, average ± standard
/// error, successes and median.
pub fn format_table(report: &AggregateReport) -> String {
    let header = ["Method", "Avg ± Std error", "Success", "Median"];
    let body: Vec<[String; 4]> = report
        .rows
        .iter()
        .map(|r| {
            [
                r.method.to_string(),
                format!("{} ± {}", kilo(r.mean), kilo(r.std_err)),
                format!("{} / {}", r.successes, r.n),
                kilo(r.median),
            ]
        })
        .collect();
    let mut widths = header.map(|h| h.chars().count());
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: [&str; 4]| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.iter().zip(widths).enumerate() {
            if i > 0 {
                s.push_str(" | ");
            }
            let pad = w - cell.chars().count();
            if i == 0 {
                write!(s, "{cell}{}", " ".repeat(pad)).unwrap();
            } else {
                write!(s, "{}{cell}", " ".repeat(pad)).unwrap();
            }
        }
        s.trim_end().to_string()
    };
    let mut out = format!("{}\n", report.env_id);
    out.push_str(&line(header));
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 3 * (widths.len() - 1)));
    out.push('\n');
    for row in &body {
        out.push_str(&line([&row[0], &row[1], &row[2], &row[3]]));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorBy {
    Timestep,
    /// The shaped reward the agent trained on.
    Reward,
}

impl FromStr for ColorBy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "timestep" => Ok(ColorBy::Timestep),
            "reward" => Ok(ColorBy::Reward),
            other => Err(Error::Config(format!("unknown color key {other:?} (timestep, reward)"))),
        }
    }
}

impl fmt::Display for ColorBy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColorBy::Timestep => "timestep",
            ColorBy::Reward => "reward",
        })
    }
}

pub const GRADIENT_START: [u8; 3] = [0x2c, 0xa0, 0x2c];
pub const GRADIENT_END: [u8; 3] = [0x1f, 0x4e, 0xd8];
pub const PRIOR_COLOR: [u8; 3] = [0x8e, 0x44, 0xad];

/// Linear blend between the gradient endpoints, `t` clamped to [0, 1].
pub fn gradient_color(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let c: Vec<u8> = GRADIENT_START
        .iter()
        .zip(GRADIENT_END)
        .map(|(&a, b)| (a as f64 + (b as f64 - a as f64) * t).round() as u8)
        .collect();
    hex(&c)
}

fn hex(c: &[u8]) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

const SVG_SIZE: f64 = 600.0;
const SVG_MARGIN: f64 = 20.0;

/// SVG of the projected trajectory: one marker per row, one segment per
/// consecutive pair, optional prior states underneath.
pub fn render_visitation(
    rows: &[TraceRow],
    projection: (usize, usize),
    color_by: ColorBy,
    prior: &[[f64; 2]],
) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::contract("cannot plot an empty trace"));
    }
    let (ix, iy) = projection;
    let points = rows
        .iter()
        .map(|r| match (r.obs.get(ix), r.obs.get(iy)) {
            (Some(&x), Some(&y)) => Ok([x, y]),
            _ => Err(Error::contract(format!(
                "projection ({ix}, {iy}) outside a {}-dim observation",
                r.obs.len()
            ))),
        })
        .collect::<Result<Vec<_>>>()?;
    let key: Vec<f64> = rows
        .iter()
        .map(|r| match color_by {
            ColorBy::Timestep => r.step as f64,
            ColorBy::Reward => r.r_shaped,
        })
        .collect();
    let (kmin, kmax) = key.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let shade = |v: f64| {
        if kmax - kmin > 0.0 {
            gradient_color((v - kmin) / (kmax - kmin))
        } else {
            gradient_color(0.0)
        }
    };

    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points.iter().chain(prior) {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    let span = (x1 - x0).max(y1 - y0).max(1e-9);
    let inner = SVG_SIZE - 2.0 * SVG_MARGIN;
    let to_px = |p: &[f64; 2]| {
        (
            SVG_MARGIN + (p[0] - x0) / span * inner,
            SVG_SIZE - SVG_MARGIN - (p[1] - y0) / span * inner,
        )
    };

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_SIZE}" height="{SVG_SIZE}" viewBox="0 0 {SVG_SIZE} {SVG_SIZE}">"#
    )
    .unwrap();
    writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    if !prior.is_empty() {
        writeln!(svg, r#"<g class="prior" fill="{}" fill-opacity="0.5">"#, hex(&PRIOR_COLOR)).unwrap();
        for p in prior {
            let (x, y) = to_px(p);
            writeln!(svg, r#"<circle class="prior" cx="{x:.2}" cy="{y:.2}" r="1.5"/>"#).unwrap();
        }
        svg.push_str("</g>\n");
    }
    svg.push_str("<g class=\"trajectory\" stroke-width=\"1\">\n");
    for (w, k) in points.windows(2).zip(&key) {
        let (ax, ay) = to_px(&w[0]);
        let (bx, by) = to_px(&w[1]);
        writeln!(
            svg,
            r#"<line class="segment" x1="{ax:.2}" y1="{ay:.2}" x2="{bx:.2}" y2="{by:.2}" stroke="{}"/>"#,
            shade(*k)
        )
        .unwrap();
    }
    for (p, k) in points.iter().zip(&key) {
        let (x, y) = to_px(p);
        writeln!(svg, r#"<circle class="marker" cx="{x:.2}" cy="{y:.2}" r="2" fill="{}"/>"#, shade(*k)).unwrap();
    }
    svg.push_str("</g>\n</svg>\n");
    Ok(svg)
}
