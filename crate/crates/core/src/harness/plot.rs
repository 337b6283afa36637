//! Static SVG line charts rendered straight from a summary CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotMode {
    VsIter,
    VsTime,
}

impl FromStr for PlotMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vs_iter" => Ok(Self::VsIter),
            "vs_time" => Ok(Self::VsTime),
            other => Err(Error::config(
                "mode",
                format!("expected vs_iter or vs_time, got {other:?}"),
            )),
        }
    }
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 64.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// One labelled polyline in data coordinates.
#[derive(Clone, Debug)]
struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

fn read_series(summary: &Path, mode: PlotMode) -> Result<Vec<Series>> {
    let mut reader = csv::Reader::from_path(summary)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);

    let mut required = vec!["algorithm", "iter", "sd_node1"];
    if mode == PlotMode::VsTime {
        required.extend(["comm_s_cum", "compute_s_cum"]);
    }
    let missing: Vec<String> = required
        .iter()
        .filter(|c| col(c).is_none())
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingColumns {
            path: summary.to_path_buf(),
            columns: missing,
        });
    }
    let alg = col("algorithm").unwrap();
    let iter = col("iter").unwrap();
    let sd = col("sd_node1").unwrap();
    let time = (col("comm_s_cum"), col("compute_s_cum"));
    let key = col("axis").zip(col("value"));

    let parse = |rec: &csv::StringRecord, i: usize| -> Result<f64> {
        rec[i]
            .trim()
            .parse::<f64>()
            .map_err(|_| Error::Format(format!("{}: bad number {:?}", summary.display(), &rec[i])))
    };

    // BTreeMap keeps the label order stable; first-seen order is kept separately.
    let mut order = Vec::new();
    let mut by_label: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec?;
        let label = match key {
            Some((a, v)) => format!("{}={} {}", &rec[a], &rec[v], &rec[alg]),
            None => rec[alg].to_string(),
        };
        let x = match (mode, time) {
            (PlotMode::VsIter, _) => parse(&rec, iter)?,
            (PlotMode::VsTime, (Some(c), Some(p))) => parse(&rec, c)? + parse(&rec, p)?,
            (PlotMode::VsTime, _) => unreachable!("checked above"),
        };
        let y = parse(&rec, sd)?;
        if !by_label.contains_key(&label) {
            order.push(label.clone());
        }
        by_label.entry(label).or_default().push((x, y));
    }
    if order.is_empty() {
        return Err(Error::EmptySeries(summary.display().to_string()));
    }
    Ok(order
        .into_iter()
        .map(|label| {
            let points = by_label.remove(&label).unwrap_or_default();
            Series { label, points }
        })
        .collect())
}

fn render(series: &[Series], mode: PlotMode, title: &str) -> String {
    let all = || series.iter().flat_map(|s| s.points.iter());
    let floor = all()
        .map(|p| p.1)
        .filter(|&y| y > 0.0 && y.is_finite())
        .fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { 1e-16 };
    let log_y = |y: f64| {
        if y > 0.0 && y.is_finite() {
            y.log10()
        } else {
            floor.log10()
        }
    };

    let (mut x0, mut x1) = all().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (mut y0, mut y1) = all().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
        let v = log_y(p.1);
        (a.min(v), b.max(v))
    });
    y0 = y0.floor();
    y1 = y1.ceil();
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    if !x0.is_finite() {
        x0 = 0.0;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |v: f64| HEIGHT - MARGIN - (v - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<g stroke="black" fill="none"><line x1="{m}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{m}" y1="{m}" x2="{m}" y2="{b}"/></g>"#,
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    let mut decade = y0 as i32;
    while decade as f64 <= y1 {
        let y = sy(decade as f64);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.2}" text-anchor="end" class="ytick">1e{decade}</text>"#,
            MARGIN - 6.0,
            y + 4.0
        );
        decade += 1;
    }
    let xlabel = match mode {
        PlotMode::VsIter => "iteration",
        PlotMode::VsTime => "time (s): communication + computation",
    };
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="end" class="xtick">{}</text>"#,
        MARGIN,
        HEIGHT - MARGIN + 16.0,
        fmt_tick(x0)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="end" class="xtick">{}</text>"#,
        WIDTH - MARGIN,
        HEIGHT - MARGIN + 16.0,
        fmt_tick(x1)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 20.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">subspace distance at node 1 (log scale)</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );

    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.3},{:.3}", sx(x), sy(log_y(y))))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" data-series="{}" points="{}"/>"#,
            escape(&s.label),
            pts.join(" ")
        );
        let ly = MARGIN + 16.0 * k as f64;
        let lx = WIDTH - MARGIN - 170.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn fmt_tick(x: f64) -> String {
    if x.abs() >= 1e4 || (x != 0.0 && x.abs() < 1e-2) {
        format!("{x:.2e}")
    } else {
        format!("{}", (x * 1000.0).round() / 1000.0)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders `summary` (a `summary.csv` or `sweep_summary.csv`) as one SVG chart at `out`.
pub fn emit_plots(summary: &Path, mode: PlotMode, out: &Path) -> Result<()> {
    let series = read_series(summary, mode)?;
    let title = summary
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(out, render(&series, mode, &title))?;
    Ok(())
}
