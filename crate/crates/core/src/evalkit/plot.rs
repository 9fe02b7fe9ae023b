use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::experiment::RunInfo;
use super::record::{read_records, TrainRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct RunData {
    pub dir: PathBuf,
    pub info: RunInfo,
    pub records: Vec<TrainRecord>,
}

pub fn load_run(dir: &Path) -> Result<RunData> {
    let info_path = dir.join("run.json");
    let text = std::fs::read_to_string(&info_path).map_err(|e| Error::io(&info_path, e))?;
    let info: RunInfo = serde_json::from_str(&text)?;
    let rec_path = dir.join("records.ndjson");
    let file = std::fs::File::open(&rec_path).map_err(|e| Error::io(&rec_path, e))?;
    Ok(RunData {
        dir: dir.to_path_buf(),
        info,
        records: read_records(file)?,
    })
}

/// Mean and sample standard deviation across seeds at one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPoint {
    pub x: f64,
    pub mean: f64,
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-iteration band over runs, truncated to the shortest run. `y` returns
/// `None` for points to leave out.
pub fn band(runs: &[&RunData], y: impl Fn(&TrainRecord) -> Option<f64>) -> Vec<BandPoint> {
    let len = runs.iter().map(|r| r.records.len()).min().unwrap_or(0);
    (0..len)
        .filter_map(|i| {
            let xs: Vec<f64> = runs.iter().map(|r| r.records[i].total_timesteps as f64).collect();
            let ys: Vec<f64> = runs.iter().filter_map(|r| y(&r.records[i])).collect();
            if ys.is_empty() {
                return None;
            }
            let (mean, std) = mean_std(&ys);
            Some(BandPoint {
                x: xs.iter().sum::<f64>() / xs.len() as f64,
                mean,
                std,
            })
        })
        .collect()
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Static SVG with one mean line and a ±std band per series.
pub fn render_svg(title: &str, y_label: &str, series: &[(String, Vec<BandPoint>)]) -> String {
    let (w, h) = (720.0, 440.0);
    let (left, right, top, bottom) = (70.0, 170.0, 40.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let x_max = series
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|p| p.x))
        .fold(0.0, f64::max)
        .max(1.0);
    let sx = |x: f64| left + pw * x / x_max;
    let sy = |y: f64| top + ph * (1.0 - y.clamp(0.0, 1.0));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, left + pw / 2.0, escape(title));
    for k in 0..=5 {
        let v = k as f64 / 5.0;
        let y = sy(v);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.1}</text>"##,
            left + pw,
            left - 6.0,
            y + 4.0
        );
        let xv = x_max * v;
        let x = sx(xv);
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            top + ph + 18.0,
            short_number(xv)
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">cumulative environment timesteps</text>"#,
        left + pw / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(18 {:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
        top + ph / 2.0,
        escape(y_label)
    );

    for (k, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        if !pts.is_empty() {
            let upper = pts.iter().map(|p| format!("{:.1},{:.1}", sx(p.x), sy(p.mean + p.std)));
            let lower = pts.iter().rev().map(|p| format!("{:.1},{:.1}", sx(p.x), sy(p.mean - p.std)));
            let poly: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(s, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, poly.join(" "));
            let line: Vec<String> = pts.iter().map(|p| format!("{:.1},{:.1}", sx(p.x), sy(p.mean))).collect();
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        }
        let ly = top + 16.0 + 20.0 * k as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn short_number(v: f64) -> String {
    if v >= 1e6 {
        format!("{:.1}M", v / 1e6)
    } else if v >= 1e3 {
        format!("{:.0}k", v / 1e3)
    } else {
        format!("{v:.0}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Groups runs by algorithm and returns `(success_svg, good_starts_svg)`.
/// Runs evaluated on different test sets cannot share a plot.
pub fn plot_runs(runs: &[RunData]) -> Result<(String, String)> {
    if runs.is_empty() {
        return Err(Error::Config("plot needs at least one run directory".into()));
    }
    let hashes: Vec<_> = runs.iter().map(|r| r.info.test_set_hash.as_deref()).collect();
    if hashes.iter().any(|h| *h != hashes[0]) {
        return Err(Error::Config("runs were evaluated on different test sets".into()));
    }
    let mut groups: BTreeMap<&str, Vec<&RunData>> = BTreeMap::new();
    for r in runs {
        groups.entry(r.info.algorithm.as_str()).or_default().push(r);
    }
    let success: Vec<_> = groups
        .iter()
        .map(|(name, rs)| (format!("{name} (n={})", rs.len()), band(rs, |r| Some(r.test_success))))
        .collect();
    let good: Vec<_> = groups
        .iter()
        .map(|(name, rs)| (format!("{name} (n={})", rs.len()), band(rs, |r| r.good_starts_fraction)))
        .collect();
    Ok((
        render_svg("Test success", "success fraction", &success),
        render_svg("Good starts", "fraction of good starts", &good),
    ))
}

/// Writes `success.svg` and `good_starts.svg` into `out`.
pub fn plot(run_dirs: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>> {
    let runs = run_dirs.iter().map(|d| load_run(d)).collect::<Result<Vec<_>>>()?;
    let (success, good) = plot_runs(&runs)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut written = Vec::new();
    for (name, svg) in [("success.svg", success), ("good_starts.svg", good)] {
        let path = out.join(name);
        std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
