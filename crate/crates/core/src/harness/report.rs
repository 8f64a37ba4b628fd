//! Result CSVs and static SVG plots.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{write_file, HarnessError, Result, ResultsTable};
use crate::geometry::Point;
use crate::metrics::MetricsRow;
use crate::model::JointPrediction;
use crate::scene::{SceneSample, D_P};

/// One row of `results.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultLine {
    pub variant: String,
    /// A seed, or `mean`.
    pub seed: String,
    pub agent_type: String,
    pub horizon: String,
    pub min_ade: f64,
    pub min_fde: f64,
    pub miss_rate: f64,
    pub map: f64,
    pub soft_map: f64,
    pub params: usize,
    pub latency_ms: f64,
}

fn lines(table: &ResultsTable) -> Vec<ResultLine> {
    let mut out = Vec::new();
    for v in &table.variants {
        let mut push = |seed: String, r: &MetricsRow| {
            out.push(ResultLine {
                variant: v.variant.name().to_string(),
                seed,
                agent_type: r.agent_type.clone(),
                horizon: r.horizon.clone(),
                min_ade: r.min_ade,
                min_fde: r.min_fde,
                miss_rate: r.miss_rate,
                map: r.map,
                soft_map: r.soft_map,
                params: v.params,
                latency_ms: v.latency_ms,
            })
        };
        for s in &v.seeds {
            for r in s.evaluation.rows.iter().chain(&s.evaluation.summary) {
                push(s.seed.to_string(), r);
            }
        }
        for r in v.mean_summary() {
            push("mean".to_string(), &r);
        }
    }
    out
}

pub fn write_results_csv(path: &Path, rows: &[ResultLine]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Csv(e.to_string()))?;
    write_file(path, &bytes)
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultLine>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(HarnessError::from)).collect()
}

/// Writes `results.csv`, one bar chart per headline metric and one
/// trajectory overlay per entry of `overlays`. Returns the files written.
pub fn emit_report(
    table: &ResultsTable,
    overlays: &[(String, SceneSample, JointPrediction)],
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    if table.variants.is_empty() || table.variants.iter().any(|v| v.seeds.is_empty()) {
        return Err(HarnessError::Empty);
    }
    let mut files = Vec::new();
    let csv_path = dir.join("results.csv");
    write_results_csv(&csv_path, &lines(table))?;
    files.push(csv_path);

    files.extend(render_plots(&lines(table), dir)?);
    for (name, scene, pred) in overlays {
        let path = dir.join(format!("overlay-{name}.svg"));
        write_file(&path, trajectory_svg(scene, pred).as_bytes())?;
        files.push(path);
    }
    if !table.complete {
        let path = dir.join("INCOMPLETE.txt");
        let msg: String = table.failures.iter().map(|(v, e)| format!("{v}: {e}\n")).collect();
        write_file(&path, msg.as_bytes())?;
        files.push(path);
    }
    Ok(files)
}

/// One bar chart per headline metric from the `All(Avg)` lines: the
/// `mean` line gives the bar, every seed line a dot.
pub fn render_plots(lines: &[ResultLine], dir: &Path) -> Result<Vec<PathBuf>> {
    let overall: Vec<&ResultLine> = lines.iter().filter(|l| l.agent_type == "All(Avg)").collect();
    let mut variants: Vec<&str> = Vec::new();
    for l in &overall {
        if !variants.contains(&l.variant.as_str()) {
            variants.push(&l.variant);
        }
    }
    if variants.is_empty() {
        return Err(HarnessError::Empty);
    }
    let metrics: [(&str, &str, fn(&ResultLine) -> f64); 4] = [
        ("min_ade", "minADE (m)", |r| r.min_ade),
        ("min_fde", "minFDE (m)", |r| r.min_fde),
        ("miss_rate", "Miss rate", |r| r.miss_rate),
        ("map", "mAP", |r| r.map),
    ];
    let mut files = Vec::new();
    for (file, label, f) in metrics {
        let bars: Vec<(String, f64, Vec<f64>)> = variants
            .iter()
            .map(|v| {
                let mine = overall.iter().filter(|l| l.variant == *v);
                let mean = mine.clone().find(|l| l.seed == "mean").map(|l| f(l)).unwrap_or(f64::NAN);
                let seeds = mine.filter(|l| l.seed != "mean").map(|l| f(l)).collect();
                (v.to_string(), mean, seeds)
            })
            .collect();
        let path = dir.join(format!("{file}.svg"));
        write_file(&path, bar_svg(label, &bars).as_bytes())?;
        files.push(path);
    }
    Ok(files)
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn svg_open(s: &mut String) {
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
}

/// Mean bars with per-seed dots.
fn bar_svg(label: &str, bars: &[(String, f64, Vec<f64>)]) -> String {
    let mut s = String::new();
    svg_open(&mut s);
    let (left, bottom, top) = (60.0, H - 60.0, 30.0);
    let max = bars
        .iter()
        .flat_map(|b| b.2.iter().copied().chain([b.1]))
        .fold(0.0f64, f64::max)
        .max(1e-9)
        * 1.1;
    let y = |v: f64| bottom - (bottom - top) * v / max;
    let _ = writeln!(s, r#"<text x="{left}" y="18">{label}</text>"#);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{bottom}" x2="{}" y2="{bottom}" stroke="black"/>"#, W - 20.0);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="black"/>"#);
    for i in 0..=4 {
        let v = max * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.3}</text>"#,
            left - 6.0,
            y(v) + 4.0
        );
    }
    let slot = (W - 20.0 - left) / bars.len() as f64;
    for (i, (name, mean, seeds)) in bars.iter().enumerate() {
        let x = left + slot * i as f64 + slot * 0.2;
        let w = slot * 0.6;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.1}" y="{:.1}" width="{w:.1}" height="{:.1}" fill="{}"/>"#,
            y(*mean),
            bottom - y(*mean),
            COLORS[i % COLORS.len()]
        );
        for v in seeds {
            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="black"/>"#, x + w / 2.0, y(*v));
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{name}</text>"#,
            x + w / 2.0,
            bottom + 18.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{mean:.3}</text>"#,
            x + w / 2.0,
            y(*mean) - 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Map, history, ground truth (black) and predicted joint modes (one color
/// per agent, opacity by score) of one scene.
pub fn trajectory_svg(scene: &SceneSample, pred: &JointPrediction) -> String {
    let d = scene.dims;
    let mut lanes: Vec<Vec<Point>> = Vec::new();
    for slot in 0..2 {
        for e in (0..d.n_map).filter(|&e| scene.map_element_valid(slot, e)) {
            lanes.push(scene.map_element(slot, e).chunks_exact(D_P).map(|p| [p[0], p[1]]).collect());
        }
    }
    let hist: Vec<Vec<Point>> = scene
        .pair
        .iter()
        .map(|&a| {
            (0..d.t_hist)
                .filter(|&k| scene.history_valid(a, k))
                .map(|k| [scene.history(a, k)[0], scene.history(a, k)[1]])
                .collect()
        })
        .collect();
    let gt: Vec<Vec<Point>> = scene.pair.iter().map(|&a| scene.future(a)).collect();

    let mut pts: Vec<Point> = gt.iter().chain(&hist).flatten().copied().collect();
    for m in &pred.modes {
        for a in &m.agents {
            pts.extend(&a.means);
        }
    }
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in &pts {
        x0 = x0.min(p[0]);
        y0 = y0.min(p[1]);
        x1 = x1.max(p[0]);
        y1 = y1.max(p[1]);
    }
    let pad = 10.0;
    let span = (x1 - x0).max(y1 - y0).max(1.0) + 2.0 * pad;
    let scale = (H - 20.0) / span;
    let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
    let map = |p: &Point| (W / 2.0 + (p[0] - cx) * scale, H / 2.0 - (p[1] - cy) * scale);
    let path = |line: &[Point]| -> String {
        line.iter()
            .map(|p| {
                let (x, y) = map(p);
                format!("{x:.1},{y:.1}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    };

    let mut s = String::new();
    svg_open(&mut s);
    for l in &lanes {
        let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#bbbbbb" stroke-width="1"/>"##, path(l));
    }
    let max_score = pred.modes.iter().map(|m| m.score).fold(1e-12, f64::max);
    for m in &pred.modes {
        let opacity = 0.2 + 0.8 * m.score / max_score;
        for (a, traj) in m.agents.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5" stroke-opacity="{opacity:.3}"/>"#,
                path(&traj.means),
                COLORS[a]
            );
        }
    }
    for (h, g) in hist.iter().zip(&gt) {
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="black" stroke-width="2" stroke-dasharray="4 2"/>"#, path(h));
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="black" stroke-width="2"/>"#, path(g));
    }
    let _ = writeln!(s, r#"<text x="10" y="18">{} ({} modes)</text>"#, scene.kind, pred.modes.len());
    s.push_str("</svg>\n");
    s
}
