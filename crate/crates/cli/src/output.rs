//! Trace and summary CSVs, the regret SVG and the plain-text report.
//!
//! Everything is rendered in memory first and written only once a run has
//! finished, so a failed run leaves no partial files behind.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use csv::{Terminator, WriterBuilder};
use omdlab_core::numeric::fmt_sig17;

use crate::config::OutputKind;
use crate::error::{CliError, Result};
use crate::run::{CellOutcome, RunOutcome};

pub const TRACE_HEADER: [&str; 6] = ["t", "loss_dot_w", "cum_regret", "min_coord", "max_cert_slack_so_far", "balance_stat"];

pub const SUMMARY_HEADER: [&str; 12] = [
    "runner",
    "regularizer",
    "eps_nominal",
    "eps",
    "seed",
    "final_regret",
    "max_slack",
    "min_coord",
    "loss_balance_alpha",
    "relaxed",
    "fallback_rounds",
    "note",
];

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = WriterBuilder::new().terminator(Terminator::CRLF).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| CliError::Csv(e.into_error().into()))
}

/// One row per round; `min_coord` and `balance_stat` describe the iterate after the round.
pub fn trace_csv(cell: &CellOutcome) -> Result<Vec<u8>> {
    let traj = &cell.trajectory;
    let dots = traj.loss_dot_w();
    let cum = cell.regret.cumulative();
    let mut worst = 0.0f64;
    let rows = (0..traj.horizon()).map(|i| {
        worst = worst.max(traj.certificates[i].slack);
        vec![
            (i + 1).to_string(),
            fmt_sig17(dots[i]),
            fmt_sig17(cum[i]),
            fmt_sig17(traj.iterates[i + 1].min_coord()),
            fmt_sig17(worst),
            fmt_sig17(cell.balance[i]),
        ]
    });
    csv_bytes(&TRACE_HEADER, rows)
}

fn note(cell: &CellOutcome) -> String {
    match &cell.polytope {
        Some(p) if p.diagnostic => format!("prefix-conditioned stream after {} tries; event {}", p.tries, p.event),
        Some(p) => format!("event stream after {} tries", p.tries),
        None => cell.tau.map_or_else(String::new, |t| format!("tau {t}")),
    }
}

pub fn summary_csv(out: &RunOutcome) -> Result<Vec<u8>> {
    let rows = out.cells.iter().map(|c| {
        let t = &c.trajectory;
        vec![
            c.spec.runner.to_string(),
            c.spec.reg.to_string(),
            fmt_sig17(c.spec.eps_nominal),
            fmt_sig17(c.spec.eps),
            c.spec.seed.to_string(),
            fmt_sig17(c.regret.regret),
            fmt_sig17(t.max_slack()),
            fmt_sig17(t.min_coord()),
            fmt_sig17(c.loss_alpha),
            c.relaxed().to_string(),
            t.fallback_rounds.len().to_string(),
            note(c),
        ]
    });
    csv_bytes(&SUMMARY_HEADER, rows)
}

/// One cumulative-regret curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub group: String,
    pub values: Vec<f64>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 540.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 260.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 60.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick(x: f64) -> String {
    if x != 0.0 && (x.abs() >= 1e5 || x.abs() < 1e-2) {
        format!("{x:.2e}")
    } else {
        let s = format!("{x:.2}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn polyline(values: &[f64], sx: impl Fn(f64) -> f64, sy: impl Fn(f64) -> f64) -> String {
    let mut pts = String::with_capacity(values.len() * 16);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            pts.push(' ');
        }
        let _ = write!(pts, "{:.2},{:.2}", sx((i + 1) as f64), sy(*v));
    }
    pts
}

/// Cumulative regret against `t`: a thin polyline per curve and, for groups
/// with several curves, a bold polyline of their mean.
pub fn emit_svg(title: &str, curves: &[Curve]) -> String {
    let t_max = curves.iter().map(|c| c.values.len()).max().unwrap_or(1).max(1) as f64;
    let finite = curves.iter().flat_map(|c| c.values.iter().copied()).filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((0.0f64, 0.0f64), |(a, b), v| (a.min(v), b.max(v)));
    if hi - lo < 1e-12 {
        hi += 1.0;
        lo -= 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |t: f64| LEFT + plot_w * t / t_max;
    let sy = |v: f64| TOP + plot_h * (hi - v) / (hi - lo);

    let mut groups: Vec<(&str, Vec<&Curve>)> = Vec::new();
    for c in curves {
        match groups.iter_mut().find(|g| g.0 == c.group) {
            Some(g) => g.1.push(c),
            None => groups.push((&c.group, vec![c])),
        }
    }

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{LEFT}" y="28" font-size="15">{}</text>"#, escape(title));
    // axes and ticks
    let (x0, x1, y0, y1) = (LEFT, LEFT + plot_w, TOP, TOP + plot_h);
    let _ = writeln!(
        svg,
        r#"<path d="M{x0},{y0} L{x0},{y1} L{x1},{y1}" fill="none" stroke="black" stroke-width="1"/>"#
    );
    for k in 0..=5 {
        let f = k as f64 / 5.0;
        let t = f * t_max;
        let v = lo + f * (hi - lo);
        let (x, y) = (sx(t), sy(v));
        let _ = writeln!(svg, r##"<line x1="{x:.2}" y1="{y1}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"##, y1 + 5.0);
        let _ = writeln!(svg, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, y1 + 20.0, tick(t));
        let _ = writeln!(svg, r##"<line x1="{:.2}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="black"/>"##, x0 - 5.0);
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 8.0,
            y + 4.0,
            tick(v)
        );
    }
    if lo < 0.0 && hi > 0.0 {
        let y = sy(0.0);
        let _ = writeln!(svg, r##"<line x1="{x0}" y1="{y:.2}" x2="{x1}" y2="{y:.2}" stroke="#999" stroke-dasharray="4 4"/>"##);
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">round t</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">cumulative regret</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    for (gi, (name, members)) in groups.iter().enumerate() {
        let color = PALETTE[gi % PALETTE.len()];
        let _ = writeln!(svg, r#"<g stroke="{color}" fill="none">"#);
        for c in members {
            let _ = writeln!(
                svg,
                r#"<polyline stroke-width="1" stroke-opacity="0.45" points="{}"/>"#,
                polyline(&c.values, sx, sy)
            );
        }
        if members.len() > 1 {
            let len = members.iter().map(|c| c.values.len()).min().unwrap_or(0);
            let mean: Vec<f64> = (0..len)
                .map(|i| members.iter().map(|c| c.values[i]).sum::<f64>() / members.len() as f64)
                .collect();
            let _ = writeln!(svg, r#"<polyline stroke-width="3" points="{}"/>"#, polyline(&mean, sx, sy));
        }
        let _ = writeln!(svg, "</g>");
        let ly = TOP + 10.0 + 20.0 * gi as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{:.2}" y2="{ly}" stroke="{color}" stroke-width="3"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}">{} (n={})</text>"#,
            lx + 26.0,
            ly + 4.0,
            escape(name),
            members.len()
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn eps_text(out: &RunOutcome) -> String {
    let mut seen: Vec<String> = Vec::new();
    for c in &out.cells {
        let s = format!("{:.3e}", c.spec.eps);
        if !seen.contains(&s) {
            seen.push(s);
        }
    }
    seen.join(", ")
}

pub fn regret_svg(out: &RunOutcome) -> String {
    let s = &out.plan.scenario;
    let multi_eps = s.eps.len() > 1;
    let curves: Vec<Curve> = out
        .cells
        .iter()
        .map(|c| {
            let mut group = format!("{} {}", c.spec.runner, c.spec.reg);
            if multi_eps {
                let _ = write!(group, " eps={:.1e}", c.spec.eps);
            }
            Curve { group, values: c.regret.cumulative() }
        })
        .collect();
    let title = format!("{}: eta = {}, eps = {}", s.name, tick_eta(s.eta), eps_text(out));
    emit_svg(&title, &curves)
}

fn tick_eta(eta: f64) -> String {
    let s = format!("{eta:.6}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

pub fn report(out: &RunOutcome) -> String {
    let s = &out.plan.scenario;
    let mut r = String::new();
    let _ = writeln!(r, "scenario {}: {} cell(s), T = {}, eta = {}", s.name, out.cells.len(), s.horizon, s.eta);
    for (k, v) in &out.metrics {
        let _ = writeln!(r, "{k} = {v:.6e}");
    }
    let mut by_group: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for c in &out.cells {
        by_group
            .entry(format!("{} {} eps {:.3e}", c.spec.runner, c.spec.reg, c.spec.eps))
            .or_default()
            .push(c.regret.regret);
    }
    for (g, v) in &by_group {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(r, "{g}: mean regret {mean:.6}, max {max:.6} over {} cell(s)", v.len());
    }
    for a in &out.assertions {
        let _ = writeln!(r, "{} {}: {}", if a.passed { "PASS" } else { "FAIL" }, a.label, a.detail);
    }
    r
}

fn write(path: PathBuf, bytes: &[u8]) -> Result<PathBuf> {
    fs::write(&path, bytes).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    Ok(path)
}

/// Writes the scenario's outputs under `dir`, returning the files written.
pub fn write_outputs(out: &RunOutcome, dir: &Path) -> Result<Vec<PathBuf>> {
    let s = &out.plan.scenario;
    let mut files: Vec<(PathBuf, Vec<u8>)> = vec![
        (dir.join("scenario.ini"), s.serialize().into_bytes()),
        (dir.join("report.txt"), report(out).into_bytes()),
    ];
    if s.outputs.contains(&OutputKind::SummaryCsv) {
        files.push((dir.join("summary.csv"), summary_csv(out)?));
    }
    if s.outputs.contains(&OutputKind::TraceCsv) {
        for c in &out.cells {
            files.push((dir.join("traces").join(format!("{}.csv", c.spec.label())), trace_csv(c)?));
        }
    }
    if s.outputs.contains(&OutputKind::RegretSvg) {
        files.push((dir.join("regret.svg"), regret_svg(out).into_bytes()));
    }
    let mkdir = |p: &Path| fs::create_dir_all(p).map_err(|source| CliError::Io { path: p.display().to_string(), source });
    mkdir(dir)?;
    if s.outputs.contains(&OutputKind::TraceCsv) {
        mkdir(&dir.join("traces"))?;
    }
    files.into_iter().map(|(p, b)| write(p, &b)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(group: &str, values: Vec<f64>) -> Curve {
        Curve { group: group.into(), values }
    }

    #[test]
    fn one_trace_is_one_polyline() {
        let svg = emit_svg("x", &[curve("a", (0..50).map(f64::from).collect())]);
        assert_eq!(svg.matches("<polyline").count(), 1);
        let pts = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(pts.split(' ').count(), 50);
    }

    #[test]
    fn seeds_get_a_mean_line() {
        let curves: Vec<Curve> = (0..20).map(|k| curve("g", vec![k as f64; 10])).collect();
        let svg = emit_svg("x", &curves);
        assert_eq!(svg.matches("<polyline").count(), 21);
        assert_eq!(svg.matches("stroke-width=\"3\" points").count(), 1);
        assert_eq!(svg, emit_svg("x", &curves));
    }

    #[test]
    fn svg_is_self_contained_and_escaped() {
        let svg = emit_svg("a<b & c", &[curve("g", vec![1.0, 2.0])]);
        assert!(svg.contains("a&lt;b &amp; c"));
        assert!(!svg.contains("href") && !svg.contains("<image") && !svg.contains("<style"));
        assert!(svg.starts_with("<svg xmlns=\"http://www.w3.org/2000/svg\""));
    }

    #[test]
    fn csv_is_crlf_and_quoted_when_needed() {
        let bytes = csv_bytes(&["a", "b"], vec![vec!["1".into(), "x, y".into()]].into_iter()).unwrap();
        assert_eq!(String::from_utf8(bytes).unwrap(), "a,b\r\n1,\"x, y\"\r\n");
    }
}
