//! Self-contained SVG figures rendered straight from the CSV outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{read_contracts_file, read_curves_file, write_text, Result};
use crate::curves::{ContractRow, CurveRow};

const W: f64 = 720.0;
const H: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-2..1e4).contains(&a) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.2}");
        if s == "-0.00" { "0.00".into() } else { s }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Plot-area mapping from data to pixels.
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    top: f64,
    height: f64,
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64), top: f64, height: f64) -> Self {
        let widen = |(lo, hi): (f64, f64)| if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
        let (x0, x1) = widen(x);
        let (y0, y1) = widen(y);
        Self { x0, x1, y0, y1, top, height }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        self.top + self.height - (y - self.y0) / (self.y1 - self.y0) * self.height
    }

    fn axes(&self, svg: &mut String, xlabel: &str, ylabel: &str, x_ticks: bool) {
        let (l, r) = (LEFT, W - RIGHT);
        let (t, b) = (self.top, self.top + self.height);
        let _ = writeln!(svg, r##"<rect x="{l:.1}" y="{t:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#333"/>"##, r - l, b - t);
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let yv = self.y0 + f * (self.y1 - self.y0);
            let y = self.py(yv);
            let _ = writeln!(svg, r##"<line x1="{l:.1}" y1="{y:.1}" x2="{r:.1}" y2="{y:.1}" stroke="#ddd"/>"##);
            let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{}</text>"#, l - 6.0, y + 4.0, fmt_num(yv));
            if x_ticks {
                let xv = self.x0 + f * (self.x1 - self.x0);
                let x = self.px(xv);
                let _ = writeln!(svg, r#"<text x="{x:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"#, b + 16.0, fmt_num(xv));
            }
        }
        if !xlabel.is_empty() {
            let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{}</text>"#, (l + r) / 2.0, b + 36.0, escape(xlabel));
        }
        let cy = (t + b) / 2.0;
        let _ = writeln!(svg, r#"<text x="18" y="{cy:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 18 {cy:.1})">{}</text>"#, escape(ylabel));
    }
}

fn open_svg(title: &str) -> String {
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif">"#);
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{:.1}" y="24" font-size="15" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    svg
}

/// Mean line with a min-max band across seeds, one series per algorithm.
pub fn curve_svg(rows: &[CurveRow], title: &str, ylabel: &str, value: impl Fn(&CurveRow) -> f64) -> String {
    let mut series: BTreeMap<&str, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for r in rows {
        series.entry(&r.algo).or_default().entry(r.step).or_default().push(value(r));
    }
    let xs = rows.iter().map(|r| r.step as f64);
    let ys = rows.iter().map(&value).filter(|v| v.is_finite());
    let x = (xs.clone().fold(f64::INFINITY, f64::min), xs.fold(f64::NEG_INFINITY, f64::max));
    let (ylo, yhi) = (ys.clone().fold(f64::INFINITY, f64::min), ys.fold(f64::NEG_INFINITY, f64::max));
    let (x, y) = if rows.is_empty() {
        ((0.0, 1.0), (0.0, 1.0))
    } else {
        let pad = 0.05 * (yhi - ylo);
        (x, (ylo - pad, yhi + pad))
    };
    let frame = Frame::new(x, y, TOP, H - TOP - BOTTOM);
    let mut svg = open_svg(title);
    frame.axes(&mut svg, "environment step", ylabel, true);
    for (k, (algo, points)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let stats: Vec<(f64, f64, f64, f64)> = points
            .iter()
            .map(|(&s, v)| {
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (s as f64, mean, lo, hi)
            })
            .collect();
        let mut band = String::new();
        for &(s, _, _, hi) in &stats {
            let _ = write!(band, "{:.2},{:.2} ", frame.px(s), frame.py(hi));
        }
        for &(s, _, lo, _) in stats.iter().rev() {
            let _ = write!(band, "{:.2},{:.2} ", frame.px(s), frame.py(lo));
        }
        let _ = writeln!(svg, r#"<polygon points="{}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#, band.trim_end());
        let line: Vec<String> = stats.iter().map(|&(s, m, _, _)| format!("{:.2},{:.2}", frame.px(s), frame.py(m))).collect();
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        let ly = TOP + 18.0 + 18.0 * k as f64;
        let lx = W - RIGHT - 150.0;
        let _ = writeln!(svg, r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="3"/>"#, lx + 24.0);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" font-size="12">{}</text>"#, lx + 30.0, ly + 4.0, escape(algo));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Latency and reward per type for each state, with oracle values drawn as
/// black ticks when present.
pub fn contracts_svg(rows: &[ContractRow]) -> String {
    let mut svg = open_svg("Contracts per state");
    let panel = (H - TOP - BOTTOM - 30.0) / 2.0;
    let n_states = rows.iter().map(|r| r.state_id + 1).max().unwrap_or(0);
    let types = rows.iter().map(|r| r.q).max().unwrap_or(0);
    let l_top = rows.iter().map(|r| r.l_max).fold(0.0, f64::max);
    let r_top = rows
        .iter()
        .flat_map(|r| [r.reward, r.oracle_reward])
        .flatten()
        .fold(0.0, f64::max);
    let slots = n_states.max(1) as f64;
    let lat = Frame::new((0.0, slots), (0.0, l_top), TOP, panel);
    let rew = Frame::new((0.0, slots), (0.0, r_top), TOP + panel + 30.0, panel);
    lat.axes(&mut svg, "", "latency L", false);
    rew.axes(&mut svg, "evaluation state", "reward R", false);
    let group = (W - LEFT - RIGHT) / slots;
    let bar = group * 0.7 / types.max(1) as f64;
    for r in rows {
        let x = LEFT + r.state_id as f64 * group + group * 0.15 + (r.q - 1) as f64 * bar;
        let color = PALETTE[(r.q - 1) % PALETTE.len()];
        for (frame, policy, oracle) in [(&lat, r.latency, r.oracle_latency), (&rew, r.reward, r.oracle_reward)] {
            if let Some(v) = policy.or(oracle) {
                let y = frame.py(v);
                let base = frame.py(frame.y0.max(0.0));
                let _ = writeln!(svg, r#"<rect x="{x:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#, y.min(base), bar * 0.9, (base - y).abs());
            }
            if let (Some(_), Some(o)) = (policy, oracle) {
                let y = frame.py(o);
                let _ = writeln!(svg, r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black" stroke-width="2"/>"#, x + bar * 0.9);
            }
        }
    }
    for i in 0..n_states {
        let x = LEFT + (i as f64 + 0.5) * group;
        let _ = writeln!(svg, r#"<text x="{x:.1}" y="{:.1}" font-size="11" text-anchor="middle">{i}</text>"#, rew.top + panel + 16.0);
    }
    for q in 0..types {
        let ly = TOP + 14.0 + 16.0 * q as f64;
        let lx = W - RIGHT - 110.0;
        let _ = writeln!(svg, r#"<rect x="{lx:.1}" y="{:.1}" width="12" height="12" fill="{}"/>"#, ly - 10.0, PALETTE[q % PALETTE.len()]);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{ly:.1}" font-size="12">type {}</text>"#, lx + 18.0, q + 1);
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes `reward.svg` and `feasibility.svg` from a curves CSV, plus
/// `contracts.svg` when a contract table is given.
pub fn emit_plots(curves: &Path, contracts: Option<&Path>, out: &Path) -> Result<Vec<PathBuf>> {
    let rows = read_curves_file(curves)?;
    let table = contracts.map(read_contracts_file).transpose()?;
    std::fs::create_dir_all(out).map_err(super::io_err(out))?;
    let mut written = Vec::new();
    let figures = [
        ("reward.svg", curve_svg(&rows, "Evaluation reward", "mean eval reward", |r| r.eval_reward)),
        ("feasibility.svg", curve_svg(&rows, "Feasible menus", "eval feasibility rate", |r| r.eval_feasibility)),
    ];
    for (name, svg) in figures {
        let path = out.join(name);
        write_text(&path, &svg)?;
        written.push(path);
    }
    if let Some(table) = table {
        let path = out.join("contracts.svg");
        write_text(&path, &contracts_svg(&table))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(algo: &str, seed: u64, step: u64, v: f64) -> CurveRow {
        CurveRow {
            step,
            seed,
            algo: algo.into(),
            train_reward: v,
            eval_reward: v,
            eval_feasibility: 1.0,
            eval_utility: v,
            eval_oracle_ratio: 1.0,
        }
    }

    #[test]
    fn empty_input_draws_axes_only() {
        let svg = curve_svg(&[], "t", "y", |r| r.eval_reward);
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert!(!svg.contains("<polyline"));
        assert!(svg.contains("<rect x="));
    }

    #[test]
    fn two_algorithms_two_labeled_series() {
        let rows = vec![
            row("diffusion", 1, 100, 5.0),
            row("diffusion", 2, 100, 7.0),
            row("diffusion", 1, 200, 9.0),
            row("ppo", 1, 100, -1.0),
            row("ppo", 1, 200, 0.5),
        ];
        let svg = curve_svg(&rows, "t", "y", |r| r.eval_reward);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(">diffusion</text>") && svg.contains(">ppo</text>"));
        assert_eq!(svg, curve_svg(&rows, "t", "y", |r| r.eval_reward));
    }

    #[test]
    fn tick_labels() {
        assert_eq!(fmt_num(84422.35), "8.44e4");
        assert_eq!(fmt_num(0.5), "0.50");
        assert_eq!(fmt_num(-0.0001), "-1.00e-4");
        assert_eq!(fmt_num(-0.0), "0.00");
    }
}
