//! Final-window summaries and convergence steps for two or more curve sets.

use std::collections::BTreeMap;
use std::io::Write;

use super::{HarnessError, Result};
use crate::curves::CurveRow;

/// Evaluation rows averaged at the end of each curve.
pub const FINAL_WINDOW: usize = 5;
/// Moving-average width for the convergence step.
pub const CONVERGENCE_WINDOW: usize = 5;
/// Relative band around the final value that counts as converged.
pub const CONVERGENCE_BAND: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Sample standard deviation (n - 1 denominator).
    pub fn of(v: &[f64]) -> Self {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub label: String,
    pub algo: String,
    pub seeds: Vec<u64>,
    pub final_reward: MeanStd,
    pub final_feasibility: MeanStd,
    pub final_oracle_ratio: MeanStd,
    pub convergence_step: MeanStd,
    /// Per-seed final-window eval reward, in seed order.
    pub per_seed_final: Vec<f64>,
    pub per_seed_convergence: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub groups: Vec<GroupSummary>,
    pub verdict: String,
}

/// First step at which the trailing moving average of `values` lies within
/// `band` (relative) of its last value. `points` are `(step, value)` in
/// step order.
pub fn convergence_step(points: &[(u64, f64)], window: usize, band: f64) -> Option<u64> {
    if points.is_empty() || window == 0 {
        return None;
    }
    let ma: Vec<f64> = (0..points.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let w = &points[lo..=i];
            w.iter().map(|p| p.1).sum::<f64>() / w.len() as f64
        })
        .collect();
    let last = *ma.last()?;
    let tol = band * last.abs();
    ma.iter().position(|m| (m - last).abs() <= tol).map(|i| points[i].0)
}

fn tail_mean(rows: &[&CurveRow], f: impl Fn(&CurveRow) -> f64) -> f64 {
    let lo = rows.len().saturating_sub(FINAL_WINDOW);
    let tail = &rows[lo..];
    tail.iter().map(|r| f(r)).sum::<f64>() / tail.len() as f64
}

/// Summarizes one algorithm's curves; needs at least two seeds.
pub fn summarize(rows: &[CurveRow], label: &str) -> Result<GroupSummary> {
    let mut by_seed: BTreeMap<u64, Vec<&CurveRow>> = BTreeMap::new();
    for r in rows {
        by_seed.entry(r.seed).or_default().push(r);
    }
    if by_seed.len() < 2 {
        return Err(HarnessError::Data(format!(
            "`{label}` has {} seed(s); comparison needs at least 2 per curve set",
            by_seed.len()
        )));
    }
    let algo = rows[0].algo.clone();
    let (mut rewards, mut feas, mut ratio, mut conv) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for seed_rows in by_seed.values_mut() {
        seed_rows.sort_by_key(|r| r.step);
        rewards.push(tail_mean(seed_rows, |r| r.eval_reward));
        feas.push(tail_mean(seed_rows, |r| r.eval_feasibility));
        ratio.push(tail_mean(seed_rows, |r| r.eval_oracle_ratio));
        let pts: Vec<(u64, f64)> = seed_rows.iter().map(|r| (r.step, r.eval_reward)).collect();
        conv.push(convergence_step(&pts, CONVERGENCE_WINDOW, CONVERGENCE_BAND).expect("nonempty curve"));
    }
    let conv_f: Vec<f64> = conv.iter().map(|&c| c as f64).collect();
    Ok(GroupSummary {
        label: label.to_string(),
        algo,
        seeds: by_seed.keys().copied().collect(),
        final_reward: MeanStd::of(&rewards),
        final_feasibility: MeanStd::of(&feas),
        final_oracle_ratio: MeanStd::of(&ratio),
        convergence_step: MeanStd::of(&conv_f),
        per_seed_final: rewards,
        per_seed_convergence: conv,
    })
}

/// Splits every input by algorithm tag and summarizes each group. Labels
/// repeat the tag, suffixed `#2`, `#3`, ... when two inputs share one.
pub fn compare(inputs: &[Vec<CurveRow>]) -> Result<Comparison> {
    let mut groups = Vec::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for rows in inputs {
        let mut by_algo: BTreeMap<&str, Vec<CurveRow>> = BTreeMap::new();
        for r in rows {
            by_algo.entry(r.algo.as_str()).or_default().push(r.clone());
        }
        for (algo, rows) in by_algo {
            let k = seen.entry(algo.to_string()).or_insert(0);
            *k += 1;
            let label = if *k == 1 { algo.to_string() } else { format!("{algo}#{k}") };
            groups.push(summarize(&rows, &label)?);
        }
    }
    if groups.len() < 2 {
        return Err(HarnessError::Data(format!(
            "comparison needs two curve sets, found {}",
            groups.len()
        )));
    }
    let (a, b) = (&groups[0], &groups[1]);
    let gap = a.final_reward.mean - b.final_reward.mean;
    let relation = if gap > 0.0 {
        "exceeds"
    } else if gap < 0.0 {
        "is below"
    } else {
        "equals"
    };
    let verdict = format!(
        "verdict: {} final eval reward {:.3} ± {:.3} {} {} {:.3} ± {:.3} (gap {:.3}); convergence step {:.0} vs {:.0}",
        a.label,
        a.final_reward.mean,
        a.final_reward.std,
        relation,
        b.label,
        b.final_reward.mean,
        b.final_reward.std,
        gap,
        a.convergence_step.mean,
        b.convergence_step.mean,
    );
    Ok(Comparison { groups, verdict })
}

pub const COMPARE_HEADER: [&str; 12] = [
    "label",
    "algo",
    "seeds",
    "final_reward_mean",
    "final_reward_std",
    "final_feasibility_mean",
    "final_feasibility_std",
    "final_oracle_ratio_mean",
    "final_oracle_ratio_std",
    "convergence_step_mean",
    "convergence_step_std",
    "gap_to_first",
];

pub fn write_compare<W: Write>(out: W, c: &Comparison) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(COMPARE_HEADER)?;
    let first = c.groups[0].final_reward.mean;
    for g in &c.groups {
        let seeds: Vec<String> = g.seeds.iter().map(u64::to_string).collect();
        w.write_record([
            g.label.clone(),
            g.algo.clone(),
            seeds.join(" "),
            g.final_reward.mean.to_string(),
            g.final_reward.std.to_string(),
            g.final_feasibility.mean.to_string(),
            g.final_feasibility.std.to_string(),
            g.final_oracle_ratio.mean.to_string(),
            g.final_oracle_ratio.std.to_string(),
            g.convergence_step.mean.to_string(),
            g.convergence_step.std.to_string(),
            (g.final_reward.mean - first).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(algo: &str, seed: u64, values: &[f64]) -> Vec<CurveRow> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| CurveRow {
                step: (i as u64 + 1) * 100,
                seed,
                algo: algo.into(),
                train_reward: v,
                eval_reward: v,
                eval_feasibility: 1.0,
                eval_utility: v,
                eval_oracle_ratio: 0.5,
            })
            .collect()
    }

    #[test]
    fn convergence_of_a_step_curve() {
        let pts: Vec<(u64, f64)> = (1..=20).map(|i| (i * 10, if i < 8 { 0.0 } else { 100.0 })).collect();
        // The 5-wide average first lands in the band once its window holds only 100s.
        assert_eq!(convergence_step(&pts, 5, 0.05), Some(120));
        assert_eq!(convergence_step(&pts, 1, 0.05), Some(80));
        assert_eq!(convergence_step(&[(5, -3.0)], 5, 0.05), Some(5));
        assert_eq!(convergence_step(&[], 5, 0.05), None);
    }

    #[test]
    fn self_comparison_has_zero_gap() {
        let mut rows = curve("diffusion", 1, &[1.0, 5.0, 9.0, 10.0, 10.0, 10.0]);
        rows.extend(curve("diffusion", 2, &[2.0, 6.0, 9.5, 10.0, 10.5, 10.0]));
        let c = compare(&[rows.clone(), rows]).unwrap();
        assert_eq!(c.groups.len(), 2);
        assert_eq!(c.groups[1].label, "diffusion#2");
        assert_eq!(c.groups[0].final_reward, c.groups[1].final_reward);
        assert_eq!(c.groups[0].per_seed_convergence, c.groups[1].per_seed_convergence);
        assert!(c.verdict.contains("equals"), "{}", c.verdict);
        assert!(c.verdict.contains("gap 0.000"));
        let mut buf = Vec::new();
        write_compare(&mut buf, &c).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(2).unwrap().ends_with(",0"));
    }

    #[test]
    fn single_seed_is_rejected() {
        let a = curve("diffusion", 1, &[1.0, 2.0]);
        let mut b = curve("ppo", 1, &[0.0, 0.0]);
        b.extend(curve("ppo", 2, &[0.0, 0.0]));
        let err = compare(&[a, b]).unwrap_err();
        assert!(err.to_string().contains("at least 2"), "{err}");
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn final_window_and_std() {
        let mut rows = curve("ppo", 1, &[100.0, 0.0, 1.0, 2.0, 3.0, 4.0]);
        rows.extend(curve("ppo", 2, &[0.0, 4.0, 5.0, 6.0, 7.0, 8.0]));
        let g = summarize(&rows, "ppo").unwrap();
        assert_eq!(g.per_seed_final, vec![2.0, 6.0]);
        assert_eq!(g.final_reward.mean, 4.0);
        assert!((g.final_reward.std - 8f64.sqrt()).abs() < 1e-12);
    }
}
