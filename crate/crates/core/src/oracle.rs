//! Ground-truth menus for small markets.
//!
//! For fixed latencies every IR and IC constraint is linear in the rewards
//! and has the difference form `R_q - R_k >= w_qk` (plus floors
//! `R_q >= c(theta_q, L_q)`). The least reward vector satisfying them is a
//! longest-path fixed point, found by Bellman-Ford style relaxation from the
//! IR floors; a relaxation that is still moving after `Q` sweeps has found
//! a positive cycle, i.e. no reward vector makes those latencies
//! incentive-compatible. The latency vector is then grid-searched and
//! locally refined.

use thiserror::Error;

use crate::market::{
    client_utility, constraint_report, cost, revenue, ContractMenu, EconParams, MarketError,
    MarketState, FEASIBILITY_TOL,
};

/// Slack magnitude under which a constraint counts as binding.
pub const BINDING_TOL: f64 = 1e-6;

const MAX_CROSS_CHECK_CELLS: u128 = 1_000_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error("invalid oracle config: {0}")]
    Config(String),
    #[error("cross-check grid has {cells} cells, limit is {limit}")]
    GridTooLarge { cells: u128, limit: u128 },
    #[error("cross-check supports at most 2 types, got {0}")]
    TooManyTypes(usize),
}

pub type Result<T> = std::result::Result<T, OracleError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleConfig {
    /// Latency grid points per type.
    pub l_grid_points: usize,
    pub refine_rounds: usize,
    /// Reward grid points per type, cross-check only.
    pub coarse_r_points: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { l_grid_points: 64, refine_rounds: 4, coarse_r_points: 64 }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l_grid_points < 2 {
            return Err(OracleError::Config("l_grid_points must be at least 2".into()));
        }
        if self.coarse_r_points < 2 {
            return Err(OracleError::Config("coarse_r_points must be at least 2".into()));
        }
        Ok(())
    }
}

/// A constraint that holds with equality for some type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binding {
    Ir,
    Ic { against: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub menu: ContractMenu,
    pub u_c: f64,
    /// Per type, the constraints binding within [`BINDING_TOL`].
    pub binding: Vec<Vec<Binding>>,
    pub feasible: bool,
}

/// Brute-force result plus the largest utility change between adjacent cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossCheck {
    pub solution: OracleSolution,
    pub cell_variation: f64,
}

/// Least rewards making `latencies` IR and IC, or `None` when no reward
/// vector within `[0, R_max]` does.
pub fn optimal_rewards_given_latencies(
    state: &MarketState,
    latencies: &[f64],
    params: &EconParams,
) -> Result<Option<Vec<f64>>> {
    let q = state.types();
    if latencies.len() != q {
        return Err(MarketError::LengthMismatch { expected: q, got: latencies.len() }.into());
    }
    let theta = state.complexities();
    let mut c = vec![vec![0.0; q]; q];
    for (i, row) in c.iter_mut().enumerate() {
        for (k, v) in row.iter_mut().enumerate() {
            *v = cost(theta[i], latencies[k], state, params)?;
        }
    }
    Ok(least_rewards(&c, params.r_max))
}

// `c[q][k]` is the cost for type q of meeting contract k's latency.
fn least_rewards(c: &[Vec<f64>], r_max: f64) -> Option<Vec<f64>> {
    let q = c.len();
    let mut r: Vec<f64> = (0..q).map(|i| c[i][i]).collect();
    let mut settled = false;
    for _ in 0..=q {
        let mut changed = false;
        for i in 0..q {
            for k in 0..q {
                if k == i {
                    continue;
                }
                let need = r[k] - c[i][k] + c[i][i];
                if need > r[i] {
                    r[i] = need;
                    changed = true;
                }
            }
        }
        if !changed {
            settled = true;
            break;
        }
    }
    if !settled || r.iter().any(|&x| x > r_max) {
        return None;
    }
    Some(r)
}

/// Grid search over latency vectors with exact rewards, followed by
/// `refine_rounds` of local grids whose half-width halves every round.
pub fn solve_optimal_menu(
    state: &MarketState,
    params: &EconParams,
    cfg: &OracleConfig,
) -> Result<OracleSolution> {
    cfg.validate()?;
    params.validate()?;
    let q = state.types();
    let lo = state.l_min(params);
    let hi = state.l_max();
    let g = cfg.l_grid_points;

    let full: Vec<f64> = linspace(lo, hi, g);
    let axes = vec![full; q];
    let mut best = search_grid(state, params, &axes)?
        .expect("all-L_max menu is always feasible");

    let mut half_width = (hi - lo) / (g - 1) as f64;
    for _ in 0..cfg.refine_rounds {
        let axes: Vec<Vec<f64>> = best
            .0
            .iter()
            .map(|&l| linspace((l - half_width).max(lo), (l + half_width).min(hi), g))
            .collect();
        if let Some(candidate) = search_grid(state, params, &axes)? {
            if candidate.2 > best.2 {
                best = candidate;
            }
        }
        half_width *= 0.5;
    }

    let menu = ContractMenu::from_parts(&best.0, &best.1);
    finish(state, params, menu, true)
}

type GridPoint = (Vec<f64>, Vec<f64>, f64);

// Lexicographic scan; strict improvement keeps the smallest latency vector on ties.
fn search_grid(
    state: &MarketState,
    params: &EconParams,
    axes: &[Vec<f64>],
) -> Result<Option<GridPoint>> {
    let q = state.types();
    let theta = state.complexities();
    let n = state.n() as f64;
    let p = state.proportions();

    // cost[i][k][j]: cost for type i of latency axes[k][j]
    let mut cost_tab = vec![vec![Vec::new(); q]; q];
    for i in 0..q {
        for k in 0..q {
            cost_tab[i][k] = axes[k]
                .iter()
                .map(|&l| cost(theta[i], l, state, params))
                .collect::<std::result::Result<Vec<_>, _>>()?;
        }
    }
    let mut rev_tab = Vec::with_capacity(q);
    for i in 0..q {
        rev_tab.push(
            axes[i]
                .iter()
                .map(|&l| revenue(theta[i], l, state, params))
                .collect::<std::result::Result<Vec<_>, _>>()?,
        );
    }

    let mut idx = vec![0usize; q];
    let mut c = vec![vec![0.0; q]; q];
    let mut best: Option<GridPoint> = None;
    loop {
        for i in 0..q {
            for k in 0..q {
                c[i][k] = cost_tab[i][k][idx[k]];
            }
        }
        if let Some(r) = least_rewards(&c, params.r_max) {
            let u: f64 = (0..q).map(|i| n * p[i] * (rev_tab[i][idx[i]] - r[i])).sum();
            if best.as_ref().is_none_or(|b| u > b.2) {
                let l = (0..q).map(|i| axes[i][idx[i]]).collect();
                best = Some((l, r, u));
            }
        }
        if !advance(&mut idx, |i| axes[i].len()) {
            break;
        }
    }
    Ok(best)
}

// Mixed-radix increment, last digit fastest.
fn advance(idx: &mut [usize], radix: impl Fn(usize) -> usize) -> bool {
    for d in (0..idx.len()).rev() {
        idx[d] += 1;
        if idx[d] < radix(d) {
            return true;
        }
        idx[d] = 0;
    }
    false
}

fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 || hi <= lo {
        return vec![lo];
    }
    let step = (hi - lo) / (points - 1) as f64;
    (0..points)
        .map(|i| if i + 1 == points { hi } else { lo + step * i as f64 })
        .collect()
}

fn finish(
    state: &MarketState,
    params: &EconParams,
    menu: ContractMenu,
    feasible_hint: bool,
) -> Result<OracleSolution> {
    let report = constraint_report(state, &menu, params)?;
    let binding = (0..state.types())
        .map(|i| {
            let mut b = Vec::new();
            if report.ir_slack[i].abs() <= BINDING_TOL {
                b.push(Binding::Ir);
            }
            for (k, &s) in report.ic_slack[i].iter().enumerate() {
                if k != i && s.abs() <= BINDING_TOL {
                    b.push(Binding::Ic { against: k });
                }
            }
            b
        })
        .collect();
    let u_c = client_utility(state, &menu, params)?;
    Ok(OracleSolution { menu, u_c, binding, feasible: feasible_hint && report.feasible })
}

/// Exhaustive search over latency and reward grids with rewards in `[0, R_max]`.
pub fn brute_force_cross_check(
    state: &MarketState,
    params: &EconParams,
    cfg: &OracleConfig,
) -> Result<CrossCheck> {
    brute_force_in_box(state, params, cfg, (0.0, params.r_max))
}

/// [`brute_force_cross_check`] over an explicit reward box. When no cell is
/// feasible the cell with the least total violation is returned, flagged
/// infeasible.
pub fn brute_force_in_box(
    state: &MarketState,
    params: &EconParams,
    cfg: &OracleConfig,
    reward_box: (f64, f64),
) -> Result<CrossCheck> {
    cfg.validate()?;
    let q = state.types();
    if q > 2 {
        return Err(OracleError::TooManyTypes(q));
    }
    let gl = cfg.l_grid_points as u128;
    let gr = cfg.coarse_r_points as u128;
    let cells = (gl * gr).pow(q as u32);
    if cells > MAX_CROSS_CHECK_CELLS {
        return Err(OracleError::GridTooLarge { cells, limit: MAX_CROSS_CHECK_CELLS });
    }

    let theta = state.complexities();
    let p = state.proportions();
    let n = state.n() as f64;
    let l_axis = linspace(state.l_min(params), state.l_max(), cfg.l_grid_points);
    let r_axis = linspace(reward_box.0, reward_box.1, cfg.coarse_r_points);
    let mut cost_tab = vec![Vec::new(); q];
    let mut rev_tab = vec![Vec::new(); q];
    for i in 0..q {
        for &l in &l_axis {
            cost_tab[i].push(cost(theta[i], l, state, params)?);
            rev_tab[i].push(revenue(theta[i], l, state, params)?);
        }
    }

    let mut best_feasible: Option<(f64, Vec<usize>, Vec<usize>)> = None;
    let mut least_violation: Option<(f64, Vec<usize>, Vec<usize>)> = None;
    let mut li = vec![0usize; q];
    loop {
        let mut ri = vec![0usize; q];
        loop {
            let own: Vec<f64> = (0..q).map(|i| r_axis[ri[i]] - cost_tab[i][li[i]]).collect();
            let mut violation = 0.0;
            for i in 0..q {
                violation += (-own[i]).max(0.0);
                for k in 0..q {
                    if k != i {
                        let other = r_axis[ri[k]] - cost_tab[i][li[k]];
                        violation += (other - own[i]).max(0.0);
                    }
                }
            }
            let feasible = (0..q).all(|i| {
                own[i] >= -FEASIBILITY_TOL
                    && (0..q).all(|k| {
                        k == i || own[i] - (r_axis[ri[k]] - cost_tab[i][li[k]]) >= -FEASIBILITY_TOL
                    })
            });
            if feasible {
                let u: f64 = (0..q).map(|i| n * p[i] * (rev_tab[i][li[i]] - r_axis[ri[i]])).sum();
                if best_feasible.as_ref().is_none_or(|b| u > b.0) {
                    best_feasible = Some((u, li.clone(), ri.clone()));
                }
            } else if best_feasible.is_none()
                && least_violation.as_ref().is_none_or(|b| violation < b.0)
            {
                least_violation = Some((violation, li.clone(), ri.clone()));
            }
            if !advance(&mut ri, |_| r_axis.len()) {
                break;
            }
        }
        if !advance(&mut li, |_| l_axis.len()) {
            break;
        }
    }

    let (feasible, (_, li, ri)) = match best_feasible {
        Some(b) => (true, b),
        None => (false, least_violation.expect("grid is nonempty")),
    };
    let latencies: Vec<f64> = li.iter().map(|&j| l_axis[j]).collect();
    let rewards: Vec<f64> = ri.iter().map(|&j| r_axis[j]).collect();
    let solution = finish(state, params, ContractMenu::from_parts(&latencies, &rewards), feasible)?;

    let dr = (reward_box.1 - reward_box.0) / (cfg.coarse_r_points - 1) as f64;
    let cell_variation = (0..q)
        .map(|i| {
            let df = rev_tab[i].windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
            n * p[i] * (dr + df)
        })
        .sum();
    Ok(CrossCheck { solution, cell_variation })
}

/// `true` when latencies are non-increasing and rewards non-decreasing in
/// the type index.
pub fn is_screening_monotone(menu: &ContractMenu) -> bool {
    menu.contracts
        .windows(2)
        .all(|w| w[1].latency <= w[0].latency && w[1].reward >= w[0].reward)
}
