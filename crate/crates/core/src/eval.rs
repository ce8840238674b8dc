//! Evaluation protocol shared by every policy: a fixed set of held-out
//! states with precomputed oracle optima, scored identically for all
//! algorithms.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::market::{
    client_utility, constraint_report, sample_state, ContractMenu, EconParams, MarketError,
    MarketState, SamplerConfig,
};
use crate::oracle::{solve_optimal_menu, OracleConfig, OracleError, OracleSolution};

/// Anything that maps a market state to a contract menu.
pub trait ContractPolicy {
    /// Evaluation-mode menu for `state`. Stochastic policies draw any
    /// remaining randomness from `rng`.
    fn propose(&self, state: &MarketState, rng: &mut dyn RngCore) -> ContractMenu;

    /// Slack tolerance used when scoring this policy's menus.
    fn scoring_tolerance(&self) -> f64 {
        0.0
    }
}

/// Uses the oracle optimum as the policy.
#[derive(Debug, Clone)]
pub struct OraclePolicy {
    pub params: EconParams,
    pub config: OracleConfig,
}

impl ContractPolicy for OraclePolicy {
    fn propose(&self, state: &MarketState, _rng: &mut dyn RngCore) -> ContractMenu {
        solve_optimal_menu(state, &self.params, &self.config)
            .expect("oracle config validated at construction")
            .menu
    }

    fn scoring_tolerance(&self) -> f64 {
        crate::market::FEASIBILITY_TOL
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MenuScore {
    /// Client utility if feasible at the tolerance, else the negated weighted violation.
    pub reward: f64,
    pub feasible: bool,
    pub utility: f64,
}

pub fn score_menu(
    state: &MarketState,
    menu: &ContractMenu,
    params: &EconParams,
    tol: f64,
) -> Result<MenuScore, MarketError> {
    let report = constraint_report(state, menu, params)?;
    let utility = client_utility(state, menu, params)?;
    let feasible = report.is_feasible(tol);
    let reward = if feasible { utility } else { -params.violation_scale * report.total_violation() };
    Ok(MenuScore { reward, feasible, utility })
}

/// Held-out states with their oracle optima.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub seed: u64,
    pub states: Vec<MarketState>,
    pub optimal: Vec<OracleSolution>,
}

impl EvalSet {
    pub fn new(
        sampler: &SamplerConfig,
        params: &EconParams,
        count: usize,
        seed: u64,
        oracle: &OracleConfig,
    ) -> Result<Self, OracleError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let states = (0..count)
            .map(|_| sample_state(&mut rng, sampler))
            .collect::<Result<Vec<_>, _>>()?;
        let optimal = states
            .iter()
            .map(|s| solve_optimal_menu(s, params, oracle))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { seed, states, optimal })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalStats {
    pub mean_reward: f64,
    pub feasibility_rate: f64,
    /// Fraction of states where the menu is feasible and the client utility positive.
    pub positive_rate: f64,
    pub mean_utility: f64,
    pub mean_oracle_ratio: f64,
    pub menus: Vec<ContractMenu>,
    pub scores: Vec<MenuScore>,
}

/// Achieved utility over optimal utility; infeasible menus achieve nothing.
pub fn oracle_ratio(score: &MenuScore, optimal: &OracleSolution) -> f64 {
    let achieved = if score.feasible { score.utility } else { 0.0 };
    if optimal.u_c > 0.0 {
        achieved / optimal.u_c
    } else if achieved >= optimal.u_c {
        1.0
    } else {
        0.0
    }
}

/// Scores `policy` on every state of `set`. Policy randomness is drawn from
/// a stream fixed by the set's seed, so repeated evaluations of the same
/// policy agree exactly.
pub fn evaluate_policy<P: ContractPolicy + ?Sized>(
    policy: &P,
    set: &EvalSet,
    params: &EconParams,
) -> Result<EvalStats, MarketError> {
    let mut rng = ChaCha8Rng::seed_from_u64(set.seed);
    rng.set_stream(1);
    let tol = policy.scoring_tolerance();
    let mut menus = Vec::with_capacity(set.len());
    let mut scores = Vec::with_capacity(set.len());
    let (mut reward, mut feasible, mut positive, mut utility, mut ratio) = (0.0, 0, 0, 0.0, 0.0);
    for (state, opt) in set.states.iter().zip(&set.optimal) {
        let menu = policy.propose(state, &mut rng);
        let score = score_menu(state, &menu, params, tol)?;
        reward += score.reward;
        utility += score.utility;
        ratio += oracle_ratio(&score, opt);
        if score.feasible {
            feasible += 1;
            if score.utility > 0.0 {
                positive += 1;
            }
        }
        menus.push(menu);
        scores.push(score);
    }
    let n = set.len().max(1) as f64;
    Ok(EvalStats {
        mean_reward: reward / n,
        feasibility_rate: feasible as f64 / n,
        positive_rate: positive as f64 / n,
        mean_utility: utility / n,
        mean_oracle_ratio: ratio / n,
        menus,
        scores,
    })
}
