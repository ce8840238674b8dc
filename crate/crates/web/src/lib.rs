//! Browser bindings: check a hand-written menu, solve a state exactly, and
//! train a small diffusion policy to watch its denoising chain.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use aigc_contract::diffusion::{self, chain_path, DiffusionConfig, DiffusionPolicy};
use aigc_contract::eval::{score_menu, EvalSet};
use aigc_contract::market::{
    action_to_menu, client_utility, constraint_report, encode_state, ContractMenu, EconParams, MarketState,
    SamplerConfig, FEASIBILITY_TOL,
};
use aigc_contract::oracle::{solve_optimal_menu, Binding, OracleConfig};

fn paper() -> (SamplerConfig, EconParams) {
    let sampler = SamplerConfig::paper();
    let params = EconParams::paper(sampler.theta_top());
    (sampler, params)
}

fn two_type_state(l_max: f64, p_low: f64, theta_low: f64, theta_high: f64) -> Result<MarketState, JsError> {
    let (sampler, _) = paper();
    MarketState::new(sampler.n, l_max, vec![p_low, 1.0 - p_low], vec![theta_low, theta_high])
        .map_err(|e| JsError::new(&e.to_string()))
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("plain data serializes")
}

#[derive(Serialize)]
struct MenuReport {
    latency: Vec<f64>,
    reward: Vec<f64>,
    ir_slack: Vec<f64>,
    ic_slack: Vec<Vec<f64>>,
    feasible: bool,
    client_utility: f64,
    score: f64,
}

fn report(state: &MarketState, menu: &ContractMenu, params: &EconParams) -> Result<MenuReport, JsError> {
    let err = |e: aigc_contract::market::MarketError| JsError::new(&e.to_string());
    let r = constraint_report(state, menu, params).map_err(err)?;
    let s = score_menu(state, menu, params, FEASIBILITY_TOL).map_err(err)?;
    Ok(MenuReport {
        latency: menu.latencies(),
        reward: menu.rewards(),
        ir_slack: r.ir_slack,
        ic_slack: r.ic_slack,
        feasible: r.feasible,
        client_utility: client_utility(state, menu, params).map_err(err)?,
        score: s.reward,
    })
}

/// Slacks, feasibility and client utility of a two-type menu, as JSON.
#[wasm_bindgen]
pub fn check_menu(
    l_max: f64,
    p_low: f64,
    theta_low: f64,
    theta_high: f64,
    latency: Vec<f64>,
    reward: Vec<f64>,
) -> Result<String, JsError> {
    if latency.len() != 2 || reward.len() != 2 {
        return Err(JsError::new("a two-type menu needs two latencies and two rewards"));
    }
    let state = two_type_state(l_max, p_low, theta_low, theta_high)?;
    let (_, params) = paper();
    Ok(json(&report(&state, &ContractMenu::from_parts(&latency, &reward), &params)?))
}

#[derive(Serialize)]
struct OracleReport {
    #[serde(flatten)]
    menu: MenuReport,
    binding: Vec<Vec<String>>,
}

/// Exact optimal menu for a two-type state, with its binding constraints.
#[wasm_bindgen]
pub fn solve_oracle(l_max: f64, p_low: f64, theta_low: f64, theta_high: f64) -> Result<String, JsError> {
    let state = two_type_state(l_max, p_low, theta_low, theta_high)?;
    let (_, params) = paper();
    let sol = solve_optimal_menu(&state, &params, &OracleConfig::default()).map_err(|e| JsError::new(&e.to_string()))?;
    let binding = sol
        .binding
        .iter()
        .map(|b| {
            b.iter()
                .map(|c| match c {
                    Binding::Ir => "IR".to_string(),
                    Binding::Ic { against } => format!("IC vs type {}", against + 1),
                })
                .collect()
        })
        .collect();
    Ok(json(&OracleReport { menu: report(&state, &sol.menu, &params)?, binding }))
}

#[derive(Serialize)]
struct CurvePoint {
    step: u64,
    reward: f64,
    feasibility: f64,
    oracle_ratio: f64,
}

#[derive(Serialize)]
struct ChainStep {
    t: usize,
    latency: Vec<f64>,
    reward: Vec<f64>,
    feasible: bool,
    client_utility: f64,
}

/// A small diffusion policy trained in the page.
#[wasm_bindgen]
pub struct Demo {
    policy: Option<DiffusionPolicy>,
    seed: u64,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64) -> Demo {
        Demo { policy: None, seed }
    }

    /// Trains from scratch for `steps` interactions; returns the eval curve as JSON.
    pub fn train(&mut self, steps: usize) -> Result<String, JsError> {
        let (sampler, params) = paper();
        let cfg = DiffusionConfig {
            steps,
            batch_size: 32,
            warmup: 64,
            hidden: vec![32, 32],
            critic_hidden: vec![32, 32],
            eval_every: (steps / 10).max(1),
            ..DiffusionConfig::default()
        };
        let eval = EvalSet::new(&sampler, &params, 32, 7, &OracleConfig::default())
            .map_err(|e| JsError::new(&e.to_string()))?;
        let out = diffusion::train(&sampler, &params, &cfg, &eval, self.seed, |_| {})
            .map_err(|e| JsError::new(&e.to_string()))?;
        let curve: Vec<CurvePoint> = out
            .curves
            .iter()
            .map(|r| CurvePoint {
                step: r.step,
                reward: r.eval_reward,
                feasibility: r.eval_feasibility,
                oracle_ratio: r.eval_oracle_ratio,
            })
            .collect();
        self.policy = Some(out.policy);
        Ok(json(&curve))
    }

    pub fn trained(&self) -> bool {
        self.policy.is_some()
    }

    /// Menus decoded from every chain iterate `c_T .. c_0` (clipped to the
    /// action box) for one state, as JSON.
    pub fn trajectory(
        &self,
        l_max: f64,
        p_low: f64,
        theta_low: f64,
        theta_high: f64,
        noise_seed: u64,
    ) -> Result<String, JsError> {
        let policy = self.policy.as_ref().ok_or_else(|| JsError::new("train the policy first"))?;
        let state = two_type_state(l_max, p_low, theta_low, theta_high)?;
        let enc = encode_state(&state, &policy.sampler);
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let path = chain_path(&enc, &policy.denoiser, &policy.schedule, &mut rng, false)
            .map_err(|e| JsError::new(&e.to_string()))?;
        let steps = path.len() - 1;
        let out = path
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let a: Vec<f64> = x.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
                let menu = action_to_menu(&a, &state, &policy.params);
                let r = report(&state, &menu, &policy.params)?;
                Ok(ChainStep {
                    t: steps - i,
                    latency: r.latency,
                    reward: r.reward,
                    feasible: r.feasible,
                    client_utility: r.client_utility,
                })
            })
            .collect::<Result<Vec<_>, JsError>>()?;
        Ok(json(&out))
    }
}
