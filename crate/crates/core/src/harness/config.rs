//! Experiment configuration: a TOML file with dotted section keys.
//!
//! ```toml
//! seeds = [1, 2, 3]
//! steps = 50000
//! market.n = 50
//! market.theta_ranges = [[10, 50], [50, 100]]
//! diffusion.hidden = [64, 64]
//! ```
//!
//! Every key is optional and unknown keys are rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::diffusion::{DiffusionConfig, DiffusionError};
use crate::market::{EconParams, MarketError, SamplerConfig};
use crate::oracle::OracleConfig;
use crate::ppo::{PpoConfig, PpoError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}{}: `{field}` {reason}", line.map(|l| format!(":{l}")).unwrap_or_default())]
    Invalid { path: String, line: Option<usize>, field: String, reason: String },
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub market: Option<RawMarket>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub econ: Option<RawEcon>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval: Option<RawEval>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contracts: Option<RawContracts>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<RawOracle>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diffusion: Option<RawDiffusion>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ppo: Option<RawPpo>,
}

macro_rules! raw_section {
    ($name:ident { $($field:ident : $ty:ty),* $(,)? }) => {
        #[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct $name {
            $(
                #[serde(skip_serializing_if = "Option::is_none")]
                pub $field: Option<$ty>,
            )*
        }
    };
}

raw_section!(RawMarket {
    n: u32,
    theta_ranges: Vec<[f64; 2]>,
    l_max_range: [f64; 2],
    n_ref: f64,
    q_ref: f64,
});

raw_section!(RawEcon {
    e1: f64,
    e2: f64,
    z1: f64,
    z2: f64,
    f: f64,
    r_max: f64,
    l_min_frac: f64,
    violation_scale: f64,
});

raw_section!(RawEval { every: usize, states: usize, seed: u64 });

raw_section!(RawContracts { states: usize, seed: u64 });

raw_section!(RawOracle { l_grid_points: usize, refine_rounds: usize, coarse_r_points: usize });

raw_section!(RawDiffusion {
    batch_size: usize,
    buffer_capacity: usize,
    gamma: f64,
    tau: f64,
    lr_actor: f64,
    lr_critic: f64,
    denoise_steps: usize,
    beta_start: f64,
    beta_end: f64,
    hidden: Vec<usize>,
    critic_hidden: Vec<usize>,
    reward_scale: f64,
    exploration_noise: f64,
    warmup: usize,
    max_grad_norm: f64,
});

raw_section!(RawPpo {
    rollout_len: usize,
    epochs: usize,
    minibatch: usize,
    clip_eps: f64,
    gamma: f64,
    gae_lambda: f64,
    lr: f64,
    entropy_coef: f64,
    value_coef: f64,
    hidden: Vec<usize>,
    init_log_std: f64,
    reward_scale: f64,
    max_grad_norm: f64,
});

/// Fully resolved experiment settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub steps: usize,
    pub out: Option<PathBuf>,
    pub sampler: SamplerConfig,
    pub params: EconParams,
    pub eval_every: usize,
    pub eval_states: usize,
    pub eval_seed: u64,
    pub contract_states: usize,
    pub contract_seed: u64,
    pub oracle: OracleConfig,
    pub diffusion: DiffusionConfig,
    pub ppo: PpoConfig,
    /// The effective configuration as TOML, overrides included.
    pub canonical: String,
}

pub const DEFAULT_EVAL_SEED: u64 = 20_240_917;
pub const DEFAULT_CONTRACT_SEED: u64 = 5;

impl ExperimentConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text, &path.display().to_string(), &Overrides::default())
    }

    pub fn load_with(path: &std::path::Path, overrides: &Overrides) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text, &path.display().to_string(), overrides)
    }

    /// Parses and validates `text`; `path` only labels error messages.
    pub fn parse(text: &str, path: &str, overrides: &Overrides) -> Result<Self, ConfigError> {
        let mut raw: RawConfig = toml::from_str(text)
            .map_err(|e| ConfigError::Parse { path: path.into(), message: e.to_string().trim_end().into() })?;
        if let Some(s) = &overrides.seeds {
            raw.seeds = Some(s.clone());
        }
        if let Some(s) = overrides.steps {
            raw.steps = Some(s);
        }
        resolve(raw).map_err(|(field, reason)| ConfigError::Invalid {
            path: path.into(),
            line: locate_key(text, &field),
            field,
            reason,
        })
    }

    /// Hex SHA-256 of the canonical configuration.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Command-line values that replace config keys.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seeds: Option<Vec<u64>>,
    pub steps: Option<usize>,
}

type Invalid = (String, String);

fn resolve(raw: RawConfig) -> Result<ExperimentConfig, Invalid> {
    let canonical = toml::to_string(&raw).map_err(|e| ("config".to_string(), e.to_string()))?;
    let bad = |field: &str, reason: &str| Err((field.to_string(), reason.to_string()));

    let seeds = raw.seeds.clone().unwrap_or_else(|| vec![1]);
    if seeds.is_empty() {
        return bad("seeds", "must list at least one seed");
    }
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        return bad("seeds", "must not repeat a seed");
    }
    let steps = raw.steps.unwrap_or(50_000);
    if steps == 0 {
        return bad("steps", "must be positive");
    }

    let m = raw.market.clone().unwrap_or_default();
    let paper = SamplerConfig::paper();
    let theta_ranges: Vec<(f64, f64)> = m
        .theta_ranges
        .map(|r| r.iter().map(|p| (p[0], p[1])).collect())
        .unwrap_or(paper.theta_ranges);
    let l = m.l_max_range.map(|r| (r[0], r[1])).unwrap_or(paper.l_max_range);
    let mut sampler = SamplerConfig::new(m.n.unwrap_or(paper.n), theta_ranges, l);
    if let Some(v) = m.n_ref {
        sampler.n_ref = v;
    }
    if let Some(v) = m.q_ref {
        sampler.q_ref = v;
    }
    sampler.validate().map_err(|e| market_invalid("market", e))?;

    let e = raw.econ.clone().unwrap_or_default();
    let mut params = EconParams::paper(sampler.theta_top());
    params.e1 = e.e1.unwrap_or(params.e1);
    params.e2 = e.e2.unwrap_or(params.e2);
    params.z1 = e.z1.unwrap_or(params.z1);
    params.z2 = e.z2.unwrap_or(params.z2);
    params.f = e.f.unwrap_or(params.f);
    params.r_max = e.r_max.unwrap_or(params.e1 * sampler.theta_top().powf(params.z1));
    params.l_min_frac = e.l_min_frac.unwrap_or(params.l_min_frac);
    params.violation_scale = e.violation_scale.unwrap_or(params.violation_scale);
    params.validate().map_err(|e| market_invalid("econ", e))?;

    let ev = raw.eval.clone().unwrap_or_default();
    let eval_every = ev.every.unwrap_or(1000);
    let eval_states = ev.states.unwrap_or(200);
    if eval_every == 0 {
        return bad("eval.every", "must be positive");
    }
    if eval_states == 0 {
        return bad("eval.states", "must be positive");
    }
    let c = raw.contracts.clone().unwrap_or_default();
    let contract_states = c.states.unwrap_or(10);

    let o = raw.oracle.clone().unwrap_or_default();
    let d = OracleConfig::default();
    let oracle = OracleConfig {
        l_grid_points: o.l_grid_points.unwrap_or(d.l_grid_points),
        refine_rounds: o.refine_rounds.unwrap_or(d.refine_rounds),
        coarse_r_points: o.coarse_r_points.unwrap_or(d.coarse_r_points),
    };
    oracle.validate().map_err(|e| ("oracle".to_string(), e.to_string()))?;

    let r = raw.diffusion.clone().unwrap_or_default();
    let d = DiffusionConfig::default();
    let diffusion = DiffusionConfig {
        steps,
        batch_size: r.batch_size.unwrap_or(d.batch_size),
        buffer_capacity: r.buffer_capacity.unwrap_or(d.buffer_capacity),
        gamma: r.gamma.unwrap_or(d.gamma),
        tau: r.tau.unwrap_or(d.tau),
        lr_actor: r.lr_actor.unwrap_or(d.lr_actor),
        lr_critic: r.lr_critic.unwrap_or(d.lr_critic),
        diffusion_steps: r.denoise_steps.unwrap_or(d.diffusion_steps),
        beta_start: r.beta_start.unwrap_or(d.beta_start),
        beta_end: r.beta_end.unwrap_or(d.beta_end),
        hidden: r.hidden.unwrap_or(d.hidden),
        critic_hidden: r.critic_hidden.unwrap_or(d.critic_hidden),
        reward_scale: r.reward_scale.unwrap_or(d.reward_scale),
        exploration_noise: r.exploration_noise.unwrap_or(d.exploration_noise),
        warmup: r.warmup.unwrap_or(d.warmup),
        eval_every,
        max_grad_norm: r.max_grad_norm.or(d.max_grad_norm),
    };
    diffusion.validate().map_err(diffusion_invalid)?;

    let r = raw.ppo.clone().unwrap_or_default();
    let d = PpoConfig::default();
    let ppo = PpoConfig {
        steps,
        rollout_len: r.rollout_len.unwrap_or(d.rollout_len),
        epochs: r.epochs.unwrap_or(d.epochs),
        minibatch: r.minibatch.unwrap_or(d.minibatch),
        clip_eps: r.clip_eps.unwrap_or(d.clip_eps),
        gamma: r.gamma.unwrap_or(d.gamma),
        gae_lambda: r.gae_lambda.unwrap_or(d.gae_lambda),
        lr: r.lr.unwrap_or(d.lr),
        entropy_coef: r.entropy_coef.unwrap_or(d.entropy_coef),
        value_coef: r.value_coef.unwrap_or(d.value_coef),
        hidden: r.hidden.unwrap_or(d.hidden),
        init_log_std: r.init_log_std.unwrap_or(d.init_log_std),
        reward_scale: r.reward_scale.unwrap_or(d.reward_scale),
        max_grad_norm: r.max_grad_norm.or(d.max_grad_norm),
        eval_every,
    };
    ppo.validate().map_err(ppo_invalid)?;

    Ok(ExperimentConfig {
        seeds,
        steps,
        out: raw.out.map(PathBuf::from),
        sampler,
        params,
        eval_every,
        eval_states,
        eval_seed: ev.seed.unwrap_or(DEFAULT_EVAL_SEED),
        contract_states,
        contract_seed: c.seed.unwrap_or(DEFAULT_CONTRACT_SEED),
        oracle,
        diffusion,
        ppo,
        canonical,
    })
}

fn market_invalid(section: &str, e: MarketError) -> Invalid {
    match e {
        MarketError::Config { field, reason } => (format!("{section}.{field}"), reason),
        MarketError::InvalidParams(msg) => {
            let field = msg.split_whitespace().next().unwrap_or("").to_string();
            (format!("{section}.{field}"), msg)
        }
        other => (section.to_string(), other.to_string()),
    }
}

fn top_level(field: &str) -> bool {
    matches!(field, "steps" | "eval_every")
}

fn section_field(section: &str, field: &str) -> String {
    match field {
        "eval_every" => "eval.every".into(),
        "diffusion_steps" => format!("{section}.denoise_steps"),
        f if top_level(f) => f.into(),
        f => format!("{section}.{f}"),
    }
}

fn diffusion_invalid(e: DiffusionError) -> Invalid {
    match e {
        DiffusionError::Config { field, reason } => (section_field("diffusion", field), reason),
        DiffusionError::Schedule(reason) => ("diffusion.beta_start".into(), reason),
        other => ("diffusion".into(), other.to_string()),
    }
}

fn ppo_invalid(e: PpoError) -> Invalid {
    match e {
        PpoError::Config { field, reason } => (section_field("ppo", field), reason),
        other => ("ppo".into(), other.to_string()),
    }
}

/// 1-based line on which `dotted` (e.g. `market.theta_ranges`) is set,
/// written either as a dotted key or inside a `[section]` table.
pub fn locate_key(text: &str, dotted: &str) -> Option<usize> {
    let mut table = String::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if let Some(h) = line.strip_prefix('[').and_then(|h| h.strip_suffix(']')) {
            table = h.trim().to_string();
            continue;
        }
        let Some((key, _)) = line.split_once('=') else { continue };
        let key: String = key.split('.').map(str::trim).collect::<Vec<_>>().join(".");
        let full = if table.is_empty() { key } else { format!("{table}.{key}") };
        if full == dotted {
            return Some(i + 1);
        }
    }
    // Fall back to the section as a whole.
    let (section, _) = dotted.rsplit_once('.')?;
    locate_key(text, section).or_else(|| {
        text.lines()
            .position(|l| l.trim().starts_with(&format!("{section}.")) || l.trim() == format!("[{section}]"))
            .map(|i| i + 1)
    })
}
