//! Experiment orchestration: training runs, evaluation, comparison and plots.

pub mod compare;
pub mod config;
pub mod plot;

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use compare::{compare, convergence_step, Comparison, GroupSummary};
pub use config::{ConfigError, ExperimentConfig, Overrides};
pub use plot::emit_plots;

use crate::curves::{self, ContractRow, CurveRow};
use crate::diffusion::{self, DiffusionPolicy};
use crate::eval::{evaluate_policy, ContractPolicy, EvalSet, EvalStats, OraclePolicy};
use crate::market::{asp_utility, revenue, sample_state, ContractMenu, EconParams, MarketState, SamplerConfig};
use crate::nn::checkpoint::{Checkpoint, CheckpointError};
use crate::oracle::{solve_optimal_menu, OracleConfig, OracleSolution};
use crate::persist;
use crate::ppo::{self, PpoPolicy};

pub const MANIFEST: &str = "manifest.txt";
pub const CURVES: &str = "curves.csv";
pub const CONTRACTS: &str = "contracts.csv";
pub const COMPARE: &str = "compare.csv";

/// Oracle columns are only computed up to this many types.
pub const ORACLE_TABLE_MAX_TYPES: usize = 2;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid setting: {0}")]
    Invalid(String),
    #[error("{0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: {source}")]
    Checkpoint { path: String, source: CheckpointError },
    #[error("{0} already holds a manifest; pass --force to overwrite")]
    Exists(String),
}

impl HarnessError {
    /// 2 for configuration problems, 3 for data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Invalid(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.display().to_string(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> HarnessError + '_ {
    move |source| HarnessError::Csv { path: path.display().to_string(), source }
}

pub fn read_curves_file(path: &Path) -> Result<Vec<CurveRow>> {
    let f = File::open(path).map_err(io_err(path))?;
    curves::read_curves(f).map_err(csv_err(path))
}

pub fn read_contracts_file(path: &Path) -> Result<Vec<ContractRow>> {
    let f = File::open(path).map_err(io_err(path))?;
    curves::read_contracts(f).map_err(csv_err(path))
}

pub fn write_curves_file(path: &Path, rows: &[CurveRow]) -> Result<()> {
    let f = File::create(path).map_err(io_err(path))?;
    curves::write_curves(BufWriter::new(f), rows).map_err(csv_err(path))
}

pub fn write_contracts_file(path: &Path, rows: &[ContractRow]) -> Result<()> {
    let f = File::create(path).map_err(io_err(path))?;
    curves::write_contracts(BufWriter::new(f), rows).map_err(csv_err(path))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(io_err(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    Diffusion,
    Ppo,
    Oracle,
}

impl Algo {
    pub fn tag(self) -> &'static str {
        match self {
            Algo::Diffusion => diffusion::ALGO_TAG,
            Algo::Ppo => ppo::ALGO_TAG,
            Algo::Oracle => "oracle",
        }
    }

    pub fn command(self) -> &'static str {
        match self {
            Algo::Diffusion => "train-diffusion",
            Algo::Ppo => "train-ppo",
            Algo::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub force: bool,
    /// Suppresses per-evaluation progress lines on stderr.
    pub quiet: bool,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out: PathBuf,
    pub curves: Vec<CurveRow>,
    pub contracts: Vec<ContractRow>,
    /// Final evaluation per seed.
    pub final_evals: Vec<(u64, EvalStats)>,
    pub checkpoints: Vec<PathBuf>,
}

/// Creates `out`, refusing to reuse a directory that already holds a
/// manifest unless `force` is set.
pub fn prepare_out(out: &Path, force: bool) -> Result<()> {
    if out.join(MANIFEST).exists() && !force {
        return Err(HarnessError::Exists(out.display().to_string()));
    }
    std::fs::create_dir_all(out).map_err(io_err(out))
}

/// Identifies this binary in manifests.
pub fn build_id() -> String {
    format!(
        "{} {} ({}, {}-{})",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
        if cfg!(debug_assertions) { "debug" } else { "release" },
        std::env::consts::ARCH,
        std::env::consts::OS,
    )
}

enum Trained {
    Diffusion(DiffusionPolicy),
    Ppo(PpoPolicy),
}

impl Trained {
    fn as_policy(&self) -> &dyn ContractPolicy {
        match self {
            Trained::Diffusion(p) => p,
            Trained::Ppo(p) => p,
        }
    }

    fn checkpoint(&self) -> Checkpoint {
        match self {
            Trained::Diffusion(p) => p.to_checkpoint(),
            Trained::Ppo(p) => p.to_checkpoint(),
        }
    }
}

/// Trains `algo` once per configured seed (seeds run on parallel threads)
/// and writes curves, a contract table, checkpoints and a manifest.
pub fn run(cfg: &ExperimentConfig, algo: Algo, opts: &RunOptions) -> Result<RunSummary> {
    let started = Instant::now();
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let out = opts.out.as_path();
    prepare_out(out, opts.force)?;

    if algo == Algo::Oracle {
        return run_oracle(cfg, opts, started, started_unix);
    }

    let eval = EvalSet::new(&cfg.sampler, &cfg.params, cfg.eval_states, cfg.eval_seed, &cfg.oracle)
        .map_err(|e| HarnessError::Invalid(e.to_string()))?;

    let results: Vec<Result<(u64, Trained, Option<EvalStats>)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cfg
            .seeds
            .iter()
            .map(|&seed| {
                let eval = &eval;
                scope.spawn(move || train_one(cfg, algo, seed, eval, out, opts.quiet))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect()
    });

    let mut trained = Vec::new();
    let mut curves = Vec::new();
    for r in results {
        let (seed, policy, stats) = r?;
        let tmp = seed_tmp_path(out, seed);
        curves.extend(read_curves_file(&tmp)?);
        std::fs::remove_file(&tmp).map_err(io_err(&tmp))?;
        trained.push((seed, policy, stats));
    }
    curves::sort_curves(&mut curves);
    write_curves_file(&out.join(CURVES), &curves)?;

    let mut checkpoints = Vec::new();
    for (seed, policy, _) in &trained {
        let path = out.join(format!("{}-seed{seed}.ckpt", algo.tag()));
        policy.checkpoint().save(&path).map_err(|source| HarnessError::Checkpoint {
            path: path.display().to_string(),
            source,
        })?;
        checkpoints.push(path);
    }

    let first_seed = trained[0].0;
    let contracts = contract_table(cfg, Some(trained[0].1.as_policy()))?;
    write_contracts_file(&out.join(CONTRACTS), &contracts)?;

    let final_evals: Vec<(u64, EvalStats)> =
        trained.into_iter().filter_map(|(seed, _, s)| s.map(|s| (seed, s))).collect();
    let mut extra = format!("contracts_policy_seed = {first_seed}\n");
    for (seed, s) in &final_evals {
        let _ = writeln!(
            extra,
            "final_eval.seed{seed} = reward {:.6}, feasibility {:.4}, positive {:.4}, oracle_ratio {:.6}",
            s.mean_reward, s.feasibility_rate, s.positive_rate, s.mean_oracle_ratio
        );
    }
    write_manifest(cfg, algo, opts, started, started_unix, &checkpoints, &extra)?;
    Ok(RunSummary { out: out.to_path_buf(), curves, contracts, final_evals, checkpoints })
}

fn seed_tmp_path(out: &Path, seed: u64) -> PathBuf {
    out.join(format!(".curves-seed{seed}.csv.tmp"))
}

fn train_one(
    cfg: &ExperimentConfig,
    algo: Algo,
    seed: u64,
    eval: &EvalSet,
    out: &Path,
    quiet: bool,
) -> Result<(u64, Trained, Option<EvalStats>)> {
    let progress = |r: &CurveRow| {
        if !quiet {
            eprintln!(
                "[{} seed {}] step {:>6}  train {:>12.3}  eval {:>12.3}  feasible {:.3}  oracle ratio {:.4}",
                r.algo, r.seed, r.step, r.train_reward, r.eval_reward, r.eval_feasibility, r.eval_oracle_ratio
            );
        }
    };
    let (rows, policy, stats) = match algo {
        Algo::Diffusion => {
            let o = diffusion::train(&cfg.sampler, &cfg.params, &cfg.diffusion, eval, seed, progress)
                .map_err(|e| HarnessError::Invalid(e.to_string()))?;
            (o.curves, Trained::Diffusion(o.policy), o.final_eval)
        }
        Algo::Ppo => {
            let o = ppo::train_ppo(&cfg.sampler, &cfg.params, &cfg.ppo, eval, seed, progress)
                .map_err(|e| HarnessError::Invalid(e.to_string()))?;
            (o.curves, Trained::Ppo(o.policy), o.final_eval)
        }
        Algo::Oracle => unreachable!("oracle runs do not train"),
    };
    write_curves_file(&seed_tmp_path(out, seed), &rows)?;
    Ok((seed, policy, stats))
}

fn run_oracle(cfg: &ExperimentConfig, opts: &RunOptions, started: Instant, started_unix: u64) -> Result<RunSummary> {
    let out = opts.out.as_path();
    let contracts = contract_table(cfg, None)?;
    write_contracts_file(&out.join(CONTRACTS), &contracts)?;
    write_curves_file(&out.join(CURVES), &[])?;
    let path = out.join("oracle.ckpt");
    oracle_checkpoint(&cfg.sampler, &cfg.params, &cfg.oracle)
        .save(&path)
        .map_err(|source| HarnessError::Checkpoint { path: path.display().to_string(), source })?;
    let checkpoints = vec![path];
    write_manifest(cfg, Algo::Oracle, opts, started, started_unix, &checkpoints, "")?;
    Ok(RunSummary { out: out.to_path_buf(), curves: Vec::new(), contracts, final_evals: Vec::new(), checkpoints })
}

/// A checkpoint that stands for the oracle used as a policy.
pub fn oracle_checkpoint(sampler: &SamplerConfig, params: &EconParams, oracle: &OracleConfig) -> Checkpoint {
    let mut c = Checkpoint::new();
    c.meta.insert("kind".into(), "oracle".into());
    c.meta.insert("oracle.l_grid_points".into(), oracle.l_grid_points.to_string());
    c.meta.insert("oracle.refine_rounds".into(), oracle.refine_rounds.to_string());
    c.meta.insert("oracle.coarse_r_points".into(), oracle.coarse_r_points.to_string());
    persist::write_market(&mut c, sampler, params);
    c
}

fn write_manifest(
    cfg: &ExperimentConfig,
    algo: Algo,
    opts: &RunOptions,
    started: Instant,
    started_unix: u64,
    checkpoints: &[PathBuf],
    extra: &str,
) -> Result<()> {
    let out = opts.out.as_path();
    write_text(&out.join("config.toml"), &cfg.canonical)?;
    let seeds: Vec<String> = cfg.seeds.iter().map(u64::to_string).collect();
    let names: Vec<String> = checkpoints
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    let mut m = String::new();
    let _ = writeln!(m, "command = {}", algo.command());
    let _ = writeln!(m, "algo = {}", algo.tag());
    let _ = writeln!(m, "config_sha256 = {}", cfg.hash());
    let _ = writeln!(m, "seeds = {}", seeds.join(","));
    let _ = writeln!(m, "steps = {}", cfg.steps);
    let _ = writeln!(m, "eval_seed = {}", cfg.eval_seed);
    let _ = writeln!(m, "eval_states = {}", cfg.eval_states);
    let _ = writeln!(m, "contract_seed = {}", cfg.contract_seed);
    let _ = writeln!(m, "build = {}", build_id());
    let _ = writeln!(m, "started_unix = {started_unix}");
    let _ = writeln!(m, "wall_clock_seconds = {:.3}", started.elapsed().as_secs_f64());
    let _ = writeln!(m, "checkpoints = {}", names.join(","));
    m.push_str(extra);
    let _ = writeln!(
        m,
        "rerun = aigc-contract {} --config {} --out {} --force",
        algo.command(),
        out.join("config.toml").display(),
        out.display()
    );
    let _ = writeln!(m, "\n[config]");
    m.push_str(&cfg.canonical);
    write_text(&out.join(MANIFEST), &m)
}

/// Contract table over `cfg.contract_states` states drawn from the contract
/// seed. Policy columns are filled when `policy` is given; oracle columns
/// when the market has at most [`ORACLE_TABLE_MAX_TYPES`] types.
pub fn contract_table(cfg: &ExperimentConfig, policy: Option<&dyn ContractPolicy>) -> Result<Vec<ContractRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.contract_seed);
    let states = (0..cfg.contract_states)
        .map(|_| sample_state(&mut rng, &cfg.sampler))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| HarnessError::Invalid(e.to_string()))?;
    let optimal = if cfg.sampler.types() <= ORACLE_TABLE_MAX_TYPES {
        let sols = states
            .iter()
            .map(|s| solve_optimal_menu(s, &cfg.params, &cfg.oracle))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| HarnessError::Invalid(e.to_string()))?;
        Some(sols)
    } else {
        None
    };
    let menus = policy.map(|p| {
        let mut prng = ChaCha8Rng::seed_from_u64(cfg.contract_seed);
        prng.set_stream(1);
        states.iter().map(|s| p.propose(s, &mut prng)).collect::<Vec<_>>()
    });
    table_rows(&states, menus.as_deref(), optimal.as_deref(), &cfg.params)
}

/// One row per (state, type).
pub fn table_rows(
    states: &[MarketState],
    menus: Option<&[ContractMenu]>,
    optimal: Option<&[OracleSolution]>,
    params: &EconParams,
) -> Result<Vec<ContractRow>> {
    let data = |e: crate::market::MarketError| HarnessError::Data(e.to_string());
    let mut rows = Vec::new();
    for (i, s) in states.iter().enumerate() {
        for q in 0..s.types() {
            let (p_q, theta) = (s.proportions()[q], s.complexities()[q]);
            let mut row = ContractRow {
                state_id: i,
                n: s.n(),
                types: s.types(),
                l_max: s.l_max(),
                p_q,
                theta_q: theta,
                q: q + 1,
                latency: None,
                reward: None,
                asp_utility: None,
                client_utility: None,
                oracle_latency: None,
                oracle_reward: None,
            };
            if let Some(menus) = menus {
                let c = menus[i].contracts[q];
                row.latency = Some(c.latency);
                row.reward = Some(c.reward);
                row.asp_utility = Some(asp_utility(q, q, s, &menus[i], params).map_err(data)?);
                let contribution = s.n() as f64 * p_q * (revenue(theta, c.latency, s, params).map_err(data)? - c.reward);
                row.client_utility = Some(contribution);
            }
            if let Some(opt) = optimal {
                let c = opt[i].menu.contracts[q];
                row.oracle_latency = Some(c.latency);
                row.oracle_reward = Some(c.reward);
            }
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Result of scoring a checkpoint on fresh states.
#[derive(Debug, Clone)]
pub struct EvalRecord {
    pub kind: String,
    pub seed: u64,
    pub stats: EvalStats,
    pub contracts: Vec<ContractRow>,
}

impl EvalRecord {
    pub fn summary(&self) -> String {
        let s = &self.stats;
        format!(
            "kind = {}\nseed = {}\nstates = {}\nfeasibility_rate = {:.6}\npositive_utility_rate = {:.6}\nmean_client_utility = {:.6}\nmean_reward = {:.6}\nmean_oracle_ratio = {:.6}\n",
            self.kind,
            self.seed,
            s.scores.len(),
            s.feasibility_rate,
            s.positive_rate,
            s.mean_utility,
            s.mean_reward,
            s.mean_oracle_ratio
        )
    }
}

fn meta_usize(c: &Checkpoint, key: &str) -> std::result::Result<usize, CheckpointError> {
    c.meta(key)?.trim().parse().map_err(|_| CheckpointError::Missing(format!("integer {key}")))
}

fn oracle_from_meta(c: &Checkpoint) -> std::result::Result<OracleConfig, CheckpointError> {
    Ok(OracleConfig {
        l_grid_points: meta_usize(c, "oracle.l_grid_points")?,
        refine_rounds: meta_usize(c, "oracle.refine_rounds")?,
        coarse_r_points: meta_usize(c, "oracle.coarse_r_points")?,
    })
}

/// Loads any policy checkpoint (diffusion, PPO or oracle) and scores it with
/// the deterministic policy on `count` states drawn from `seed`. An oracle
/// checkpoint is scored against its own grid settings rather than `oracle`.
pub fn evaluate(checkpoint: &Path, seed: u64, count: usize, oracle: &OracleConfig) -> Result<EvalRecord> {
    if count == 0 {
        return Err(HarnessError::Invalid("--count must be positive".into()));
    }
    let ck_err = |source| HarnessError::Checkpoint { path: checkpoint.display().to_string(), source };
    let c = Checkpoint::load(checkpoint).map_err(ck_err)?;
    let kind = c.meta("kind").map_err(ck_err)?.to_string();
    let (sampler, params) = persist::read_market(&c).map_err(ck_err)?;
    let mut reference = *oracle;
    let policy: Box<dyn ContractPolicy> = match kind.as_str() {
        diffusion::ALGO_TAG => Box::new(DiffusionPolicy::from_checkpoint(&c).map_err(ck_err)?),
        ppo::ALGO_TAG => Box::new(PpoPolicy::from_checkpoint(&c).map_err(ck_err)?),
        "oracle" => {
            reference = oracle_from_meta(&c).map_err(ck_err)?;
            Box::new(OraclePolicy { params: params.clone(), config: reference })
        }
        other => {
            return Err(HarnessError::Data(format!(
                "{}: unknown checkpoint kind `{other}`",
                checkpoint.display()
            )))
        }
    };
    let set = EvalSet::new(&sampler, &params, count, seed, &reference)
        .map_err(|e| HarnessError::Invalid(e.to_string()))?;
    let stats = evaluate_policy(policy.as_ref(), &set, &params).map_err(|e| HarnessError::Data(e.to_string()))?;
    let contracts = table_rows(&set.states, Some(&stats.menus), Some(&set.optimal), &params)?;
    Ok(EvalRecord { kind, seed, stats, contracts })
}
