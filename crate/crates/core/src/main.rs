use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use aigc_contract::harness::{
    self, compare, config::DEFAULT_EVAL_SEED, Algo, ExperimentConfig, HarnessError, Overrides, RunOptions,
};

#[derive(Parser)]
#[command(name = "aigc-contract", version, about = "Contract menus for a typed AIGC service market")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the diffusion policy, one run per seed.
    TrainDiffusion(TrainArgs),
    /// Train the PPO baseline, one run per seed.
    TrainPpo(TrainArgs),
    /// Solve the contract-table states exactly and write an oracle checkpoint.
    Oracle(TrainArgs),
    /// Score a checkpoint on freshly sampled states.
    Eval(EvalArgs),
    /// Summarize two or more curve files.
    Compare(CompareArgs),
    /// Render SVG figures from a curves file.
    Plot(PlotArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// TOML experiment config; paper defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated seeds, replacing the config's list.
    #[arg(long, value_delimiter = ',')]
    seed: Option<Vec<u64>>,
    /// Environment-interaction budget per seed.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite an existing run directory.
    #[arg(long)]
    force: bool,
    /// No per-evaluation progress on stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Seed of the evaluation states.
    #[arg(long, default_value_t = DEFAULT_EVAL_SEED)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    /// Config supplying the oracle grid used for oracle ratios.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for eval.txt and contracts.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct CompareArgs {
    /// curves.csv files; each algorithm inside forms one curve set.
    #[arg(required = true)]
    curves: Vec<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    curves: PathBuf,
    /// Contract table to draw as well.
    #[arg(long)]
    contracts: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn load_config(path: Option<&Path>, overrides: &Overrides) -> Result<ExperimentConfig, HarnessError> {
    Ok(match path {
        Some(p) => ExperimentConfig::load_with(p, overrides)?,
        None => ExperimentConfig::parse("", "<defaults>", overrides)?,
    })
}

fn train(algo: Algo, a: TrainArgs) -> Result<(), HarnessError> {
    let overrides = Overrides { seeds: a.seed, steps: a.steps };
    let cfg = load_config(a.config.as_deref(), &overrides)?;
    let out = a
        .out
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(algo.tag()));
    let summary = harness::run(&cfg, algo, &RunOptions { out, force: a.force, quiet: a.quiet })?;
    for (seed, s) in &summary.final_evals {
        println!(
            "{} seed {seed}: eval reward {:.3}, feasibility {:.3}, positive utility {:.3}, oracle ratio {:.4}",
            algo.tag(),
            s.mean_reward,
            s.feasibility_rate,
            s.positive_rate,
            s.mean_oracle_ratio
        );
    }
    println!("wrote {}", summary.out.display());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<(), HarnessError> {
    let cfg = load_config(a.config.as_deref(), &Overrides::default())?;
    let record = harness::evaluate(&a.checkpoint, a.seed, a.count, &cfg.oracle)?;
    print!("{}", record.summary());
    if let Some(out) = a.out {
        harness::prepare_out(&out, a.force)?;
        harness::write_contracts_file(&out.join(harness::CONTRACTS), &record.contracts)?;
        let text = format!("checkpoint = {}\n{}", a.checkpoint.display(), record.summary());
        std::fs::write(out.join("eval.txt"), &text)
            .map_err(|source| HarnessError::Io { path: out.join("eval.txt").display().to_string(), source })?;
        let manifest = format!("command = eval\nbuild = {}\n{text}", harness::build_id());
        std::fs::write(out.join(harness::MANIFEST), manifest)
            .map_err(|source| HarnessError::Io { path: out.join(harness::MANIFEST).display().to_string(), source })?;
    }
    Ok(())
}

fn compare_cmd(a: CompareArgs) -> Result<(), HarnessError> {
    let inputs = a
        .curves
        .iter()
        .map(|p| harness::read_curves_file(p))
        .collect::<Result<Vec<_>, _>>()?;
    let c = harness::compare(&inputs)?;
    std::fs::create_dir_all(&a.out)
        .map_err(|source| HarnessError::Io { path: a.out.display().to_string(), source })?;
    let path = a.out.join(harness::COMPARE);
    let file = std::fs::File::create(&path)
        .map_err(|source| HarnessError::Io { path: path.display().to_string(), source })?;
    compare::write_compare(file, &c)
        .map_err(|source| HarnessError::Csv { path: path.display().to_string(), source })?;
    for g in &c.groups {
        println!(
            "{:<12} seeds {:>2}  final reward {:>14.3} ± {:<12.3} feasibility {:.3}  oracle ratio {:.4}  convergence step {:.0}",
            g.label,
            g.seeds.len(),
            g.final_reward.mean,
            g.final_reward.std,
            g.final_feasibility.mean,
            g.final_oracle_ratio.mean,
            g.convergence_step.mean
        );
    }
    println!("{}", c.verdict);
    Ok(())
}

fn plot(a: PlotArgs) -> Result<(), HarnessError> {
    for p in harness::emit_plots(&a.curves, a.contracts.as_deref(), &a.out)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::TrainDiffusion(a) => train(Algo::Diffusion, a),
        Command::TrainPpo(a) => train(Algo::Ppo, a),
        Command::Oracle(a) => train(Algo::Oracle, a),
        Command::Eval(a) => eval(a),
        Command::Compare(a) => compare_cmd(a),
        Command::Plot(a) => plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
