//! Acceptance suite. Prints one PASS/FAIL line per criterion (WARN for the
//! two soft claims) and fails if any hard criterion fails.
//!
//! Trains both algorithms on the paper setup (3 seeds, 50k steps each), so
//! it takes a few minutes in an optimized build. Set `ACCEPTANCE_OUT` to keep
//! the run directories.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use aigc_contract::curves::CurveRow;
use aigc_contract::diffusion::{
    actor_loss_and_grad, denoiser_net, make_schedule, sample_batch_traced, CriticPair, ReplayBuffer,
    Transition, TIME_EMBED_DIM,
};
use aigc_contract::harness::{self, compare, ExperimentConfig, Overrides};
use aigc_contract::market::{
    action_to_menu, cost, menu_to_action, revenue, EconParams, MarketState, SamplerConfig,
};
use aigc_contract::nn::{Activation, DenseNet};
use aigc_contract::oracle::{brute_force_cross_check, solve_optimal_menu, OracleConfig};
use aigc_contract::ppo::{self, act, compute_gae, policy_loss_and_grad, GaussianPolicy, RolloutBuilder};

const FD_NET_TOL: f64 = 1e-4;
const FD_CHAIN_TOL: f64 = 1e-3;
const ORACLE_STATES: usize = 20;
const SLACK_FLOOR: f64 = -1e-9;
const TRAIN_BUDGET: Duration = Duration::from_secs(30 * 60);
const POSITIVE_RATE_MIN: f64 = 0.99;
const POSITIVE_EVAL_STATES: usize = 1000;
const CONVERGENCE_RATIO_MAX: f64 = 2.0;
const PPO_MAGNITUDE_MAX: f64 = 0.10;
const ORACLE_RATIO_MIN: f64 = 0.8;
const FEASIBILITY_MIN: f64 = 0.95;
const PROPERTY_CASES: u32 = 1000;

#[derive(Default)]
struct Report {
    lines: Vec<String>,
    hard_failures: Vec<String>,
}

impl Report {
    fn hard(&mut self, id: &str, ok: bool, detail: String) {
        let line = format!("[{}] criterion {id}: {detail}", if ok { "PASS" } else { "FAIL" });
        println!("{line}");
        if !ok {
            self.hard_failures.push(line.clone());
        }
        self.lines.push(line);
    }

    fn soft(&mut self, id: &str, ok: bool, detail: String) {
        let line = format!("[{}] criterion {id}: {detail}", if ok { "PASS" } else { "WARN" });
        println!("{line}");
        self.lines.push(line);
    }
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aigc-contract"))
}

fn run_cli(args: &[&str]) -> (bool, String) {
    let out = bin().args(args).output().expect("spawn cli");
    (out.status.success(), String::from_utf8_lossy(&out.stderr).into_owned())
}

/// Worst relative error between the analytic gradient and central
/// differences of `loss` over every entry of `params`.
fn fd_worst(params: &[f64], analytic: &[f64], h: f64, mut loss: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut p = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let plus = loss(&p);
        p[i] = orig - h;
        let minus = loss(&p);
        p[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let denom = numeric.abs().max(analytic[i].abs()).max(1e-6);
        worst = worst.max((numeric - analytic[i]).abs() / denom);
    }
    worst
}

fn net_fd(net: &DenseNet, rng: &mut ChaCha8Rng) -> f64 {
    let x = Array2::from_shape_simple_fn((6, net.input_dim()), || rng.random_range(-1.0..1.0));
    let up = Array2::from_shape_simple_fn((6, net.output_dim()), || rng.random_range(-1.0..1.0));
    let cache = net.forward_cached(x.view()).unwrap();
    let (g, _) = net.backward(&cache, up.view()).unwrap();
    let mut probe = net.clone();
    fd_worst(&net.params_flat(), &g.flat(), 1e-6, |p| {
        probe.set_params_flat(p).unwrap();
        (&probe.forward_batch(x.view()).unwrap() * &up).sum()
    })
}

fn criterion_1(report: &mut Report, cfg: &ExperimentConfig) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let sd = cfg.sampler.encoding_len();
    let ad = 2 * cfg.sampler.types();
    let denoiser = denoiser_net(sd, ad, &cfg.diffusion.hidden, &mut rng).unwrap();
    let critics = CriticPair::new(sd, ad, &cfg.diffusion.critic_hidden, 1e-3, &mut rng).unwrap();
    let policy = GaussianPolicy::new(sd, ad, &cfg.ppo.hidden, -0.5, &mut rng).unwrap();

    let mut nets = vec![
        ("denoiser", net_fd(&denoiser, &mut rng)),
        ("critic A", net_fd(&critics.q_a, &mut rng)),
        ("critic B", net_fd(&critics.q_b, &mut rng)),
        ("ppo actor", net_fd(&policy.actor, &mut rng)),
        ("ppo value", net_fd(&policy.value, &mut rng)),
    ];

    // Clipped surrogate through the Gaussian head, away from the collection point.
    let mut b = RolloutBuilder::default();
    for _ in 0..16 {
        let s: Vec<f64> = (0..sd).map(|_| rng.random_range(0.0..1.0)).collect();
        let a = act(&policy, &s, &mut rng).unwrap();
        b.push(&s, &a, a.action.iter().sum());
    }
    let batch = b.finish(0.0, 0.95, 0.95).unwrap();
    let mut moved = policy.clone();
    let flat: Vec<f64> = moved.actor.params_flat().iter().enumerate().map(|(i, w)| w + 0.03 * ((i % 5) as f64 - 2.0)).collect();
    moved.actor.set_params_flat(&flat).unwrap();
    let pl = policy_loss_and_grad(&moved, batch.states.view(), batch.pre_squash.view(), &batch.log_probs, &batch.advantages, 0.2, 0.01).unwrap();
    let mut probe = moved.clone();
    let surrogate = fd_worst(&flat, &pl.actor.flat(), 1e-6, |p| {
        probe.actor.set_params_flat(p).unwrap();
        policy_loss_and_grad(&probe, batch.states.view(), batch.pre_squash.view(), &batch.log_probs, &batch.advantages, 0.2, 0.01)
            .unwrap()
            .loss
    });
    nets.push(("ppo surrogate", surrogate));

    // Actor loss through the full deterministic chain.
    let schedule = make_schedule(cfg.diffusion.diffusion_steps, cfg.diffusion.beta_start, cfg.diffusion.beta_end).unwrap();
    let states = Array2::from_shape_simple_fn((4, sd), || rng.random_range(0.0..1.0));
    let chain_loss = |net: &DenseNet| {
        actor_loss_and_grad(states.view(), net, &critics, &schedule, &mut ChaCha8Rng::seed_from_u64(7), true).unwrap()
    };
    let (_, g) = chain_loss(&denoiser);
    let mut probe = denoiser.clone();
    let chain = fd_worst(&denoiser.params_flat(), &g.flat(), 1e-6, |p| {
        probe.set_params_flat(p).unwrap();
        chain_loss(&probe).0
    });

    let worst_net = nets.iter().map(|n| n.1).fold(0.0, f64::max);
    let detail: Vec<String> = nets.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    let elapsed = t.elapsed();
    report.hard(
        "1 gradient correctness",
        worst_net <= FD_NET_TOL && chain <= FD_CHAIN_TOL && g.norm() > 0.0 && elapsed < Duration::from_secs(60),
        format!(
            "nets max rel err {worst_net:.2e} (<= {FD_NET_TOL:.0e}; {}), full {}-step chain {chain:.2e} (<= {FD_CHAIN_TOL:.0e}), {:.1}s (< 60s)",
            detail.join(", "),
            schedule.steps(),
            elapsed.as_secs_f64()
        ),
    );
}

fn criterion_2(report: &mut Report) {
    let t = Instant::now();
    let sampler = SamplerConfig::paper();
    let params = EconParams::paper(sampler.theta_top());
    let ocfg = OracleConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut matched, mut slack_ok, mut binding_ok) = (0, 0, 0);
    let mut worst_gap: f64 = 0.0;
    for _ in 0..ORACLE_STATES {
        let s = aigc_contract::market::sample_state(&mut rng, &sampler).unwrap();
        let sol = solve_optimal_menu(&s, &params, &ocfg).unwrap();
        let bf = brute_force_cross_check(&s, &params, &ocfg).unwrap();
        let gap = (sol.u_c - bf.solution.u_c).abs();
        worst_gap = worst_gap.max(gap / bf.cell_variation.max(f64::MIN_POSITIVE));
        if gap <= bf.cell_variation {
            matched += 1;
        }
        let r = aigc_contract::market::constraint_report(&s, &sol.menu, &params).unwrap();
        if r.ir_slack.iter().chain(r.ic_slack.iter().flatten()).all(|&v| v >= SLACK_FLOOR) {
            slack_ok += 1;
        }
        if sol.binding.iter().all(|b| !b.is_empty()) {
            binding_ok += 1;
        }
    }
    let elapsed = t.elapsed();
    let n = ORACLE_STATES;
    report.hard(
        "2 oracle soundness",
        matched == n && slack_ok == n && binding_ok == n && elapsed < Duration::from_secs(120),
        format!(
            "{matched}/{n} match brute force within one cell (worst gap {worst_gap:.2} cells), {slack_ok}/{n} slacks >= {SLACK_FLOOR:e}, {binding_ok}/{n} with a binding constraint per type, {:.1}s (< 120s)",
            elapsed.as_secs_f64()
        ),
    );
}

struct Trained {
    out: PathBuf,
    curves: Vec<CurveRow>,
    elapsed: Duration,
    ok: bool,
}

fn train(algo: &str, config: &Path, out: &Path) -> Trained {
    let t = Instant::now();
    let (ok, stderr) = run_cli(&[algo, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--force", "--quiet"]);
    let elapsed = t.elapsed();
    if !ok {
        println!("{algo} failed: {stderr}");
    }
    let curves = harness::read_curves_file(&out.join(harness::CURVES)).unwrap_or_default();
    Trained { out: out.to_path_buf(), curves, elapsed, ok }
}

fn last_rows(curves: &[CurveRow]) -> Vec<&CurveRow> {
    let mut seeds: Vec<u64> = curves.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    seeds
        .iter()
        .filter_map(|s| curves.iter().filter(|r| r.seed == *s).max_by_key(|r| r.step))
        .collect()
}

fn criteria_3_to_6(report: &mut Report, cfg: &ExperimentConfig, config: &Path, root: &Path) {
    let diff = train("train-diffusion", config, &root.join("diffusion"));
    let ppo = train("train-ppo", config, &root.join("ppo"));
    let seeds = cfg.seeds.len();
    let complete = |t: &Trained| {
        t.ok && last_rows(&t.curves).len() == seeds && last_rows(&t.curves).iter().all(|r| r.step as usize == cfg.steps)
    };
    report.hard(
        "3 paper setup end to end",
        complete(&diff) && complete(&ppo) && diff.elapsed < TRAIN_BUDGET && ppo.elapsed < TRAIN_BUDGET,
        format!(
            "n={} Q={} T={} steps={} seeds={:?}: diffusion {:.1}s, ppo {:.1}s (each < {}s)",
            cfg.sampler.n,
            cfg.sampler.types(),
            cfg.diffusion.diffusion_steps,
            cfg.steps,
            cfg.seeds,
            diff.elapsed.as_secs_f64(),
            ppo.elapsed.as_secs_f64(),
            TRAIN_BUDGET.as_secs()
        ),
    );
    if !(diff.ok && ppo.ok) {
        for id in ["4a", "4b", "4c", "4d", "5", "6"] {
            report.hard(id, false, "training did not complete".into());
        }
        return;
    }

    let g_d = compare::summarize(&diff.curves, "diffusion").unwrap();
    let g_p = compare::summarize(&ppo.curves, "ppo").unwrap();
    let pairs: Vec<String> = g_d
        .per_seed_final
        .iter()
        .zip(&g_p.per_seed_final)
        .zip(&g_d.seeds)
        .map(|((d, p), s)| format!("seed {s}: {d:.1} vs {p:.1}"))
        .collect();
    let every_seed = g_d.seeds == g_p.seeds && g_d.per_seed_final.iter().zip(&g_p.per_seed_final).all(|(d, p)| d > p);
    report.hard("4a diffusion beats ppo per seed", every_seed, format!("final-window eval reward {}", pairs.join("; ")));

    let (cd, cp) = (g_d.convergence_step.mean, g_p.convergence_step.mean);
    let ratio = cd.max(cp) / cd.min(cp).max(1.0);
    report.soft(
        "4b similar convergence time",
        ratio <= CONVERGENCE_RATIO_MAX,
        format!("convergence steps diffusion {cd:.0} vs ppo {cp:.0}, ratio {ratio:.2} (<= {CONVERGENCE_RATIO_MAX})"),
    );

    let mut rates = Vec::new();
    for s in &cfg.seeds {
        let ck = diff.out.join(format!("diffusion-seed{s}.ckpt"));
        let rec = harness::evaluate(&ck, cfg.eval_seed + 1, POSITIVE_EVAL_STATES, &cfg.oracle).unwrap();
        rates.push(rec.stats.positive_rate);
    }
    let worst = rates.iter().copied().fold(f64::INFINITY, f64::min);
    report.hard(
        "4c positive client utility",
        worst >= POSITIVE_RATE_MIN,
        format!("positive-utility rate on {POSITIVE_EVAL_STATES} states per seed {rates:?} (>= {POSITIVE_RATE_MIN})"),
    );

    let rel = g_p.final_reward.mean.abs() / g_d.final_reward.mean.abs();
    report.soft(
        "4d ppo near zero",
        rel < PPO_MAGNITUDE_MAX,
        format!(
            "|ppo final| / |diffusion final| = {:.1} / {:.1} = {rel:.2e} (< {PPO_MAGNITUDE_MAX})",
            g_p.final_reward.mean.abs(),
            g_d.final_reward.mean.abs()
        ),
    );

    let finals = last_rows(&diff.curves);
    let ratios: Vec<f64> = finals.iter().map(|r| r.eval_oracle_ratio).collect();
    let feas: Vec<f64> = finals.iter().map(|r| r.eval_feasibility).collect();
    report.hard(
        "5 oracle ratio",
        ratios.iter().all(|&r| r >= ORACLE_RATIO_MIN),
        format!("mean oracle ratio per seed on {} held-out states {ratios:?} (>= {ORACLE_RATIO_MIN})", cfg.eval_states),
    );
    report.hard(
        "6 strict feasibility",
        feas.iter().all(|&f| f >= FEASIBILITY_MIN),
        format!("zero-tolerance feasibility rate per seed {feas:?} (>= {FEASIBILITY_MIN})"),
    );
}

fn criterion_7(report: &mut Report, root: &Path) {
    let config = workspace_root().join("configs/smoke.toml");
    let config = config.to_str().unwrap();
    let mut checked = Vec::new();
    let mut ok = true;
    for cmd in ["train-diffusion", "train-ppo", "oracle"] {
        let a = root.join(format!("det-{cmd}-a"));
        let b = root.join(format!("det-{cmd}-b"));
        for dir in [&a, &b] {
            let (ran, err) = run_cli(&[cmd, "--config", config, "--out", dir.to_str().unwrap(), "--force", "--quiet"]);
            if !ran {
                println!("{cmd} failed: {err}");
                ok = false;
            }
        }
        for file in [harness::CURVES, harness::CONTRACTS] {
            let same = std::fs::read(a.join(file)).ok().zip(std::fs::read(b.join(file)).ok()).is_some_and(|(x, y)| x == y);
            ok &= same;
            checked.push(format!("{cmd}/{file} {}", if same { "identical" } else { "DIFFERENT" }));
        }
    }
    let ck = root.join("det-train-diffusion-a/diffusion-seed1.ckpt");
    let mut evals = Vec::new();
    for tag in ["a", "b"] {
        let out = root.join(format!("det-eval-{tag}"));
        let (ran, _) = run_cli(&["eval", "--checkpoint", ck.to_str().unwrap(), "--count", "50", "--out", out.to_str().unwrap(), "--force"]);
        ok &= ran;
        evals.push(std::fs::read(out.join(harness::CONTRACTS)).unwrap_or_default());
    }
    let same = !evals[0].is_empty() && evals[0] == evals[1];
    ok &= same;
    checked.push(format!("eval/contracts.csv {}", if same { "identical" } else { "DIFFERENT" }));
    report.hard("7 determinism", ok, checked.join(", "));
}

fn run_property<S: Strategy>(name: &str, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<String, String> {
    let mut runner = TestRunner::new_with_rng(
        PropConfig { cases: PROPERTY_CASES, failure_persistence: None, ..PropConfig::default() },
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    runner.run(&strategy, test).map(|_| name.to_string()).map_err(|e| format!("{name}: {e}"))
}

fn arb_state() -> impl Strategy<Value = MarketState> {
    (2u32..200, 1.0f64..10.0, 0.05f64..0.95, 10.0f64..50.0, 50.0f64..100.0).prop_map(|(n, l, p, t1, t2)| {
        MarketState::new(n, l, vec![p, 1.0 - p], vec![t1, t2]).unwrap()
    })
}

fn criterion_8(report: &mut Report) {
    let params = EconParams::paper(100.0);
    let p = params.clone();
    let results = vec![
        run_property("revenue monotonicity", (arb_state(), 1.0f64..100.0, 1.0f64..100.0, 0.05f64..1.0, 0.05f64..1.0), move |(s, a, b, u, v)| {
            let (lo_t, hi_t) = (a.min(b), a.max(b));
            let (lo_l, hi_l) = (u.min(v) * s.l_max(), u.max(v) * s.l_max());
            if hi_t > lo_t {
                prop_assert!(revenue(hi_t, lo_l, &s, &p).unwrap() > revenue(lo_t, lo_l, &s, &p).unwrap());
            }
            if hi_l > lo_l {
                prop_assert!(revenue(lo_t, lo_l, &s, &p).unwrap() > revenue(lo_t, hi_l, &s, &p).unwrap());
            }
            Ok(())
        }),
        {
            let p = params.clone();
            run_property("single crossing", (arb_state(), 1.0f64..100.0, 1.0f64..100.0, 0.1f64..1.0, 0.1f64..1.0), move |(s, a, b, u, v)| {
                let (t, t2) = (a.min(b), a.max(b));
                let lo = s.l_min(&p);
                let (l2, l) = (lo + u.min(v) * (s.l_max() - lo), lo + u.max(v) * (s.l_max() - lo));
                if t2 > t && l > l2 {
                    let c = |th: f64, lat: f64| cost(th, lat, &s, &p).unwrap();
                    prop_assert!(c(t2, l) - c(t2, l2) < c(t, l) - c(t, l2));
                }
                Ok(())
            })
        },
        {
            let p = params.clone();
            run_property("action codec round trip", (arb_state(), proptest::collection::vec(-1.0f64..1.0, 4)), move |(s, a)| {
                let back = menu_to_action(&action_to_menu(&a, &s, &p), &s, &p);
                for (x, y) in a.iter().zip(&back) {
                    prop_assert!((x - y).abs() < 1e-12);
                }
                Ok(())
            })
        },
        run_property("schedule alpha_bar decreasing", (1usize..40, 1e-4f64..0.99, 1e-4f64..0.99), |(steps, a, b)| {
            let s = make_schedule(steps, a.min(b), a.max(b)).unwrap();
            for t in 1..=steps {
                prop_assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
            }
            Ok(())
        }),
        run_property("zero-noise reconstruction", (any::<u64>(), 0.01f64..0.3, 0.0f64..0.3), |(seed, lo, span)| {
            let sched = make_schedule(8, lo, lo + span).unwrap();
            let den = DenseNet::zeros(&[3 + 4 + TIME_EMBED_DIM, 4], Activation::Relu, Activation::Identity).unwrap();
            let state = [0.2, 0.4, 0.6];
            let view = ArrayView2::from_shape((1, 3), &state[..]).unwrap();
            let trace = sample_batch_traced(view, &den, &sched, &mut ChaCha8Rng::seed_from_u64(seed), true).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let scale = 1.0 / sched.alpha_bar(8).sqrt();
            for x in trace.pre_clip.iter() {
                let c: f64 = StandardNormal.sample(&mut rng);
                prop_assert!((x - c * scale).abs() <= 1e-12 * (c * scale).abs().max(1.0));
            }
            Ok(())
        }),
        run_property("gae fixed point", (-8i32..8, prop::sample::select(vec![0.0, 0.5, 0.75, 0.875]), 0u32..=8, 1usize..40), |(r, gamma, l, n)| {
            let (r, lambda) = (r as f64, l as f64 / 8.0);
            let v = r / (1.0 - gamma);
            let (adv, ret) = compute_gae(&vec![r; n], &vec![v; n], v, gamma, lambda).unwrap();
            prop_assert!(adv.iter().all(|&a| a == 0.0) && ret.iter().all(|&x| x == v));
            Ok(())
        }),
        run_property("gae one-step and myopic limits", (proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..20), -5.0f64..5.0, 0.0f64..0.99), |(rv, boot, gamma)| {
            let (r, v): (Vec<f64>, Vec<f64>) = rv.into_iter().unzip();
            let (adv, _) = compute_gae(&r, &v, boot, gamma, 0.0).unwrap();
            for t in 0..r.len() {
                let next = if t + 1 < r.len() { v[t + 1] } else { boot };
                prop_assert_eq!(adv[t], r[t] + gamma * next - v[t]);
            }
            let (_, ret) = compute_gae(&r, &v, boot, 0.0, 0.9).unwrap();
            prop_assert_eq!(ret, r);
            Ok(())
        }),
        run_property("ppo ratio identity", (any::<u64>(), 1usize..32), |(seed, n)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let policy = GaussianPolicy::new(7, 4, &[16], -0.5, &mut rng).unwrap();
            let mut b = RolloutBuilder::default();
            for _ in 0..n {
                let s: Vec<f64> = (0..7).map(|_| rng.random_range(0.0..1.0)).collect();
                let a = act(&policy, &s, &mut rng).unwrap();
                b.push(&s, &a, 1.0);
            }
            let batch = b.finish(0.0, 0.95, 0.95).unwrap();
            let pl = policy_loss_and_grad(&policy, batch.states.view(), batch.pre_squash.view(), &batch.log_probs, &batch.advantages, 0.2, 0.0).unwrap();
            prop_assert!(pl.ratios.iter().all(|r| (r - 1.0).abs() <= 1e-9));
            Ok(())
        }),
        run_property("replay buffer fifo", (1usize..20, 0usize..60), |(capacity, pushes)| {
            let mut buf = ReplayBuffer::new(capacity);
            for i in 0..pushes {
                buf.push(Transition { s: vec![], a: vec![], r: i as f64, s_next: vec![] });
                prop_assert!(buf.len() <= capacity);
            }
            let kept: Vec<f64> = buf.iter().map(|t| t.r).collect();
            let expected: Vec<f64> = (pushes.saturating_sub(capacity)..pushes).map(|i| i as f64).collect();
            prop_assert_eq!(kept, expected);
            Ok(())
        }),
    ];
    let failed: Vec<&String> = results.iter().filter_map(|r| r.as_ref().err()).collect();
    let passed: Vec<&String> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    report.hard(
        "8 invariant suites",
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} properties x {PROPERTY_CASES} cases: {}", passed.len(), passed.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", "))
        } else {
            format!("failed: {}", failed.iter().map(|s| s.as_str()).collect::<Vec<_>>().join("; "))
        },
    );
}

#[test]
fn acceptance() {
    let config = workspace_root().join("configs/paper.toml");
    let cfg = ExperimentConfig::load_with(&config, &Overrides::default()).expect("paper config");
    let keep = std::env::var_os("ACCEPTANCE_OUT").map(PathBuf::from);
    let tmp = tempfile::tempdir().unwrap();
    let root = keep.clone().unwrap_or_else(|| tmp.path().to_path_buf());
    std::fs::create_dir_all(&root).unwrap();

    let mut report = Report::default();
    criterion_1(&mut report, &cfg);
    criterion_2(&mut report);
    criteria_3_to_6(&mut report, &cfg, &config, &root);
    criterion_7(&mut report, &root);
    criterion_8(&mut report);

    println!("\nacceptance summary:");
    for line in &report.lines {
        println!("  {line}");
    }
    if let Some(dir) = keep {
        std::fs::write(dir.join("acceptance.txt"), report.lines.join("\n") + "\n").unwrap();
    }
    assert!(report.hard_failures.is_empty(), "failed criteria:\n{}", report.hard_failures.join("\n"));
    let _ = ppo::ALGO_TAG;
}
