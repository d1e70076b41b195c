use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dsacd_core::entropy::{em_fit, GmmFit};
use dsacd_core::envs::{Environment, ToyEnv};
use dsacd_core::policy::ActionSampler;
use dsacd_core::rng::sub_seed;
use dsacd_core::trainer::{load_checkpoint, read_metrics, rollout, MetricsRecord, Trainer};

use crate::svg::{histogram, render, Panel, Series, Style, PALETTE};
use crate::train::{CHECKPOINT_FILE, METRICS_FILE};
use crate::{PlotArgs, PlotKind};

pub fn run(args: PlotArgs) -> Result<()> {
    let out_dir = args
        .out
        .clone()
        .or_else(|| args.run.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let from_run = |explicit: &Option<PathBuf>, file: &str| -> Result<PathBuf> {
        explicit
            .clone()
            .or_else(|| args.run.as_ref().map(|r| r.join(file)))
            .with_context(|| format!("pass --run or the path to {file}"))
    };
    let panels = match args.kind {
        PlotKind::Curves => {
            let path = from_run(&args.metrics, METRICS_FILE)?;
            let records = read_metrics(&path)
                .with_context(|| format!("cannot read metrics {}", path.display()))?;
            if records.is_empty() {
                log::warn!("{} holds no records; plotting empty curves", path.display());
            }
            curves(&records)
        }
        kind => {
            let path = from_run(&args.checkpoint, CHECKPOINT_FILE)?;
            let trainer = load_checkpoint(&path)
                .with_context(|| format!("cannot load checkpoint {}", path.display()))?;
            let env = trainer.pool.envs[0].clone();
            match kind {
                PlotKind::ReturnHist => return_hist(&trainer, env, args.samples, args.seed)?,
                PlotKind::ActionModes => action_modes(&trainer, env, args.samples, args.seed)?,
                _ => trajectories(&trainer, env, args.samples, args.seed)?,
            }
        }
    };
    let file = out_dir.join(format!("{}.svg", kind_name(args.kind)));
    write_svg(&file, &panels)?;
    println!("{}", file.display());
    Ok(())
}

fn kind_name(kind: PlotKind) -> &'static str {
    match kind {
        PlotKind::Curves => "curves",
        PlotKind::ReturnHist => "return_hist",
        PlotKind::ActionModes => "action_modes",
        PlotKind::Trajectories => "trajectories",
    }
}

fn write_svg(path: &Path, panels: &[Panel]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, render(panels)).with_context(|| format!("cannot write {}", path.display()))
}

pub fn curves(records: &[MetricsRecord]) -> Vec<Panel> {
    let line = |label: &str, color: usize, f: &dyn Fn(&MetricsRecord) -> Option<f64>| {
        let pts = records
            .iter()
            .filter_map(|r| f(r).map(|v| (r.iteration as f64, v)))
            .collect();
        Series::new(label, PALETTE[color], Style::Line, pts)
    };
    let mut ret = Panel::new("Episode return", "iteration", "return");
    ret.push(line("", 0, &|r| r.episode_return_mean));
    let mut loss = Panel::new("Value loss", "iteration", "loss");
    loss.push(line("", 1, &|r| r.value_loss));
    let mut obj = Panel::new("Policy objective", "iteration", "mean Q");
    obj.push(line("", 2, &|r| r.policy_objective));
    let mut ent = Panel::new("Policy entropy", "iteration", "nats");
    ent.push(line("estimate", 3, &|r| r.entropy));
    ent.push(line("target", 5, &|r| {
        r.alpha_steps.last().map(|s| s.target)
    }));
    let mut alpha = Panel::new("Temperature", "iteration", "alpha");
    alpha.push(line("", 4, &|r| Some(r.alpha)));
    vec![ret, loss, obj, ent, alpha]
}

fn discounted(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
}

/// Value-network return samples at `(s₀, a ~ π)` against discounted rollout
/// returns from the same starts and first actions.
fn return_hist(trainer: &Trainer, mut env: ToyEnv, n: usize, seed: u64) -> Result<Vec<Panel>> {
    let sampler = trainer.policy.sampler();
    let gamma = trainer.config.gamma;
    let mut model = Vec::with_capacity(n);
    let mut observed = Vec::with_capacity(n);
    for i in 0..n as u64 {
        let s = sub_seed(seed, i);
        let s0 = env.reset(s);
        let a = sampler
            .sample_actions(&s0, 1, sub_seed(s, 0))?
            .row(0)
            .to_vec();
        model.extend(
            trainer
                .value
                .sample_returns(&s0, &a, 1, sub_seed(s, u64::MAX))?,
        );
        observed.push(discounted(&rollout(&mut env, &sampler, s)?.rewards, gamma));
    }
    let all: Vec<f64> = model.iter().chain(&observed).copied().collect();
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = (lo.is_finite() && hi > lo).then_some((lo, hi));
    let bins = (n / 10).clamp(10, 60);
    let (hm, w) = histogram(&model, bins, range);
    let (ho, _) = histogram(&observed, bins, range);
    let mut p = Panel::new(
        format!("Return distribution at the initial state ({n} samples)"),
        "discounted return",
        "density",
    );
    p.push(Series::new("value network", PALETTE[0], Style::Bars { width: w }, hm).opacity(0.5));
    p.push(Series::new("rollouts", PALETTE[1], Style::Bars { width: w }, ho).opacity(0.5));
    Ok(vec![p])
}

/// Actions sampled at the initial state with the fitted mixture overlaid.
fn action_modes(trainer: &Trainer, mut env: ToyEnv, n: usize, seed: u64) -> Result<Vec<Panel>> {
    let s0 = env.reset(seed);
    let actions = trainer
        .policy
        .sampler()
        .sample_actions(&s0, n.max(2), seed)?;
    let fit = em_fit(&actions, &trainer.config.entropy.em, sub_seed(seed, 1))?;
    let mut p = Panel::new(
        format!(
            "Policy actions at the initial state, {} components",
            fit.components()
        ),
        "action[0]",
        if actions.ncols() == 1 {
            "density"
        } else {
            "action[1]"
        },
    );
    if actions.ncols() == 1 {
        let xs: Vec<f64> = actions.column(0).to_vec();
        let (h, w) = histogram(&xs, 40, None);
        p.push(Series::new("samples", PALETTE[5], Style::Bars { width: w }, h).opacity(0.5));
        let (lo, hi) = (trainer.spec.action_low[0], trainer.spec.action_high[0]);
        let grid: Vec<f64> = (0..=200)
            .map(|i| lo + (hi - lo) * i as f64 / 200.0)
            .collect();
        for k in 0..fit.components() {
            let (m, v) = (fit.means[[k, 0]], fit.covariances[k][[0, 0]]);
            let pts = grid
                .iter()
                .map(|&x| (x, fit.weights[k] * normal_pdf(x, m, v)))
                .collect();
            let label = format!("w={:.2} mu={:.2}", fit.weights[k], m);
            p.push(Series::new(label, PALETTE[k % 5], Style::Line, pts));
        }
    } else {
        let pts = actions.rows().into_iter().map(|r| (r[0], r[1])).collect();
        p.push(Series::new("samples", PALETTE[5], Style::Dots { radius: 2.0 }, pts).opacity(0.5));
        for k in 0..fit.components() {
            let label = format!("w={:.2}", fit.weights[k]);
            p.push(Series::new(
                label,
                PALETTE[k % 5],
                Style::Line,
                ellipse(&fit, k, 2.0),
            ));
        }
        p.equal_aspect = true;
    }
    Ok(vec![p])
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// The `r`-sigma contour of component `k` in its first two dimensions.
fn ellipse(fit: &GmmFit, k: usize, r: f64) -> Vec<(f64, f64)> {
    let c = &fit.covariances[k];
    let (a, b, d) = (c[[0, 0]], c[[0, 1]], c[[1, 1]]);
    // 2×2 Cholesky factor
    let l11 = a.sqrt();
    let l21 = b / l11;
    let l22 = (d - l21 * l21).max(0.0).sqrt();
    let (mx, my) = (fit.means[[k, 0]], fit.means[[k, 1]]);
    (0..=64)
        .map(|i| {
            let t = i as f64 / 64.0 * std::f64::consts::TAU;
            let (u, v) = (r * t.cos(), r * t.sin());
            (mx + l11 * u, my + l21 * u + l22 * v)
        })
        .collect()
}

fn circle(c: [f64; 2], r: f64) -> Vec<(f64, f64)> {
    (0..=64)
        .map(|i| {
            let t = i as f64 / 64.0 * std::f64::consts::TAU;
            (c[0] + r * t.cos(), c[1] + r * t.sin())
        })
        .collect()
}

/// Point-mass paths coloured by the goal reached; grey paths time out.
fn trajectories(trainer: &Trainer, mut env: ToyEnv, n: usize, seed: u64) -> Result<Vec<Panel>> {
    let ToyEnv::TwoGoalPointmass(pm) = &env else {
        bail!("trajectories need the two_goal_pointmass environment");
    };
    let pm = pm.clone();
    let sampler = trainer.policy.sampler();
    let mut p = Panel::new("", "x", "y");
    let mut counts = [0usize; 3];
    for i in 0..n as u64 {
        let ep = rollout(&mut env, &sampler, sub_seed(seed, i))?;
        let path: Vec<(f64, f64)> = ep.states.iter().map(|s| (s[0], s[1])).collect();
        let end = ep.states.last().map(|s| [s[0], s[1]]).unwrap_or([0.0; 2]);
        let cluster = if ep.terminal {
            pm.nearest_goal(end).0
        } else {
            2
        };
        counts[cluster] += 1;
        let color = [PALETTE[0], PALETTE[1], PALETTE[5]][cluster];
        p.push(Series::new("", color, Style::Line, path).opacity(0.35));
    }
    let c = &pm.config;
    p.push(Series::new(
        "obstacle",
        "#000000",
        Style::Line,
        circle(c.obstacle_center, c.obstacle_radius),
    ));
    for (g, color) in c.goals.iter().zip([PALETTE[0], PALETTE[1]]) {
        p.push(Series::new(
            "",
            color,
            Style::Line,
            circle(*g, c.goal_radius),
        ));
    }
    p.title = format!(
        "{n} rollouts: left goal {}, right goal {}, unfinished {}",
        counts[0], counts[1], counts[2]
    );
    p.equal_aspect = true;
    Ok(vec![p])
}
