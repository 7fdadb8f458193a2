use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::{Algorithm, ExperimentConfig};
use super::plot::{emit_plot, Axes, Series};
use crate::baselines::{MsfController, RandomController, RoundRobinController};
use crate::env::{run_controller, Controller, EvalStats, Scenario, TschEnv};
use crate::error::{Error, Result};
use crate::neuro::Checkpoint;
use crate::ppg::{evaluate, train, TrainReport};
use crate::rng::derive_seed;

pub const CONVERGENCE_HEADER: &str =
    "algorithm,seed,iteration,env_steps,mean_reward,policy_loss,value_loss,aux_loss,kl,clip_fraction";
pub const SCALING_HEADER: &str =
    "algorithm,n_nodes,seed,mean_throughput,ci_lo,ci_hi,mean_utility,violations";

/// Linear-interpolation quantile of an unsorted sample.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

fn learners(cfg: &ExperimentConfig) -> Vec<Algorithm> {
    cfg.algorithms().into_iter().filter(|a| a.is_learner()).collect()
}

/// One trained learner of a convergence run.
#[derive(Debug, Clone)]
pub struct ConvergenceRun {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub report: TrainReport,
}

/// Trains every learner for every seed on the configured scenario and writes
/// per-run curves, the combined curve table, its median/IQR summary, the
/// final checkpoints and an SVG of the median curves.
pub fn run_convergence(cfg: &ExperimentConfig, out: &Path, seed_offset: u64) -> Result<Vec<ConvergenceRun>> {
    let algos = learners(cfg);
    if algos.is_empty() {
        return Err(Error::Config("convergence needs at least one learner among the algorithms".into()));
    }
    let scenario = cfg.scenario.scenario()?;
    fs::create_dir_all(out)?;
    let mut runs = Vec::new();
    for &algorithm in &algos {
        let trainer = cfg.trainer_for(algorithm).expect("learner");
        for &base in &cfg.sweep.seeds {
            let seed = base + seed_offset;
            log::info!("convergence: training {} with seed {seed}", algorithm.name());
            let report = train(&mut TschEnv::new(scenario.clone())?, &trainer, seed)?;
            let stem = format!("{}_seed{seed}", algorithm.name());
            write_file(&out.join("curves").join(format!("{stem}.csv")), &report.to_csv())?;
            write_file(&out.join("checkpoints").join(format!("{stem}.ckpt")), &report.final_checkpoint.to_text())?;
            runs.push(ConvergenceRun { algorithm, seed, report });
        }
    }

    let mut combined = format!("{CONVERGENCE_HEADER}\n");
    for run in &runs {
        for r in &run.report.records {
            let l = &r.losses;
            writeln!(
                combined,
                "{},{},{},{},{},{},{},{},{},{}",
                run.algorithm.name(),
                run.seed,
                r.iteration,
                r.env_steps,
                r.mean_reward,
                l.policy_loss,
                l.value_loss,
                l.aux_loss,
                l.kl,
                l.clip_fraction
            )
            .unwrap();
        }
    }
    write_file(&out.join("convergence.csv"), &combined)?;

    let mut summary = String::from("algorithm,iteration,env_steps,median_reward,q1_reward,q3_reward\n");
    let mut series = Vec::new();
    for &algorithm in &algos {
        let mine: Vec<&TrainReport> = runs.iter().filter(|r| r.algorithm == algorithm).map(|r| &r.report).collect();
        let n_iter = mine.iter().map(|r| r.records.len()).min().unwrap_or(0);
        let mut s = Series { label: algorithm.name().into(), x: Vec::new(), y: Vec::new() };
        for i in 0..n_iter {
            let rewards: Vec<f64> = mine.iter().map(|r| r.records[i].mean_reward).collect();
            let steps = mine[0].records[i].env_steps;
            let med = median(&rewards);
            writeln!(
                summary,
                "{},{i},{steps},{med},{},{}",
                algorithm.name(),
                quantile(&rewards, 0.25),
                quantile(&rewards, 0.75)
            )
            .unwrap();
            s.x.push(steps as f64);
            s.y.push(med);
        }
        if !s.x.is_empty() {
            series.push(s);
        }
    }
    write_file(&out.join("convergence_summary.csv"), &summary)?;
    if !series.is_empty() {
        let axes = Axes {
            title: "Training convergence (median over seeds)".into(),
            x_label: "environment steps (slotframes)".into(),
            y_label: "mean reward per step".into(),
        };
        write_file(&out.join("convergence.svg"), &emit_plot(&series, &axes, "convergence_summary.csv")?)?;
    }
    Ok(runs)
}

/// One evaluated (algorithm, node count, seed) cell of a scaling sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub algorithm: Algorithm,
    pub n_nodes: usize,
    pub seed: u64,
    pub stats: EvalStats,
}

impl ScalingRow {
    fn csv(&self, n_eval: usize) -> String {
        let (lo, hi) = self.stats.throughput.ci95(n_eval);
        format!(
            "{},{},{},{},{lo},{hi},{},{}",
            self.algorithm.name(),
            self.n_nodes,
            self.seed,
            self.stats.throughput.mean,
            self.stats.utility.mean,
            self.stats.violations.mean
        )
    }
}

/// Seed of the evaluation episodes for training seed `seed`; shared by all
/// algorithms so they face the same traffic.
fn evaluation_seed(cfg: &ExperimentConfig, seed: u64) -> u64 {
    derive_seed(cfg.sweep.eval_seed, &format!("seed/{seed}"))
}

fn baseline(cfg: &ExperimentConfig, algorithm: Algorithm, seed: u64) -> Box<dyn Controller> {
    match algorithm {
        Algorithm::Msf => Box::new(MsfController::new(cfg.msf, seed)),
        Algorithm::Random => Box::new(RandomController::new(seed)),
        Algorithm::RoundRobin => Box::new(RoundRobinController),
        Algorithm::Ppg | Algorithm::Ppo => unreachable!("learners are trained, not instantiated"),
    }
}

/// Evaluates one algorithm on `scenario`, training it first when it learns.
fn evaluate_algorithm(
    cfg: &ExperimentConfig,
    scenario: &Scenario,
    algorithm: Algorithm,
    seed: u64,
    checkpoint_path: Option<&Path>,
) -> Result<EvalStats> {
    let eval_seed = evaluation_seed(cfg, seed);
    match cfg.trainer_for(algorithm) {
        Some(trainer) => {
            let report = train(&mut TschEnv::new(scenario.clone())?, &trainer, seed)?;
            if let Some(p) = checkpoint_path {
                write_file(p, &report.final_checkpoint.to_text())?;
            }
            evaluate(&report.final_checkpoint, scenario, cfg.sweep.n_eval, eval_seed)
        }
        None => run_controller(scenario, baseline(cfg, algorithm, seed).as_mut(), cfg.sweep.n_eval, eval_seed),
    }
}

/// Evaluated throughput against node count for every algorithm and seed.
pub fn run_scaling(cfg: &ExperimentConfig, out: &Path, seed_offset: u64) -> Result<Vec<ScalingRow>> {
    fs::create_dir_all(out)?;
    let mut rows = Vec::new();
    for &algorithm in &cfg.algorithms() {
        for &n_nodes in &cfg.sweep.node_counts {
            let scenario = cfg.scenario.build(n_nodes)?;
            for &base in &cfg.sweep.seeds {
                let seed = base + seed_offset;
                log::info!("scaling: {} with {n_nodes} nodes, seed {seed}", algorithm.name());
                let ckpt = out
                    .join("checkpoints")
                    .join(format!("{}_n{n_nodes}_seed{seed}.ckpt", algorithm.name()));
                let stats = evaluate_algorithm(cfg, &scenario, algorithm, seed, Some(ckpt.as_path()))?;
                rows.push(ScalingRow { algorithm, n_nodes, seed, stats });
            }
        }
    }
    rows.sort_by(|a, b| (a.algorithm, a.n_nodes, a.seed).cmp(&(b.algorithm, b.n_nodes, b.seed)));

    let mut csv = format!("{SCALING_HEADER}\n");
    for r in &rows {
        csv.push_str(&r.csv(cfg.sweep.n_eval));
        csv.push('\n');
    }
    write_file(&out.join("scaling.csv"), &csv)?;

    let mut grouped: BTreeMap<(Algorithm, usize), Vec<f64>> = BTreeMap::new();
    for r in &rows {
        grouped.entry((r.algorithm, r.n_nodes)).or_default().push(r.stats.throughput.mean);
    }
    let mut summary = String::from("algorithm,n_nodes,median_throughput,q1_throughput,q3_throughput\n");
    let mut series: Vec<Series> = Vec::new();
    for ((algorithm, n), th) in &grouped {
        let med = median(th);
        writeln!(summary, "{},{n},{med},{},{}", algorithm.name(), quantile(th, 0.25), quantile(th, 0.75)).unwrap();
        match series.last_mut() {
            Some(s) if s.label == algorithm.name() => {
                s.x.push(*n as f64);
                s.y.push(med);
            }
            _ => series.push(Series { label: algorithm.name().into(), x: vec![*n as f64], y: vec![med] }),
        }
    }
    write_file(&out.join("scaling_summary.csv"), &summary)?;
    let axes = Axes {
        title: "Evaluated throughput against network size (median over seeds)".into(),
        x_label: "number of nodes".into(),
        y_label: "throughput (expected successes per slotframe)".into(),
    };
    write_file(&out.join("scaling.svg"), &emit_plot(&series, &axes, "scaling_summary.csv")?)?;
    Ok(rows)
}

/// One line of an evaluation table.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRow {
    /// Algorithm name, or the checkpoint file stem for stored policies.
    pub source: String,
    pub n_nodes: usize,
    pub stats: EvalStats,
}

pub const EVALUATION_HEADER: &str =
    "source,n_nodes,mean_throughput,ci_lo,ci_hi,mean_utility,mean_efficiency,violations";

/// Greedy evaluation of stored checkpoints next to every heuristic of the
/// sweep. With no explicit checkpoints, every `.ckpt` file under
/// `<out>/checkpoints` is used.
pub fn run_evaluate(
    cfg: &ExperimentConfig,
    out: &Path,
    checkpoints: &[PathBuf],
    seed_offset: u64,
) -> Result<Vec<EvaluationRow>> {
    let scenario = cfg.scenario.scenario()?;
    let mut paths = checkpoints.to_vec();
    if paths.is_empty() {
        let dir = out.join("checkpoints");
        if dir.is_dir() {
            for entry in fs::read_dir(&dir)? {
                let p = entry?.path();
                if p.extension().is_some_and(|e| e == "ckpt") {
                    paths.push(p);
                }
            }
        }
        paths.sort();
    }
    let eval_seed = derive_seed(cfg.sweep.eval_seed + seed_offset, "evaluate");
    let mut rows = Vec::new();
    for p in &paths {
        let ckpt = Checkpoint::load(p)?;
        let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        match evaluate(&ckpt, &scenario, cfg.sweep.n_eval, eval_seed) {
            Ok(stats) => rows.push(EvaluationRow { source: name, n_nodes: scenario.network.n_nodes, stats }),
            // Checkpoints from other network sizes share the directory after a sweep.
            Err(Error::Shape(msg)) if checkpoints.is_empty() => log::info!("skipping {}: {msg}", p.display()),
            Err(e) => return Err(e),
        }
    }
    for algorithm in cfg.algorithms().into_iter().filter(|a| !a.is_learner()) {
        let stats = run_controller(
            &scenario,
            baseline(cfg, algorithm, cfg.sweep.seeds[0] + seed_offset).as_mut(),
            cfg.sweep.n_eval,
            eval_seed,
        )?;
        rows.push(EvaluationRow { source: algorithm.name().into(), n_nodes: scenario.network.n_nodes, stats });
    }
    let mut csv = format!("{EVALUATION_HEADER}\n");
    for r in &rows {
        let (lo, hi) = r.stats.throughput.ci95(cfg.sweep.n_eval);
        writeln!(
            csv,
            "{},{},{},{lo},{hi},{},{},{}",
            r.source,
            r.n_nodes,
            r.stats.throughput.mean,
            r.stats.utility.mean,
            r.stats.efficiency.mean,
            r.stats.violations.mean
        )
        .unwrap();
    }
    write_file(&out.join("evaluation.csv"), &csv)?;
    Ok(rows)
}
