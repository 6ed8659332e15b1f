use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, ExperimentKind, LearnerSection};
use super::table::{Params, ResultRow, ResultTable};
use crate::error::{Error, Result};
use crate::learn::{
    expected_bound, full_greedy, high_prob_bound, homogeneous_policy, homogeneous_unit_policy, measure_mu,
    stochastic_greedy, training_time, GroundTruth, LearnerConfig, LearnerRun,
};
use crate::mck::{build_mck_instance, decode_policy, solve_exact_dp, solve_fptas};
use crate::netsim::trace::SlotTraceRow;
use crate::netsim::{as_oracle, evaluate_policy, mean_and_stddev, Scenario, SyntheticOracle};
use crate::syncmodel::{consistency_level, pair_count, policy_cost, SyncPolicy, SystemModel};

/// Evaluation runs use a seed disjoint from the training seed.
pub const EVAL_SEED_OFFSET: u64 = 1 << 40;

/// Largest `C(C−1)·R` the bound check will brute-force.
pub const BOUND_CHECK_MAX_GROUND_SET: usize = 20;

#[derive(Debug, Clone, Serialize)]
pub struct TrainingTrace {
    pub params: String,
    pub seed: u64,
    pub run: LearnerRun,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub table: ResultTable,
    pub traces: Vec<TrainingTrace>,
    pub slot_trace: Vec<SlotTraceRow>,
}

impl ExperimentOutput {
    pub fn traces_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.traces)?)
    }
}

#[derive(Default)]
struct CellOutput {
    rows: Vec<ResultRow>,
    traces: Vec<TrainingTrace>,
    slot_trace: Vec<SlotTraceRow>,
}

/// Run `cells` in parallel and gather their output in cell order. A failing
/// cell contributes a single error row.
fn run_cells<C, F>(experiment: &str, cells: &[C], params: impl Fn(&C) -> Params + Sync, f: F) -> Vec<CellOutput>
where
    C: Sync,
    F: Fn(&C, &Params) -> Result<CellOutput> + Sync,
{
    cells
        .par_iter()
        .map(|cell| {
            let p = params(cell);
            f(cell, &p).unwrap_or_else(|e| CellOutput {
                rows: vec![ResultRow::failed(experiment, &p, "cell", e)],
                ..Default::default()
            })
        })
        .collect()
}

fn gather(out: &mut ExperimentOutput, cells: Vec<CellOutput>) {
    for c in cells {
        out.table.extend(c.rows);
        out.traces.extend(c.traces);
        out.slot_trace.extend(c.slot_trace);
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let kind = cfg
        .kind
        .ok_or_else(|| Error::Config("experiment kind missing".into()))?;
    match kind {
        ExperimentKind::Obj1Sweep => run_obj1_sweep(cfg),
        ExperimentKind::Obj2Train => run_obj2_train(cfg),
        ExperimentKind::RateCurve => run_rate_curve(cfg),
        ExperimentKind::BoundCheck => run_bound_check(cfg),
        ExperimentKind::TradeoffSweep => run_tradeoff_sweep(cfg),
    }
}

fn experiment_id(cfg: &ExperimentConfig, kind: ExperimentKind) -> String {
    if cfg.id.is_empty() {
        kind.name().to_string()
    } else {
        cfg.id.clone()
    }
}

/// Obj-1 optimum (exact and approximate) against the homogeneous baseline for
/// every `(λ, B)` in the grid.
pub fn run_obj1_sweep(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let id = experiment_id(cfg, ExperimentKind::Obj1Sweep);
    let resolved = cfg
        .model
        .as_ref()
        .ok_or_else(|| Error::Config("obj1-sweep needs a [model] section".into()))?
        .resolve()?;
    let budgets = if cfg.grid.budgets.is_empty() {
        vec![resolved.model.budget()]
    } else {
        cfg.grid.budgets.clone()
    };
    let lambdas: Vec<Option<f64>> = if cfg.grid.lambdas.is_empty() {
        vec![None]
    } else {
        cfg.grid.lambdas.iter().copied().map(Some).collect()
    };
    let eps = if cfg.grid.eps.is_empty() {
        vec![0.1]
    } else {
        cfg.grid.eps.clone()
    };
    let cells: Vec<(Option<f64>, u64)> = lambdas
        .iter()
        .flat_map(|&l| budgets.iter().map(move |&b| (l, b)))
        .collect();
    let params = |&(l, b): &(Option<f64>, u64)| {
        let p = match l {
            Some(l) => Params::new().with("lambda", l),
            None => Params::new(),
        };
        p.with("B", b)
    };
    let results = run_cells(&id, &cells, params, |&(lambda, budget), p| {
        let base = match lambda {
            Some(l) => resolved.with_lambda(l)?,
            None => resolved.model.clone(),
        };
        let model = base.with_budget(budget);
        let inst = build_mck_instance(&model);
        let exact = decode_policy(&inst, &solve_exact_dp(&inst))?;
        let homo = homogeneous_policy(&model);
        let mut rows = vec![
            ResultRow::value(&id, p, "omega_baseline", model.baseline_omega()),
            ResultRow::value(&id, p, "omega_dp", consistency_level(&model, &exact)?.omega),
            ResultRow::value(&id, p, "cost_dp", policy_cost(&model, &exact)? as f64),
        ];
        for &e in &eps {
            let pe = p.clone().with("eps", e);
            match solve_fptas(&inst, e).and_then(|s| decode_policy(&inst, &s)) {
                Ok(x) => rows.push(ResultRow::value(
                    &id,
                    &pe,
                    "omega_fptas",
                    consistency_level(&model, &x)?.omega,
                )),
                Err(err) => rows.push(ResultRow::failed(&id, &pe, "omega_fptas", err)),
            }
        }
        rows.push(ResultRow::value(
            &id,
            p,
            "omega_homogeneous",
            consistency_level(&model, &homo)?.omega,
        ));
        rows.push(ResultRow::value(
            &id,
            p,
            "cost_homogeneous",
            policy_cost(&model, &homo)? as f64,
        ));
        Ok(CellOutput {
            rows,
            ..Default::default()
        })
    });
    let mut out = ExperimentOutput::default();
    gather(&mut out, results);
    Ok(out)
}

fn scenario_grid(cfg: &ExperimentConfig) -> Result<Vec<(Option<f64>, Scenario)>> {
    let sc = cfg
        .scenario
        .as_ref()
        .ok_or_else(|| Error::Config("experiment needs a [scenario] section".into()))?;
    if cfg.grid.arrival_ratios.is_empty() {
        Ok(vec![(None, sc.resolve(None)?)])
    } else {
        cfg.grid
            .arrival_ratios
            .iter()
            .map(|&r| Ok((Some(r), sc.resolve(Some(r))?)))
            .collect()
    }
}

fn with_ratio(p: Params, ratio: Option<f64>) -> Params {
    match ratio {
        Some(r) => p.with("ratio", r),
        None => p,
    }
}

struct Trained {
    run: LearnerRun,
    slot_trace: Vec<SlotTraceRow>,
    eval: f64,
}

fn train_and_evaluate(
    scenario: &Scenario,
    learner: &LearnerConfig,
    eval_slots: u64,
    full_scan: bool,
) -> Result<Trained> {
    let mut oracle = as_oracle(scenario, learner.seed)?;
    let run = if full_scan {
        full_greedy(learner, &mut oracle)?
    } else {
        stochastic_greedy(learner, &mut oracle)?
    };
    let slot_trace = oracle
        .history()
        .iter()
        .map(|(slot, hash, o)| SlotTraceRow::new(learner.seed, *slot, *hash, o))
        .collect();
    let eval = evaluate_policy(
        scenario,
        &run.final_policy,
        eval_slots,
        &[learner.seed + EVAL_SEED_OFFSET],
    )?
    .mean;
    Ok(Trained { run, slot_trace, eval })
}

fn evaluate_single(scenario: &Scenario, policy: &SyncPolicy, slots: u64, seed: u64) -> Result<f64> {
    Ok(evaluate_policy(scenario, policy, slots, &[seed + EVAL_SEED_OFFSET])?.mean)
}

fn learner_config(
    scenario: &Scenario,
    l: &LearnerSection,
    budget: u64,
    sigma: usize,
    tau: u64,
    seed: u64,
) -> LearnerConfig {
    LearnerConfig {
        controllers: scenario.controllers(),
        sigma,
        tau,
        budget,
        max_rate: l.max_rate,
        seed,
    }
}

/// Summary rows comparing per-seed samples of two policies.
fn comparison_rows(id: &str, p: &Params, names: [&str; 2], a: &[f64], b: &[f64]) -> Vec<ResultRow> {
    let n = a.len().min(b.len()) as f64;
    let (ma, sa) = mean_and_stddev(a);
    let (mb, sb) = mean_and_stddev(b);
    let pooled = ((sa * sa + sb * sb) / n).sqrt();
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (md, sd) = mean_and_stddev(&diffs);
    vec![
        ResultRow::value(id, p, &format!("mean_{}", names[0]), ma).with_dispersion(sa),
        ResultRow::value(id, p, &format!("mean_{}", names[1]), mb).with_dispersion(sb),
        ResultRow::value(id, p, "pooled_se", pooled),
        ResultRow::value(id, p, "paired_difference", md).with_dispersion(sd / n.sqrt()),
    ]
}

/// Train the learner on the scenario for every seed, then evaluate the
/// learned policy and the homogeneous baseline on matched evaluation seeds.
pub fn run_obj2_train(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let id = experiment_id(cfg, ExperimentKind::Obj2Train);
    let l = cfg.learner();
    let scenarios = scenario_grid(cfg)?;
    let budgets = if cfg.grid.budgets.is_empty() {
        vec![l.budget]
    } else {
        cfg.grid.budgets.clone()
    };
    let mut groups = Vec::new();
    for (ratio, sc) in &scenarios {
        for &b in &budgets {
            groups.push((*ratio, sc, b));
        }
    }
    let cells: Vec<(usize, u64)> = (0..groups.len())
        .flat_map(|g| cfg.seeds.iter().map(move |&s| (g, s)))
        .collect();
    let params = |&(g, seed): &(usize, u64)| {
        let (ratio, _, b) = groups[g];
        with_ratio(Params::new(), ratio).with("B", b).with("seed", seed)
    };
    let results = run_cells(&id, &cells, params, |&(g, seed), p| {
        let (_, scenario, budget) = groups[g];
        let lc = learner_config(scenario, &l, budget, l.sigma, l.tau, seed);
        let t = train_and_evaluate(scenario, &lc, l.eval_slots, false)?;
        let homo = homogeneous_unit_policy(scenario.controllers(), budget, l.max_rate);
        let homo_eval = evaluate_single(scenario, &homo, l.eval_slots, seed)?;
        let mut rows = vec![ResultRow::value(&id, p, "slots_used", t.run.slots_used as f64)];
        for (slot, _, psi) in t.run.slot_trace() {
            rows.push(ResultRow::value(&id, &p.clone().with("slot", slot), "slot_psi", psi));
        }
        for it in &t.run.iterations {
            let w = it.winner();
            let pi = p
                .clone()
                .with("iteration", it.index)
                .with("pair", format!("{}-{}", w.source, w.target));
            rows.push(ResultRow::value(&id, &pi, "winner_estimate", w.estimate));
        }
        let rates: Vec<String> = t.run.final_policy.rates().iter().map(u32::to_string).collect();
        rows.push(ResultRow::value(
            &id,
            &p.clone().with("rates", rates.join("/")),
            "final_total_rate",
            t.run.final_policy.total_rate() as f64,
        ));
        rows.push(ResultRow::value(&id, p, "eval_sg", t.eval));
        rows.push(ResultRow::value(&id, p, "eval_homogeneous", homo_eval));
        if l.full_greedy {
            let fg = train_and_evaluate(scenario, &lc, l.eval_slots, true)?;
            rows.push(ResultRow::value(
                &id,
                p,
                "slots_used_full_greedy",
                fg.run.slots_used as f64,
            ));
            rows.push(ResultRow::value(&id, p, "eval_full_greedy", fg.eval));
        }
        Ok(CellOutput {
            rows,
            traces: vec![TrainingTrace {
                params: p.render(),
                seed,
                run: t.run,
            }],
            slot_trace: t.slot_trace,
        })
    });
    let mut out = ExperimentOutput::default();
    let per_group = cfg.seeds.len();
    let mut summaries = Vec::new();
    for (g, chunk) in results.chunks(per_group.max(1)).enumerate() {
        let (ratio, _, budget) = groups[g];
        let pick = |metric: &str| -> Vec<f64> {
            chunk
                .iter()
                .flat_map(|c| c.rows.iter())
                .filter(|r| r.metric == metric)
                .filter_map(|r| r.value)
                .collect()
        };
        let sg = pick("eval_sg");
        let homo = pick("eval_homogeneous");
        let p = with_ratio(Params::new(), ratio).with("B", budget);
        if sg.len() == per_group && homo.len() == per_group && per_group > 0 {
            summaries.extend(comparison_rows(&id, &p, ["sg", "homogeneous"], &sg, &homo));
            let fg = pick("eval_full_greedy");
            if fg.len() == per_group {
                let (m, s) = mean_and_stddev(&fg);
                summaries.push(ResultRow::value(&id, &p, "mean_full_greedy", m).with_dispersion(s));
            }
        } else {
            summaries.push(ResultRow::failed(&id, &p, "summary", "some cells failed"));
        }
    }
    gather(&mut out, results);
    out.table.extend(summaries);
    Ok(out)
}

/// Performance of homogeneous policies at each extra-message level.
pub fn run_rate_curve(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let id = experiment_id(cfg, ExperimentKind::RateCurve);
    let l = cfg.learner();
    let slots = cfg.grid.slots.unwrap_or(l.eval_slots);
    let scenarios = scenario_grid(cfg)?;
    let levels = if cfg.grid.rate_levels.is_empty() {
        return Err(Error::Config("rate-curve needs grid.rate_levels".into()));
    } else {
        cfg.grid.rate_levels.clone()
    };
    let cells: Vec<(usize, u32)> = (0..scenarios.len())
        .flat_map(|g| levels.iter().map(move |&x| (g, x)))
        .collect();
    let params = |&(g, x): &(usize, u32)| {
        let s = scenarios[g].1.slot_seconds();
        with_ratio(Params::new(), scenarios[g].0)
            .with("rate", x)
            .with("msgs_per_sec", f64::from(x + 1) / f64::from(s))
    };
    let results = run_cells(&id, &cells, params, |&(g, x), p| {
        let sc = &scenarios[g].1;
        let policy = SyncPolicy::uniform(sc.controllers(), x);
        let eval = evaluate_policy(sc, &policy, slots, &cfg.seeds)?;
        let se = eval.std_error();
        let mut rows = vec![
            ResultRow::value(&id, p, "psi", eval.mean).with_dispersion(eval.stddev),
            ResultRow::value(&id, p, "psi_se", se),
        ];
        for (seed, v) in cfg.seeds.iter().zip(&eval.per_seed) {
            rows.push(ResultRow::value(&id, &p.clone().with("seed", seed), "psi_seed", *v));
        }
        Ok(CellOutput {
            rows,
            ..Default::default()
        })
    });
    let mut out = ExperimentOutput::default();
    gather(&mut out, results);
    Ok(out)
}

/// Training time against learned-policy performance over a `(σ, τ)` grid.
pub fn run_tradeoff_sweep(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let id = experiment_id(cfg, ExperimentKind::TradeoffSweep);
    let l = cfg.learner();
    let (ratio, scenario) = scenario_grid(cfg)?
        .into_iter()
        .next()
        .expect("scenario grid is never empty");
    let grid = if cfg.grid.sigma_tau.is_empty() {
        vec![(l.sigma, l.tau)]
    } else {
        cfg.grid.sigma_tau.clone()
    };
    let mut settings: Vec<(Option<(usize, u64)>, u64)> = grid.iter().map(|&st| (Some(st), st.1)).collect();
    if l.full_greedy {
        let mut taus: Vec<u64> = grid.iter().map(|&(_, t)| t).collect();
        taus.sort_unstable();
        taus.dedup();
        settings.extend(taus.into_iter().map(|t| (None, t)));
    }
    let setting_params = |s: &(Option<(usize, u64)>, u64)| {
        let p = with_ratio(Params::new(), ratio);
        match s.0 {
            Some((sigma, tau)) => p.with("algo", "sg").with("sigma", sigma).with("tau", tau),
            None => p.with("algo", "full_greedy").with("tau", s.1),
        }
    };
    let cells: Vec<(usize, u64)> = (0..settings.len())
        .flat_map(|g| cfg.seeds.iter().map(move |&s| (g, s)))
        .collect();
    let results = run_cells(
        &id,
        &cells,
        |&(g, seed)| setting_params(&settings[g]).with("seed", seed),
        |&(g, seed), p| {
            let (st, tau) = settings[g];
            let sigma = st.map_or(1, |(s, _)| s);
            let lc = learner_config(&scenario, &l, l.budget, sigma, tau, seed);
            let t = train_and_evaluate(&scenario, &lc, l.eval_slots, st.is_none())?;
            Ok(CellOutput {
                rows: vec![
                    ResultRow::value(&id, p, "slots_used", t.run.slots_used as f64),
                    ResultRow::value(&id, p, "eval", t.eval),
                ],
                ..Default::default()
            })
        },
    );
    let per = cfg.seeds.len().max(1);
    let mut summaries = Vec::new();
    for (g, chunk) in results.chunks(per).enumerate() {
        let p = setting_params(&settings[g]);
        let evals: Vec<f64> = chunk
            .iter()
            .flat_map(|c| c.rows.iter())
            .filter(|r| r.metric == "eval")
            .filter_map(|r| r.value)
            .collect();
        let slots: Vec<f64> = chunk
            .iter()
            .flat_map(|c| c.rows.iter())
            .filter(|r| r.metric == "slots_used")
            .filter_map(|r| r.value)
            .collect();
        if evals.len() != per || cfg.seeds.is_empty() {
            summaries.push(ResultRow::failed(&id, &p, "summary", "some cells failed"));
            continue;
        }
        if let Some((sigma, tau)) = settings[g].0 {
            summaries.push(ResultRow::value(
                &id,
                &p,
                "training_time",
                training_time(sigma as u64, tau, l.budget) as f64,
            ));
        }
        let (ms, _) = mean_and_stddev(&slots);
        let (m, s) = mean_and_stddev(&evals);
        summaries.push(ResultRow::value(&id, &p, "mean_slots_used", ms));
        summaries.push(ResultRow::value(&id, &p, "mean_eval", m).with_dispersion(s));
    }
    let mut out = ExperimentOutput::default();
    gather(&mut out, results);
    out.table.extend(summaries);
    Ok(out)
}

/// Random coverage objective for run `seed`, with scales in `[0.5, 1.5]` and
/// decays in `[0.2, 0.8]`.
pub fn bound_check_oracle(controllers: usize, noise: crate::netsim::NoiseLaw, seed: u64) -> Result<SyntheticOracle> {
    let n = pair_count(controllers);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let decay: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..0.8)).collect();
    SyntheticOracle::coverage(scale, decay, noise, seed)
}

/// Empirical approximation ratios of the learner on synthetic objectives
/// against brute-forced optima, next to the analytical guarantees.
pub fn run_bound_check(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let id = experiment_id(cfg, ExperimentKind::BoundCheck);
    let b = cfg
        .bounds
        .clone()
        .ok_or_else(|| Error::Config("bound-check needs a [bounds] section".into()))?;
    let seeds: Vec<u64> = if cfg.seeds.is_empty() {
        (0..b.runs).collect()
    } else {
        cfg.seeds.clone()
    };
    let ground = pair_count(b.controllers) * b.max_rate as usize;
    let mu = b.noise.mean().min(1.0);
    let params = |&sigma: &usize| Params::new().with("sigma", sigma);
    let results = run_cells(&id, &b.sigmas, params, |&sigma, p| {
        if ground > BOUND_CHECK_MAX_GROUND_SET {
            return Err(Error::InstanceTooLarge {
                size: ground as u128,
                cap: BOUND_CHECK_MAX_GROUND_SET as u128,
            });
        }
        let mut ratios = Vec::with_capacity(seeds.len());
        let mut mus = Vec::new();
        for &seed in &seeds {
            let mut oracle = bound_check_oracle(b.controllers, b.noise, seed)?;
            let (_, opt) = oracle.brute_force_optimum(b.budget, b.max_rate)?;
            let lc = LearnerConfig {
                controllers: b.controllers,
                sigma,
                tau: b.tau,
                budget: b.budget,
                max_rate: b.max_rate,
                seed,
            };
            let run = stochastic_greedy(&lc, &mut oracle)?;
            ratios.push(oracle.true_value(&run.final_policy) / opt);
            if let Ok(m) = measure_mu(&run, &oracle) {
                mus.push(m.mu);
            }
        }
        let (factor, prob) = high_prob_bound(
            b.controllers,
            b.budget,
            b.max_rate,
            sigma,
            b.tau,
            mu,
            b.gamma,
            b.probability_form,
        );
        let violations = ratios.iter().filter(|&&r| r < factor).count();
        let (mean, sd) = mean_and_stddev(&ratios);
        let mut rows = vec![
            ResultRow::value(&id, p, "mean_ratio", mean).with_dispersion(sd),
            ResultRow::value(
                &id,
                p,
                "min_ratio",
                ratios.iter().copied().fold(f64::INFINITY, f64::min),
            ),
            ResultRow::value(
                &id,
                p,
                "expected_bound",
                expected_bound(b.controllers, b.budget, b.max_rate, sigma, mu),
            ),
            ResultRow::value(&id, p, "high_prob_factor", factor),
            ResultRow::value(&id, p, "high_prob_probability", prob),
            ResultRow::value(&id, p, "violation_frequency", violations as f64 / ratios.len() as f64),
            ResultRow::value(&id, p, "violation_allowance", 1.0 - prob),
            ResultRow::value(&id, p, "runs", ratios.len() as f64),
        ];
        if !mus.is_empty() {
            let (m, s) = mean_and_stddev(&mus);
            rows.push(ResultRow::value(&id, p, "mu_measured", m).with_dispersion(s));
        }
        Ok(CellOutput {
            rows,
            ..Default::default()
        })
    });
    let mut out = ExperimentOutput::default();
    gather(&mut out, results);
    Ok(out)
}

/// Obj-1 model helper shared with the CLI: the homogeneous and optimal
/// consistency for one model.
pub fn obj1_pair(model: &SystemModel) -> Result<(SyncPolicy, f64, f64)> {
    let inst = build_mck_instance(model);
    let x = decode_policy(&inst, &solve_exact_dp(&inst))?;
    let opt = consistency_level(model, &x)?.omega;
    let homo = consistency_level(model, &homogeneous_policy(model))?.omega;
    Ok((x, opt, homo))
}
