//! Declarative experiment documents (TOML).
//!
//! One document describes one experiment: its kind, the model or scenario it
//! runs on, the parameter grid and the seeds. Sections a kind does not use
//! are ignored. Every `preset` key names a built-in base that the remaining
//! keys of the section override.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::ProbabilityForm;
use crate::netsim::{
    LoadBalanceScenario, NoiseLaw, RoutingMetric, RoutingScenario, Scenario, Topology, TopologyDoc, WorkLaw,
};
use crate::syncmodel::{pair_count, SystemModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Obj1Sweep,
    Obj2Train,
    RateCurve,
    BoundCheck,
    TradeoffSweep,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Obj1Sweep => "obj1-sweep",
            ExperimentKind::Obj2Train => "obj2-train",
            ExperimentKind::RateCurve => "rate-curve",
            ExperimentKind::BoundCheck => "bound-check",
            ExperimentKind::TradeoffSweep => "tradeoff-sweep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    pub kind: Option<ExperimentKind>,
    pub seeds: Vec<u64>,
    pub output: Option<String>,
    pub model: Option<ModelConfig>,
    pub scenario: Option<ScenarioConfig>,
    pub learner: Option<LearnerSection>,
    pub grid: GridConfig,
    pub bounds: Option<BoundsConfig>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub preset: Option<String>,
    /// Domain sizes `n_i`; with `lambda`, rates are `λ_i = n_i · λ`.
    pub domain_sizes: Option<Vec<usize>>,
    pub lambda: Option<f64>,
    pub change_rates: Option<Vec<f64>>,
    pub slot_seconds: Option<f64>,
    /// Uniform pair cost.
    pub cost: Option<u64>,
    /// Per-pair costs in row-major ordered-pair order.
    pub pair_costs: Option<Vec<u64>>,
    pub budget: Option<u64>,
    pub max_rate: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub preset: Option<String>,
    /// `routing` or `load_balance`.
    pub kind: Option<String>,
    pub slot_seconds: Option<u32>,
    // routing
    pub topology: Option<TopologyDoc>,
    pub flip_prob: Option<f64>,
    pub packets_per_tick: Option<u32>,
    pub metric: Option<RoutingMetric>,
    // load balancing
    /// Arrival rate of the quieter switch; the other runs at `ratio` times it.
    pub base_rate: Option<f64>,
    pub arrival_rates: Option<[f64; 2]>,
    pub work: Option<WorkLaw>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerSection {
    pub budget: u64,
    pub sigma: usize,
    pub tau: u64,
    pub max_rate: u32,
    /// Slots per post-training evaluation.
    pub eval_slots: u64,
    /// Also run the full-scan greedy comparator.
    pub full_greedy: bool,
}

impl Default for LearnerSection {
    fn default() -> Self {
        Self {
            budget: 18,
            sigma: 2,
            tau: 4,
            max_rate: 15,
            eval_slots: 40,
            full_greedy: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub budgets: Vec<u64>,
    pub lambdas: Vec<f64>,
    pub eps: Vec<f64>,
    pub sigma_tau: Vec<(usize, u64)>,
    /// Homogeneous extra messages per slot.
    pub rate_levels: Vec<u32>,
    pub arrival_ratios: Vec<f64>,
    pub slots: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    pub controllers: usize,
    pub max_rate: u32,
    pub budget: u64,
    pub sigmas: Vec<usize>,
    pub tau: u64,
    pub noise: NoiseLaw,
    pub gamma: f64,
    pub runs: u64,
    pub probability_form: ProbabilityForm,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            controllers: 3,
            max_rate: 3,
            budget: 6,
            sigmas: vec![1, 3, 6],
            tau: 2,
            noise: NoiseLaw::None,
            gamma: 0.3,
            runs: 200,
            probability_form: ProbabilityForm::Statement,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let needs_seeds = matches!(
            self.kind,
            Some(ExperimentKind::Obj2Train | ExperimentKind::RateCurve | ExperimentKind::TradeoffSweep)
        );
        if needs_seeds && self.seeds.is_empty() {
            return Err(Error::Config("seeds must be listed explicitly".into()));
        }
        Ok(())
    }

    pub fn learner(&self) -> LearnerSection {
        self.learner.clone().unwrap_or_default()
    }
}

/// Resolved model plus the domain sizes needed for `λ_i = n_i λ` sweeps.
#[derive(Debug, Clone)]
pub struct ResolvedModel {
    pub model: SystemModel,
    pub domain_sizes: Option<Vec<usize>>,
}

impl ResolvedModel {
    /// Model with `λ_i = n_i · lambda`.
    pub fn with_lambda(&self, lambda: f64) -> Result<SystemModel> {
        let sizes = self
            .domain_sizes
            .as_ref()
            .ok_or_else(|| Error::Config("lambda sweeps need model.domain_sizes".into()))?;
        let rates = sizes.iter().map(|&n| n as f64 * lambda).collect();
        SystemModel::new(
            rates,
            self.model.slot_seconds(),
            self.model.pair_costs().to_vec(),
            self.model.budget(),
            self.model.max_rate(),
        )
    }
}

fn model_preset(name: &str) -> Result<ModelConfig> {
    match name {
        // the 16-node network's domains with λ = 0.05 per node
        "sdn16" => Ok(ModelConfig {
            preset: None,
            domain_sizes: Some(Topology::preset16().domain_sizes()),
            lambda: Some(0.05),
            change_rates: None,
            slot_seconds: Some(10.0),
            cost: Some(1),
            pair_costs: None,
            budget: Some(0),
            max_rate: Some(10),
        }),
        other => Err(Error::Config(format!("unknown model preset `{other}`"))),
    }
}

impl ModelConfig {
    fn merged(&self) -> Result<ModelConfig> {
        let base = match &self.preset {
            Some(p) => model_preset(p)?,
            None => ModelConfig::default(),
        };
        Ok(ModelConfig {
            preset: None,
            domain_sizes: self.domain_sizes.clone().or(base.domain_sizes),
            lambda: self.lambda.or(base.lambda),
            change_rates: self.change_rates.clone().or(base.change_rates),
            slot_seconds: self.slot_seconds.or(base.slot_seconds),
            cost: self.cost.or(base.cost),
            pair_costs: self.pair_costs.clone().or(base.pair_costs),
            budget: self.budget.or(base.budget),
            max_rate: self.max_rate.or(base.max_rate),
        })
    }

    pub fn resolve(&self) -> Result<ResolvedModel> {
        let m = self.merged()?;
        let rates = match (&m.change_rates, &m.domain_sizes, m.lambda) {
            (Some(r), _, _) => r.clone(),
            (None, Some(sizes), Some(lambda)) => sizes.iter().map(|&n| n as f64 * lambda).collect(),
            _ => {
                return Err(Error::Config(
                    "model needs change_rates, or domain_sizes with lambda".into(),
                ))
            }
        };
        let slot = m
            .slot_seconds
            .ok_or_else(|| Error::Config("model.slot_seconds missing".into()))?;
        let costs = match (&m.pair_costs, m.cost) {
            (Some(c), _) => c.clone(),
            (None, Some(c)) => vec![c; pair_count(rates.len())],
            (None, None) => vec![1; pair_count(rates.len())],
        };
        let max_rate = m
            .max_rate
            .ok_or_else(|| Error::Config("model.max_rate missing".into()))?;
        let model = SystemModel::new(rates, slot, costs, m.budget.unwrap_or(0), max_rate)?;
        Ok(ResolvedModel {
            model,
            domain_sizes: m.domain_sizes,
        })
    }
}

fn scenario_preset(name: &str) -> Result<ScenarioConfig> {
    match name {
        "routing16" => Ok(ScenarioConfig {
            kind: Some("routing".into()),
            slot_seconds: Some(32),
            flip_prob: Some(0.05),
            packets_per_tick: Some(4),
            metric: Some(RoutingMetric::Delivered),
            ..Default::default()
        }),
        "loadbalance" => Ok(ScenarioConfig {
            kind: Some("load_balance".into()),
            slot_seconds: Some(60),
            base_rate: Some(0.4),
            ..Default::default()
        }),
        other => Err(Error::Config(format!("unknown scenario preset `{other}`"))),
    }
}

impl ScenarioConfig {
    fn merged(&self) -> Result<ScenarioConfig> {
        let base = match &self.preset {
            Some(p) => scenario_preset(p)?,
            None => ScenarioConfig::default(),
        };
        Ok(ScenarioConfig {
            preset: None,
            kind: self.kind.clone().or(base.kind),
            slot_seconds: self.slot_seconds.or(base.slot_seconds),
            topology: self.topology.clone().or(base.topology),
            flip_prob: self.flip_prob.or(base.flip_prob),
            packets_per_tick: self.packets_per_tick.or(base.packets_per_tick),
            metric: self.metric.or(base.metric),
            base_rate: self.base_rate.or(base.base_rate),
            arrival_rates: self.arrival_rates.or(base.arrival_rates),
            work: self.work.or(base.work),
        })
    }

    /// Build the scenario. `ratio` scales the first switch's arrival rate in
    /// load-balancing scenarios that specify `base_rate`.
    pub fn resolve(&self, ratio: Option<f64>) -> Result<Scenario> {
        let m = self.merged()?;
        let slot = m
            .slot_seconds
            .ok_or_else(|| Error::Config("scenario.slot_seconds missing".into()))?;
        let scenario = match m.kind.as_deref() {
            Some("routing") => {
                let topology = match m.topology {
                    Some(doc) => Topology::try_from(doc)?,
                    None => Topology::preset16(),
                };
                Scenario::Routing(RoutingScenario {
                    flip_prob: m.flip_prob.unwrap_or(0.05),
                    packets_per_tick: m.packets_per_tick.unwrap_or(4),
                    ..RoutingScenario::new(topology, slot, m.metric.unwrap_or_default())
                })
            }
            Some("load_balance") => {
                let rates = match (m.arrival_rates, m.base_rate) {
                    (Some(r), _) if ratio.is_none() => r,
                    (_, Some(base)) => [base * ratio.unwrap_or(1.0), base],
                    (Some(r), None) => [r[0] * ratio.unwrap_or(1.0), r[1]],
                    (None, None) => {
                        return Err(Error::Config("load balancing needs arrival_rates or base_rate".into()))
                    }
                };
                Scenario::LoadBalance(LoadBalanceScenario {
                    work: m.work.unwrap_or_default(),
                    ..LoadBalanceScenario::new(rates, slot)
                })
            }
            Some(other) => return Err(Error::Config(format!("unknown scenario kind `{other}`"))),
            None => return Err(Error::Config("scenario.kind missing".into())),
        };
        scenario.validate()?;
        Ok(scenario)
    }
}
