//! Multiple-choice knapsack (MCK) formulation of the consistency objective.
//!
//! Every ordered controller pair becomes one class. Item `l` of the class for
//! pair `(i, j)` means "send `l` extra messages from `i` to `j`": it weighs
//! `b_ij · l` and is worth `e^{-λ_i s/(l+1)} − e^{-λ_i s}`, the consistency
//! gained over the mandatory message alone. Taking no item from a class means
//! rate zero.
//!
//! Tie-breaking is shared by every solver: among value-maximal selections,
//! prefer the lowest total weight, then the lexicographically smallest choice
//! vector (class 0 most significant, "no item" before item 0 before item 1).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::syncmodel::{consistency_term, pair_at, pair_count, SyncPolicy, SystemModel};

/// Values closer than this are considered tied.
const VALUE_TIE: f64 = 1e-12;

/// Default cap on `Π (|class| + 1)` for [`solve_brute_force`].
pub const DEFAULT_BRUTE_FORCE_CAP: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ItemTag {
    pub source: usize,
    pub target: usize,
    pub level: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MckItem {
    pub weight: u64,
    pub value: f64,
    /// Set when the item was generated from a [`SystemModel`].
    pub tag: Option<ItemTag>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MckInstance {
    capacity: u64,
    classes: Vec<Vec<MckItem>>,
    /// Controller count when classes correspond to ordered pairs.
    controllers: Option<usize>,
}

impl MckInstance {
    pub fn new(capacity: u64, classes: Vec<Vec<MckItem>>) -> Result<Self> {
        for (k, class) in classes.iter().enumerate() {
            for item in class {
                if item.weight == 0 {
                    return Err(Error::invalid(format!("class {k}: item weight must be >= 1")));
                }
                if !(item.value.is_finite() && item.value >= 0.0) {
                    return Err(Error::invalid(format!(
                        "class {k}: item value {} must be finite and >= 0",
                        item.value
                    )));
                }
            }
        }
        Ok(Self {
            capacity,
            classes,
            controllers: None,
        })
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn classes(&self) -> &[Vec<MckItem>] {
        &self.classes
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn controllers(&self) -> Option<usize> {
        self.controllers
    }

    pub fn with_capacity(&self, capacity: u64) -> Self {
        Self {
            capacity,
            ..self.clone()
        }
    }

    /// Number of distinct selections, `Π (|class| + 1)`.
    pub fn selection_count(&self) -> u128 {
        self.classes
            .iter()
            .fold(1u128, |acc, c| acc.saturating_mul(c.len() as u128 + 1))
    }

    /// Line-oriented text form: a `K W` header followed by one `k w v` line
    /// per item, items of a class in order. Tags are not preserved.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.classes.len(), self.capacity);
        for (k, class) in self.classes.iter().enumerate() {
            for item in class {
                let _ = writeln!(out, "{k} {} {:?}", item.weight, item.value);
            }
        }
        out
    }
}

impl FromStr for MckInstance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s
            .lines()
            .map(str::trim)
            .enumerate()
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (_, header) = lines.next().ok_or_else(|| Error::invalid("empty MCK document"))?;
        let mut fields = header.split_whitespace();
        let parse_err = |line: usize, what: &str| Error::invalid(format!("line {}: bad {what}", line + 1));
        let class_count: usize = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| Error::invalid("header: bad class count"))?;
        let capacity: u64 = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| Error::invalid("header: bad capacity"))?;
        if fields.next().is_some() {
            return Err(Error::invalid("header: expected `K W`"));
        }
        let mut classes = vec![Vec::new(); class_count];
        for (n, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(Error::invalid(format!("line {}: expected `k w v`", n + 1)));
            }
            let k: usize = f[0].parse().map_err(|_| parse_err(n, "class index"))?;
            let weight: u64 = f[1].parse().map_err(|_| parse_err(n, "weight"))?;
            let value: f64 = f[2].parse().map_err(|_| parse_err(n, "value"))?;
            let class = classes
                .get_mut(k)
                .ok_or_else(|| Error::invalid(format!("line {}: class {k} out of range", n + 1)))?;
            class.push(MckItem {
                weight,
                value,
                tag: None,
            });
        }
        MckInstance::new(capacity, classes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MckSolution {
    /// Chosen item index per class, `None` for no item.
    pub chosen: Vec<Option<usize>>,
    pub total_value: f64,
    pub total_weight: u64,
}

impl MckSolution {
    /// Evaluate a choice vector against `inst`, checking shape and capacity.
    pub fn from_choices(inst: &MckInstance, chosen: Vec<Option<usize>>) -> Result<Self> {
        if chosen.len() != inst.classes.len() {
            return Err(Error::invalid(format!(
                "solution has {} classes, instance has {}",
                chosen.len(),
                inst.classes.len()
            )));
        }
        let mut total_value = 0.0;
        let mut total_weight = 0u64;
        for (k, c) in chosen.iter().enumerate() {
            if let Some(l) = *c {
                let item = inst.classes[k]
                    .get(l)
                    .ok_or_else(|| Error::invalid(format!("class {k} has no item {l}")))?;
                total_value += item.value;
                total_weight += item.weight;
            }
        }
        if total_weight > inst.capacity {
            return Err(Error::invalid(format!(
                "selection weight {total_weight} exceeds capacity {}",
                inst.capacity
            )));
        }
        Ok(Self {
            chosen,
            total_value,
            total_weight,
        })
    }

    fn empty(classes: usize) -> Self {
        Self {
            chosen: vec![None; classes],
            total_value: 0.0,
            total_weight: 0,
        }
    }
}

/// One class per ordered pair, `R` items per class, capacity `B`.
pub fn build_mck_instance(model: &SystemModel) -> MckInstance {
    let c = model.controllers();
    let s = model.slot_seconds();
    let classes = (0..pair_count(c))
        .map(|k| {
            let (i, j) = pair_at(c, k);
            let exposure = model.change_rates()[i] * s;
            let base = consistency_term(exposure, 0);
            let cost = model.pair_costs()[k];
            (1..=model.max_rate())
                .map(|l| MckItem {
                    weight: cost * u64::from(l),
                    value: consistency_term(exposure, l) - base,
                    tag: Some(ItemTag {
                        source: i,
                        target: j,
                        level: l,
                    }),
                })
                .collect()
        })
        .collect();
    MckInstance {
        capacity: model.budget(),
        classes,
        controllers: Some(c),
    }
}

fn ties(a: f64, b: f64) -> bool {
    (a - b).abs() <= VALUE_TIE * a.abs().max(b.abs()).max(1.0)
}

/// Choices of a class in tie-break order: no item, then items by index.
fn choices(class: &[MckItem]) -> impl Iterator<Item = (Option<usize>, u64, f64)> + '_ {
    std::iter::once((None, 0, 0.0)).chain(class.iter().enumerate().map(|(l, it)| (Some(l), it.weight, it.value)))
}

/// Exact pseudo-polynomial DP, `O(K · R · W)` time and `O(K · W)` memory.
///
/// `best[k][w]` is the largest value obtainable from classes `k..K` within
/// capacity `w`; the selection is recovered front to back so that ties
/// resolve towards lower weight and then lexicographically smaller choices.
pub fn solve_exact_dp(inst: &MckInstance) -> MckSolution {
    let k_total = inst.classes.len();
    let cap = inst.capacity as usize;
    let mut best = vec![vec![0.0f64; cap + 1]; k_total + 1];
    for k in (0..k_total).rev() {
        let (head, tail) = best.split_at_mut(k + 1);
        let (row, next) = (&mut head[k], &tail[0]);
        for w in 0..=cap {
            let mut v = next[w];
            for item in &inst.classes[k] {
                let iw = item.weight as usize;
                if item.weight <= w as u64 && item.value + next[w - iw] > v {
                    v = item.value + next[w - iw];
                }
            }
            row[w] = v;
        }
    }

    let opt = best[0][cap];
    let mut w = (0..=cap).find(|&w| ties(best[0][w], opt)).unwrap_or(cap);
    let mut chosen = Vec::with_capacity(k_total);
    for k in 0..k_total {
        let target = best[k][w];
        let (choice, weight, _) = choices(&inst.classes[k])
            .filter(|&(_, iw, _)| iw <= w as u64)
            .find(|&(_, iw, v)| ties(v + best[k + 1][w - iw as usize], target))
            .expect("DP row always has an attaining choice");
        chosen.push(choice);
        w -= weight as usize;
    }
    MckSolution::from_choices(inst, chosen).expect("DP selection is feasible")
}

/// `(1 − eps)`-approximation by value scaling.
///
/// Values are scaled by `eps · v_max / K` and floored; a DP over classes then
/// tracks the minimum weight for every reachable scaled value. Reachable
/// states are kept sparse, so tiny instances stay cheap even for very small
/// `eps`.
pub fn solve_fptas(inst: &MckInstance, eps: f64) -> Result<MckSolution> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid(format!("eps {eps} must lie in (0, 1)")));
    }
    let k_total = inst.classes.len();
    let v_max = inst
        .classes
        .iter()
        .flatten()
        .filter(|it| it.weight <= inst.capacity)
        .map(|it| it.value)
        .fold(0.0, f64::max);
    if v_max <= 0.0 {
        return Ok(MckSolution::empty(k_total));
    }
    let scale = eps * v_max / k_total as f64;
    let scaled: Vec<Vec<u64>> = inst
        .classes
        .iter()
        .map(|class| class.iter().map(|it| (it.value / scale).floor() as u64).collect())
        .collect();

    // min_weight[k]: scaled value -> least weight reachable from classes k..K
    let mut min_weight: Vec<BTreeMap<u64, u64>> = vec![BTreeMap::new(); k_total + 1];
    min_weight[k_total].insert(0, 0);
    for k in (0..k_total).rev() {
        let mut row = BTreeMap::new();
        for (&q, &w) in &min_weight[k + 1] {
            relax(&mut row, q, w);
            for (l, item) in inst.classes[k].iter().enumerate() {
                let nw = w + item.weight;
                if nw <= inst.capacity {
                    relax(&mut row, q + scaled[k][l], nw);
                }
            }
        }
        min_weight[k] = row;
    }

    let (&best_q, _) = min_weight[0]
        .iter()
        .next_back()
        .expect("empty selection is always reachable");
    let mut q = best_q;
    let mut chosen = Vec::with_capacity(k_total);
    for k in 0..k_total {
        let target = min_weight[k][&q];
        let pick = std::iter::once((None, 0u64, 0u64))
            .chain(
                inst.classes[k]
                    .iter()
                    .enumerate()
                    .map(|(l, it)| (Some(l), it.weight, scaled[k][l])),
            )
            .find(|&(_, iw, p)| p <= q && iw <= target && min_weight[k + 1].get(&(q - p)) == Some(&(target - iw)))
            .expect("scaled DP state has an attaining choice");
        chosen.push(pick.0);
        q -= pick.2;
    }
    MckSolution::from_choices(inst, chosen)
}

fn relax(row: &mut BTreeMap<u64, u64>, q: u64, w: u64) {
    row.entry(q).and_modify(|cur| *cur = (*cur).min(w)).or_insert(w);
}

/// Exhaustive search over every selection. Test oracle.
pub fn solve_brute_force(inst: &MckInstance) -> Result<MckSolution> {
    solve_brute_force_capped(inst, DEFAULT_BRUTE_FORCE_CAP)
}

pub fn solve_brute_force_capped(inst: &MckInstance, cap: u128) -> Result<MckSolution> {
    let size = inst.selection_count();
    if size > cap {
        return Err(Error::InstanceTooLarge { size, cap });
    }
    let k_total = inst.classes.len();
    // digit 0 = no item, digit l+1 = item l; class 0 is the most significant
    let mut digits = vec![0usize; k_total];
    let mut best: Option<(f64, u64, Vec<usize>)> = None;
    loop {
        let mut value = 0.0;
        let mut weight = 0u64;
        for (k, &d) in digits.iter().enumerate() {
            if d > 0 {
                let it = &inst.classes[k][d - 1];
                value += it.value;
                weight += it.weight;
            }
        }
        if weight <= inst.capacity {
            let better = match &best {
                None => true,
                Some((bv, bw, _)) => {
                    if ties(value, *bv) {
                        weight < *bw
                    } else {
                        value > *bv
                    }
                }
            };
            if better {
                best = Some((value, weight, digits.clone()));
            }
        }
        // odometer, last class fastest
        let mut k = k_total;
        loop {
            if k == 0 {
                let (_, _, d) = best.expect("empty selection is feasible");
                let chosen = d.into_iter().map(|x| x.checked_sub(1)).collect();
                return MckSolution::from_choices(inst, chosen);
            }
            k -= 1;
            digits[k] += 1;
            if digits[k] <= inst.classes[k].len() {
                break;
            }
            digits[k] = 0;
        }
    }
}

/// Map a solution of a model-generated instance back to a policy.
pub fn decode_policy(inst: &MckInstance, sol: &MckSolution) -> Result<SyncPolicy> {
    let controllers = inst
        .controllers
        .ok_or_else(|| Error::invalid("instance was not generated from a system model"))?;
    let checked = MckSolution::from_choices(inst, sol.chosen.clone())?;
    if checked.total_weight != sol.total_weight || !ties(checked.total_value, sol.total_value) {
        return Err(Error::invalid("solution totals do not match the instance"));
    }
    let mut policy = SyncPolicy::zeros(controllers);
    for (k, c) in sol.chosen.iter().enumerate() {
        if let Some(l) = *c {
            let tag = inst.classes[k][l]
                .tag
                .ok_or_else(|| Error::invalid(format!("class {k} item {l} has no pair tag")))?;
            policy.set(tag.source, tag.target, tag.level);
        }
    }
    Ok(policy)
}

/// Value gained by one extra message when the pair's exposure is `a = λs`.
fn single_message_gain(a: f64) -> f64 {
    (-a / 2.0).exp() - (-a).exp()
}

/// Exposure `a ∈ (0, 2 ln 2]` with `e^{-a/2} − e^{-a} = value`.
///
/// The gain rises from 0 to its maximum 1/4 on this interval, so the smaller
/// of the two roots is found by bisection.
pub fn exposure_for_gain(value: f64) -> Result<f64> {
    if !(value > 0.0 && value <= 0.25) {
        return Err(Error::NotEncodable(value));
    }
    let (mut lo, mut hi) = (0.0f64, 2.0 * std::f64::consts::LN_2);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if single_message_gain(mid) < value {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Encode a 0/1 knapsack as a synchronization model with `R = 1`.
///
/// Item `l` becomes pair `(l, L)` with cost `w_l` and a source change rate
/// whose single-message gain equals `v_l`. Every other pair costs `W + 1`, so
/// it can never be bought. The slot length is 1 s. Solving the consistency
/// objective and subtracting [`SystemModel::baseline_omega`] gives the
/// knapsack optimum.
pub fn knapsack_hardness_instance(items: &[(u64, f64)], capacity: u64) -> Result<SystemModel> {
    if items.is_empty() {
        return Err(Error::invalid("knapsack needs at least one item"));
    }
    let l_count = items.len();
    let controllers = l_count + 1;
    let mut rates = Vec::with_capacity(controllers);
    for &(w, v) in items {
        if w == 0 {
            return Err(Error::invalid("knapsack item weights must be >= 1"));
        }
        rates.push(exposure_for_gain(v)?);
    }
    rates.push(0.0);
    let blocked = capacity + 1;
    let costs = (0..pair_count(controllers))
        .map(|k| match pair_at(controllers, k) {
            (i, j) if j == l_count && i < l_count => items[i].0,
            _ => blocked,
        })
        .collect();
    SystemModel::new(rates, 1.0, costs, capacity, 1)
}
