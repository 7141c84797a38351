//! Paired-trial mechanism comparisons and their output files.

use std::path::Path;

use crowdsense_core::domain::{Realization, User, Utility};
use crowdsense_core::mechanisms::{run_mechanism, AllocationResult, MechanismKind, StopReason};
use crowdsense_core::payments::{optimize_alpha, payment_schedule, PaymentSchedule};
use crowdsense_core::population::{Geography, ObfuscationModel, PopulationConfig};
use crowdsense_core::rng::rng_from;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::io::write_json;
use crate::spec::{AlphaMode, BudgetSearch, Experiment, Sweep};

const ALPHA_PROBE_STREAM: u64 = 0x616c_7068;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub sweep_value: f64,
    pub mechanism: MechanismKind,
    pub mean_utility: f64,
    pub mean_total_payment: Option<f64>,
    pub mean_budget_required: Option<f64>,
    pub pct_gain_adaptivity: Option<f64>,
    pub pct_loss_truthfulness: Option<f64>,
    pub pct_loss_privacy: Option<f64>,
    /// Half-width of the normal-approximation 95% interval of `mean_utility`.
    pub ci95_halfwidth: f64,
}

/// Outcome of one mechanism on one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub sweep_value: f64,
    pub trial: usize,
    pub population_seed: u64,
    pub mechanism: MechanismKind,
    pub budget: f64,
    pub alpha: f64,
    pub utility: f64,
    pub total_payment: Option<f64>,
    /// Smallest budget reaching the target; `None` when no target is set.
    pub budget_required: Option<BudgetRequired>,
    pub selected: Vec<usize>,
    pub stop_reason: StopReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetRequired {
    pub target: f64,
    /// `None` when the target is out of reach.
    pub budget: Option<f64>,
}

impl BudgetRequired {
    pub fn value(&self) -> f64 {
        self.budget.unwrap_or(f64::INFINITY)
    }
}

/// Full allocation and payments of one mechanism on one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialTrace {
    pub sweep_value: f64,
    pub trial: usize,
    pub allocation: AllocationResult,
    pub payments: Option<PaymentSchedule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub sweep: String,
    pub rows: Vec<MetricRow>,
    pub trials: Vec<TrialRecord>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub traces: Vec<TrialTrace>,
}

/// Sample mean and 95% normal-approximation half-width.
pub fn mean_ci(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * (var / n as f64).sqrt())
}

/// Parameters that vary along the sweep.
#[derive(Debug, Clone, Copy)]
struct Point {
    value: f64,
    budget: f64,
    target: Option<f64>,
    obfuscation: ObfuscationModel,
}

fn points(exp: &Experiment) -> Vec<Point> {
    let spec = &exp.spec;
    let base = Point {
        value: 0.0,
        budget: spec.budget.unwrap_or(f64::NAN),
        target: spec.target_utility,
        obfuscation: exp.population.obfuscation,
    };
    spec.sweep
        .values()
        .iter()
        .map(|&value| match spec.sweep {
            Sweep::Budget(_) => Point { value, budget: value, ..base },
            Sweep::TargetUtility(_) => Point { value, target: Some(value), ..base },
            Sweep::ObfuscationRadius(_) => {
                Point { value, obfuscation: ObfuscationModel::FixedRadius { radius_miles: value }, ..base }
            }
        })
        .collect()
}

/// Population of one trial: the config with seed `base_seed + trial`.
pub fn trial_population(
    geo: &Geography<'_>,
    cfg: &PopulationConfig,
    base_seed: u64,
    trial: usize,
) -> Result<Vec<User>> {
    let mut cfg = cfg.clone();
    cfg.seed = base_seed.wrapping_add(trial as u64);
    Ok(geo.sample_population(&cfg)?)
}

/// `α` for the adaptive truthful mechanism on one population.
pub fn trial_alpha<U: Utility + ?Sized>(
    exp: &Experiment,
    users: &[User],
    utility: &U,
    budget: f64,
    seed: u64,
) -> Result<f64> {
    match exp.spec.alpha_mode {
        AlphaMode::Fixed(a) => Ok(a),
        AlphaMode::Optimized => {
            let search = exp.spec.alpha_search;
            let probes: Vec<Realization> = (0..search.probes)
                .map(|k| Realization::sample(users, &mut rng_from(seed, &[ALPHA_PROBE_STREAM, k as u64])))
                .collect();
            let accuracy = exp.spec.payments.accuracy(budget);
            Ok(optimize_alpha(users, utility, budget, &probes, search.grid_step, accuracy, seed)?)
        }
    }
}

/// Smallest budget in `[0, upper]` at which `kind` reaches `target` on the
/// given realization, by bisection down to `search.bracket`.
#[allow(clippy::too_many_arguments)]
pub fn budget_required<U: Utility + ?Sized>(
    kind: MechanismKind,
    users: &[User],
    utility: &U,
    alpha: f64,
    realization: &Realization,
    seed: u64,
    target: f64,
    upper: f64,
    search: BudgetSearch,
) -> Result<BudgetRequired> {
    if target <= 0.0 {
        return Ok(BudgetRequired { target, budget: Some(0.0) });
    }
    let goal = target - search.utility_tolerance;
    let reaches = |b: f64| -> Result<bool> {
        Ok(run_mechanism(kind, users, utility, b, alpha, realization, seed)?.realized_utility(utility) >= goal)
    };
    if !(upper > 0.0) || !reaches(upper)? {
        return Ok(BudgetRequired { target, budget: None });
    }
    let (mut lo, mut hi) = (0.0, upper);
    while hi - lo >= search.bracket {
        let mid = 0.5 * (lo + hi);
        if reaches(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(BudgetRequired { target, budget: Some(hi) })
}

/// Largest budget the search considers: `α·N·c_max`.
pub fn budget_search_upper(exp: &Experiment, kind: MechanismKind, alpha: f64) -> f64 {
    let a = if kind.is_truthful() { alpha } else { 1.0 };
    a * exp.population.n_users as f64 * exp.population.c_max
}

/// Run every mechanism on every (sweep value, trial) pair. All mechanisms
/// of a trial share the population and its true realization.
pub fn run_comparison(exp: &Experiment) -> Result<Comparison> {
    let spec = &exp.spec;
    let geo = Geography::new(&exp.region);
    let mut trials = Vec::new();
    let mut traces = Vec::new();
    let mut warnings = Vec::new();
    for point in points(exp) {
        let mut cfg = exp.population.clone();
        cfg.obfuscation = point.obfuscation;
        for trial in 0..spec.trials {
            let users = trial_population(&geo, &cfg, spec.base_seed, trial)?;
            let seed = spec.base_seed.wrapping_add(trial as u64);
            let truth = Realization::truth(&users);
            let alpha = trial_alpha(exp, &users, &exp.region, point.budget, seed)?;
            for &kind in &spec.mechanisms {
                let res = run_mechanism(kind, &users, &exp.region, point.budget, alpha, &truth, seed)?;
                let schedule = if spec.payments.enabled {
                    let acc = spec.payments.accuracy(point.budget);
                    Some(payment_schedule(&res, &users, &exp.region, &truth, acc, seed)?)
                } else {
                    None
                };
                let total_payment = match &schedule {
                    Some(s) => Some(s.total),
                    None if !kind.is_truthful() => Some(res.true_cost_total(&users)),
                    None => None,
                };
                let budget_required = match point.target {
                    Some(t) => {
                        let upper = budget_search_upper(exp, kind, alpha);
                        Some(budget_required(
                            kind,
                            &users,
                            &exp.region,
                            alpha,
                            &truth,
                            seed,
                            t,
                            upper,
                            spec.budget_search,
                        )?)
                    }
                    None => None,
                };
                if budget_required.is_some_and(|b| b.budget.is_none()) {
                    warnings.push(format!(
                        "{kind} at {} = {}, trial {trial}: target utility not reachable",
                        spec.sweep.name(),
                        point.value
                    ));
                }
                trials.push(TrialRecord {
                    sweep_value: point.value,
                    trial,
                    population_seed: seed,
                    mechanism: kind,
                    budget: point.budget,
                    alpha: if kind.is_truthful() { alpha } else { res.alpha },
                    utility: res.realized_utility(&exp.region),
                    total_payment,
                    budget_required,
                    selected: res.selected.clone(),
                    stop_reason: res.stop_reason,
                });
                if spec.write_traces {
                    traces.push(TrialTrace { sweep_value: point.value, trial, allocation: res, payments: schedule });
                }
            }
        }
    }
    let rows = aggregate(exp, &trials, &mut warnings);
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(Comparison { sweep: spec.sweep.name().to_string(), rows, trials, warnings, traces })
}

fn pct(num: f64, den: f64, what: &str, value: f64, warnings: &mut Vec<String>) -> Option<f64> {
    if den == 0.0 {
        warnings.push(format!("{what} undefined at sweep value {value}: comparator utility is 0"));
        None
    } else {
        Some(100.0 * num / den)
    }
}

fn aggregate(exp: &Experiment, trials: &[TrialRecord], warnings: &mut Vec<String>) -> Vec<MetricRow> {
    let mut rows = Vec::new();
    for &value in exp.spec.sweep.values() {
        let at: Vec<&TrialRecord> = trials.iter().filter(|t| t.sweep_value == value).collect();
        let mean_of = |kind: MechanismKind| -> Option<f64> {
            let u: Vec<f64> = at.iter().filter(|t| t.mechanism == kind).map(|t| t.utility).collect();
            (!u.is_empty()).then(|| mean_ci(&u).0)
        };
        for &kind in &exp.spec.mechanisms {
            let mine: Vec<&TrialRecord> = at.iter().copied().filter(|t| t.mechanism == kind).collect();
            let utilities: Vec<f64> = mine.iter().map(|t| t.utility).collect();
            let (mean_utility, ci) = mean_ci(&utilities);
            let payments: Option<Vec<f64>> = mine.iter().map(|t| t.total_payment).collect();
            let required: Option<Vec<f64>> = mine.iter().map(|t| t.budget_required.map(|b| b.value())).collect();
            let (mut gain, mut loss_t, mut loss_p) = (None, None, None);
            if kind == MechanismKind::SeqTGreedy {
                let u = mean_utility;
                if let Some(c) = mean_of(MechanismKind::ConstTGreedy) {
                    gain = pct(u - c, c, "pct_gain_adaptivity", value, warnings);
                }
                if let Some(g) = mean_of(MechanismKind::SeqGreedy) {
                    loss_t = pct(g - u, g, "pct_loss_truthfulness", value, warnings);
                }
                if let Some(t) = mean_of(MechanismKind::TGreedy) {
                    loss_p = pct(t - u, t, "pct_loss_privacy", value, warnings);
                }
            }
            rows.push(MetricRow {
                sweep_value: value,
                mechanism: kind,
                mean_utility,
                mean_total_payment: payments.map(|p| mean_ci(&p).0),
                mean_budget_required: required.map(|r| mean_ci(&r).0),
                pct_gain_adaptivity: gain,
                pct_loss_truthfulness: loss_t,
                pct_loss_privacy: loss_p,
                ci95_halfwidth: ci,
            });
        }
    }
    rows
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let to_err = |e: csv::Error| HarnessError::Csv { path: path.into(), line: 0, message: e.to_string() };
    let mut wtr = csv::Writer::from_path(path).map_err(to_err)?;
    for row in rows {
        wtr.serialize(row).map_err(to_err)?;
    }
    wtr.flush().map_err(|e| HarnessError::io(path, e))
}

/// Write `metrics.csv`, `summary.json` and, when traced, `trace/*.json`.
pub fn write_outputs(dir: &Path, comparison: &Comparison) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    write_metrics_csv(&dir.join("metrics.csv"), &comparison.rows)?;
    write_json(&dir.join("summary.json"), comparison)?;
    if !comparison.traces.is_empty() {
        let trace_dir = dir.join("trace");
        std::fs::create_dir_all(&trace_dir).map_err(|e| HarnessError::io(&trace_dir, e))?;
        let values: Vec<f64> = {
            let mut v: Vec<f64> = comparison.traces.iter().map(|t| t.sweep_value).collect();
            v.dedup();
            v
        };
        for t in &comparison.traces {
            let k = values.iter().position(|&v| v == t.sweep_value).unwrap_or(0);
            let name = format!("{k:03}_{:05}_{}.json", t.trial, t.allocation.mechanism);
            write_json(&trace_dir.join(name), t)?;
        }
    }
    Ok(())
}
