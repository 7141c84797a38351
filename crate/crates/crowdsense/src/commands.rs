//! The CLI subcommands as library functions. Each returns the report it
//! prints and, given an output directory, writes it there.

use std::path::Path;

use crowdsense_core::domain::Realization;
use crowdsense_core::mechanisms::{run_mechanism, MechanismKind};
use crowdsense_core::payments::{payment_schedule, PaymentSchedule};
use crowdsense_core::population::Geography;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::harness::{
    budget_required, budget_search_upper, mean_ci, run_comparison, trial_alpha, trial_population, write_outputs,
    Comparison,
};
use crate::io::write_json;
use crate::spec::{Experiment, Sweep};
use crate::verify::{run_battery, PaymentRule, VerifySummary};

/// Budget for commands that evaluate a single setting: the spec's budget,
/// or the first swept budget.
pub fn base_budget(exp: &Experiment) -> f64 {
    match (&exp.spec.sweep, exp.spec.budget) {
        (_, Some(b)) => b,
        (Sweep::Budget(v), None) => v[0],
        _ => unreachable!("validated specs carry a budget"),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

pub fn compare(exp: &Experiment, out: &Path) -> Result<Comparison> {
    let comparison = run_comparison(exp)?;
    write_outputs(out, &comparison)?;
    Ok(comparison)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetForRow {
    pub mechanism: MechanismKind,
    /// Mean over trials; null when any trial cannot reach the target.
    pub mean_budget_required: Option<f64>,
    pub ci95_halfwidth: Option<f64>,
    pub unreachable_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetForReport {
    pub target: f64,
    pub trials: usize,
    pub mechanisms: Vec<BudgetForRow>,
}

/// Per-mechanism budget needed to reach `target` on each trial population.
pub fn budget_for(exp: &Experiment, target: f64, out: Option<&Path>) -> Result<BudgetForReport> {
    if !(target >= 0.0 && target.is_finite()) {
        return Err(HarnessError::Spec(format!("target {target} must be a non-negative real")));
    }
    let spec = &exp.spec;
    let geo = Geography::new(&exp.region);
    let budget = base_budget(exp);
    let mut per_kind: Vec<Vec<Option<f64>>> = vec![Vec::new(); spec.mechanisms.len()];
    for trial in 0..spec.trials {
        let users = trial_population(&geo, &exp.population, spec.base_seed, trial)?;
        let seed = spec.base_seed.wrapping_add(trial as u64);
        let truth = Realization::truth(&users);
        let alpha = trial_alpha(exp, &users, &exp.region, budget, seed)?;
        for (k, &kind) in spec.mechanisms.iter().enumerate() {
            let upper = budget_search_upper(exp, kind, alpha);
            let r = budget_required(kind, &users, &exp.region, alpha, &truth, seed, target, upper, spec.budget_search)?;
            per_kind[k].push(r.budget);
        }
    }
    let mechanisms = spec
        .mechanisms
        .iter()
        .zip(&per_kind)
        .map(|(&mechanism, values)| {
            let reached: Option<Vec<f64>> = values.iter().copied().collect();
            let stats = reached.map(|v| mean_ci(&v));
            BudgetForRow {
                mechanism,
                mean_budget_required: stats.map(|s| s.0),
                ci95_halfwidth: stats.map(|s| s.1),
                unreachable_trials: values.iter().filter(|v| v.is_none()).count(),
            }
        })
        .collect();
    let report = BudgetForReport { target, trials: spec.trials, mechanisms };
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_json(&dir.join("budget_for.json"), &report)?;
    }
    Ok(report)
}

/// Payment schedule of `mechanism` on the population sampled with seed
/// `instance`, under its true realization.
pub fn payments(
    exp: &Experiment,
    instance: u64,
    mechanism: MechanismKind,
    out: Option<&Path>,
) -> Result<PaymentSchedule> {
    let geo = Geography::new(&exp.region);
    let mut cfg = exp.population.clone();
    cfg.seed = instance;
    let users = geo.sample_population(&cfg)?;
    let truth = Realization::truth(&users);
    let budget = base_budget(exp);
    let alpha = trial_alpha(exp, &users, &exp.region, budget, instance)?;
    let result = run_mechanism(mechanism, &users, &exp.region, budget, alpha, &truth, instance)?;
    let accuracy = exp.spec.payments.accuracy(budget);
    let schedule = payment_schedule(&result, &users, &exp.region, &truth, accuracy, instance)?;
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_json(&dir.join("payments.json"), &schedule)?;
    }
    Ok(schedule)
}

pub fn verify(exp: &Experiment, out: Option<&Path>) -> Result<VerifySummary> {
    let summary = run_battery(&exp.spec.verify, exp.spec.base_seed, PaymentRule::Correct)?;
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_json(&dir.join("verify.json"), &summary)?;
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaReport {
    pub budget: f64,
    pub population_seed: u64,
    pub probes: usize,
    pub grid_step: f64,
    pub alpha: f64,
}

/// Smallest certified `α` for the first trial population.
pub fn optimize_alpha(exp: &Experiment, out: Option<&Path>) -> Result<AlphaReport> {
    let geo = Geography::new(&exp.region);
    let users = trial_population(&geo, &exp.population, exp.spec.base_seed, 0)?;
    let budget = base_budget(exp);
    let mut optimized = exp.clone();
    optimized.spec.alpha_mode = crate::spec::AlphaMode::Optimized;
    let alpha = trial_alpha(&optimized, &users, &exp.region, budget, exp.spec.base_seed)?;
    let report = AlphaReport {
        budget,
        population_seed: exp.spec.base_seed,
        probes: exp.spec.alpha_search.probes,
        grid_step: exp.spec.alpha_search.grid_step,
        alpha,
    };
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_json(&dir.join("alpha.json"), &report)?;
    }
    Ok(report)
}
