//! Property battery over seeded desk-scale instances, checked against the
//! brute-force oracle.

use crowdsense_core::domain::{expected_marginal_gain, Realization, Region, User};
use crowdsense_core::mechanisms::{seq_t_greedy, seq_t_greedy_with_bids};
use crowdsense_core::oracle::{
    profit_curve, random_instance, random_nested_observations, realization_outcomes, verify_approximation,
    verify_intermediate_bounds, RANDOM_INSTANCE_MIN_COST,
};
use crowdsense_core::payments::{payment_schedule_with_share_divisor, Accuracy, Estimator, IR_TOLERANCE};
use crowdsense_core::rng::{derive_seed, rng_from};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::Result;
use crate::spec::VerifySettings;

/// `α` of the mechanism under test.
pub const VERIFY_ALPHA: f64 = 2.0;
/// Slack on profit comparisons and on the payment bound.
pub const PROFIT_TOLERANCE: f64 = 1e-9;
pub const BOUND_TOLERANCE: f64 = 1e-9;
pub const SUBMODULARITY_TOLERANCE: f64 = 1e-9;
/// Lower bids tried per participant by the monotonicity check.
pub const MONOTONICITY_POINTS: usize = 10;

const VERIFY_STREAM: u64 = 0x7665_7269;

pub const CHECKS: [&str; 8] = [
    "truthfulness",
    "individual_rationality",
    "payment_bound",
    "budget_feasibility",
    "monotonicity",
    "adaptive_submodularity",
    "approximation",
    "intermediate_bounds",
];

/// Payment rule the budget-feasibility check audits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PaymentRule {
    Correct,
    /// Proportional-share bound `B` in place of `B/α`.
    AlphaOmitted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub evaluated: usize,
    pub violations: usize,
    pub counterexamples: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifySummary {
    pub passed: bool,
    pub instances: usize,
    pub base_seed: u64,
    pub checks: Vec<CheckResult>,
}

impl VerifySummary {
    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// One seeded instance of the battery.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub index: usize,
    pub seed: u64,
    pub region: Region,
    pub users: Vec<User>,
    pub budget: f64,
}

pub fn instance(settings: &VerifySettings, base_seed: u64, index: usize) -> Instance {
    let seed = derive_seed(base_seed, &[VERIFY_STREAM, index as u64]);
    let (region, users) = random_instance(seed, settings.n_users, settings.max_profiles, settings.n_locations);
    let budget = if settings.budget_min < settings.budget_max {
        rng_from(seed, &[1]).random_range(settings.budget_min..settings.budget_max)
    } else {
        settings.budget_min
    };
    Instance { index, seed, region, users, budget }
}

/// `n` evenly spaced bids over `[lo, hi]`.
pub fn bid_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

struct Tally {
    results: Vec<CheckResult>,
    cap: usize,
}

impl Tally {
    fn new(cap: usize) -> Self {
        let results = CHECKS
            .iter()
            .map(|n| CheckResult {
                name: n.to_string(),
                passed: true,
                evaluated: 0,
                violations: 0,
                counterexamples: Vec::new(),
            })
            .collect();
        Tally { results, cap }
    }

    fn record(&mut self, name: &str, ok: bool, inst: &Instance, detail: impl FnOnce() -> Value) {
        let cap = self.cap;
        let c = self.results.iter_mut().find(|c| c.name == name).expect("known check");
        c.evaluated += 1;
        if !ok {
            c.passed = false;
            c.violations += 1;
            if c.counterexamples.len() < cap {
                c.counterexamples.push(json!({
                    "instance": inst.index,
                    "seed": inst.seed,
                    "budget": inst.budget,
                    "users": inst.users,
                    "location_values": inst.region.location_values(),
                    "detail": detail(),
                }));
            }
        }
    }
}

/// Run every check on `settings.instances` instances.
pub fn run_battery(settings: &VerifySettings, base_seed: u64, rule: PaymentRule) -> Result<VerifySummary> {
    let mut tally = Tally::new(settings.max_counterexamples);
    for index in 0..settings.instances {
        let inst = instance(settings, base_seed, index);
        check_instance(&inst, settings, rule, &mut tally)?;
    }
    let checks = tally.results;
    Ok(VerifySummary { passed: checks.iter().all(|c| c.passed), instances: settings.instances, base_seed, checks })
}

fn check_instance(inst: &Instance, settings: &VerifySettings, rule: PaymentRule, tally: &mut Tally) -> Result<()> {
    let (users, region, budget) = (&inst.users[..], &inst.region, inst.budget);

    let outcomes = realization_outcomes(users, region, budget, VERIFY_ALPHA)?;
    for o in &outcomes {
        let total_delta: f64 = o.marginals.iter().sum();
        for ((&s, &theta), &delta) in o.selected.iter().zip(&o.thresholds).zip(&o.marginals) {
            let bid = users[s].bid;
            tally.record(
                "individual_rationality",
                theta >= bid - IR_TOLERANCE,
                inst,
                || json!({"user": s, "realization": o.realization, "theta": theta, "bid": bid}),
            );
            let bound = 2.0 * budget * delta / total_delta;
            tally.record(
                "payment_bound",
                theta <= bound + BOUND_TOLERANCE,
                inst,
                || json!({"user": s, "realization": o.realization, "theta": theta, "bound": bound}),
            );
        }
    }

    let grid = bid_grid(RANDOM_INSTANCE_MIN_COST, budget, settings.bid_grid);
    for s in 0..users.len() {
        if !outcomes.iter().any(|o| o.selected.contains(&s)) {
            continue;
        }
        let curve = profit_curve(s, users, region, budget, VERIFY_ALPHA, &grid)?;
        let gain = curve.best_deviation_gain();
        tally.record("truthfulness", gain <= PROFIT_TOLERANCE, inst, || json!({"curve": curve, "gain": gain}));
    }

    let truth = Realization::truth(users);
    let result = seq_t_greedy(users, region, budget, VERIFY_ALPHA, &truth)?;
    let divisor = match rule {
        PaymentRule::Correct => VERIFY_ALPHA,
        PaymentRule::AlphaOmitted => 1.0,
    };
    let schedule = payment_schedule_with_share_divisor(
        &result,
        users,
        region,
        &truth,
        Accuracy::for_budget(budget),
        inst.seed,
        divisor,
    )?;
    let sampled = schedule.participants.iter().any(|p| p.estimator == Estimator::Sampled);
    let slack = if sampled { 3.0 * schedule.total_std_error() } else { 1e-9 };
    tally.record("budget_feasibility", schedule.total <= budget + slack, inst, || json!({"schedule": schedule}));

    for &s in &result.selected {
        let mut bids: Vec<f64> = users.iter().map(|u| u.bid).collect();
        let lower = bid_grid(RANDOM_INSTANCE_MIN_COST, users[s].bid, MONOTONICITY_POINTS);
        let mut lost = None;
        for &b in &lower {
            bids[s] = b;
            if !seq_t_greedy_with_bids(users, region, &bids, budget, VERIFY_ALPHA, &truth)?.is_selected(s) {
                lost = Some(b);
                break;
            }
        }
        tally.record("monotonicity", lost.is_none(), inst, || json!({"user": s, "losing_bid": lost}));
    }

    let mut rng = rng_from(inst.seed, &[2]);
    for _ in 0..settings.submodularity_triples {
        let Some((small, large, w)) = random_nested_observations(users, &mut rng) else { break };
        let a = expected_marginal_gain(&users[w], &small, region)?;
        let b = expected_marginal_gain(&users[w], &large, region)?;
        tally.record(
            "adaptive_submodularity",
            a >= b - SUBMODULARITY_TOLERANCE,
            inst,
            || json!({"user": w, "small": small, "large": large, "gain_small": a, "gain_large": b}),
        );
    }

    let report = verify_approximation(users, region, budget, settings.approximation_monte_carlo, inst.seed)?;
    tally.record("approximation", report.satisfied, inst, || json!({"report": report}));
    let bounds = verify_intermediate_bounds(users, region, budget, VERIFY_ALPHA)?;
    tally.record(
        "intermediate_bounds",
        bounds.optimal_bound_holds && bounds.greedy_bound_holds,
        inst,
        || json!({"report": bounds}),
    );
    Ok(())
}
