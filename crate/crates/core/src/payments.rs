//! Threshold payments for the truthful mechanisms.
//!
//! For a participant `i` and a realization `r`, the mechanism is re-run on
//! all users but `i` while recording, at every selection state `j`, what `i`
//! would have needed to win that state. The per-realization payment is
//!
//! ```text
//! θ^d_i = max_j min(b_i(j), ρ_i(j), B − spent_j)
//! b_i(j) = Δ_i(j)·b_j / Δ'_j          (+∞ if the run had no candidate left)
//! ρ_i(j) = (B/α)·Δ_i(j) / (Σ_{s<j} Δ'_s + Δ_i(j))
//! ```
//!
//! which is the largest bid for which `i` is still selected. The expected
//! payment averages `θ^d` over the realizations consistent with what the
//! mechanism observed, exactly or by Hoeffding-sized sampling.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::domain::{
    bids, conditional_realization_weight, consistent_realization_count, consistent_realizations, ObservationSet,
    Realization, User, Utility,
};
use crate::error::{invalid, precondition, Result};
use crate::mechanisms::engine::{allocate, AdaptiveModel, ExpectedModel, ProbeState, Rules, Run};
use crate::mechanisms::memo::PathMemo;
use crate::mechanisms::{
    collapse_privacy, n_locations, seq_t_greedy, AllocationResult, MechanismKind, DEFAULT_MC_SAMPLES,
};
use crate::rng::rng_from;

/// Above this many consistent realizations expected payments are sampled.
pub const PAYMENT_ENUMERATION_CAP: f64 = 1e4;

/// Stream label for realizations drawn by payment estimation.
pub const PAYMENT_STREAM: u64 = 0x7061_796d;

/// Individual rationality is checked up to this absolute slack.
pub const IR_TOLERANCE: f64 = 1e-12;

/// One selection state of the alternate run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionTerm {
    /// Bid at which `i` ties the candidate considered in this state;
    /// `None` when no candidate was left.
    pub b_i_j: Option<f64>,
    pub rho_i_j: f64,
    /// Budget left in this state.
    pub budget_cap: f64,
    pub theta_d_i_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdBreakdown {
    pub per_position: Vec<PositionTerm>,
    pub theta_d: f64,
    /// Users allocated by the run without `i`, in allocation order.
    pub alternate_selected: Vec<usize>,
}

fn position_term(state: &ProbeState, budget: f64, alpha: f64) -> PositionTerm {
    let g = state.probe_gain;
    let b_i_j = state.last.map(|(b, d)| g * b / d);
    let rho_i_j = crate::mechanisms::share_bound(budget, alpha, g, state.prefix_delta);
    let budget_cap = budget - state.spent;
    let theta = if g > 0.0 { rho_i_j.min(budget_cap).min(b_i_j.unwrap_or(f64::INFINITY)) } else { 0.0 };
    PositionTerm { b_i_j, rho_i_j, budget_cap, theta_d_i_j: theta }
}

fn breakdown(run: Run, budget: f64, alpha: f64) -> ThresholdBreakdown {
    let per_position: Vec<PositionTerm> = run.probe_states.iter().map(|s| position_term(s, budget, alpha)).collect();
    let theta_d = per_position.iter().map(|t| t.theta_d_i_j).fold(0.0, f64::max);
    ThresholdBreakdown { per_position, theta_d, alternate_selected: run.selected }
}

fn theta_of(run: &Run, budget: f64, alpha: f64) -> f64 {
    run.probe_states.iter().map(|s| position_term(s, budget, alpha).theta_d_i_j).fold(0.0, f64::max)
}

fn others(n: usize, i: usize) -> Vec<usize> {
    (0..n).filter(|&w| w != i).collect()
}

fn adaptive_alternate<U: Utility + ?Sized>(
    i: usize,
    users: &[User],
    utility: &U,
    bid_vec: &[f64],
    realization: &Realization,
    rules: Rules,
) -> Run {
    let mut model = AdaptiveModel::new(users, utility, realization);
    allocate(&mut model, &others(users.len(), i), bid_vec, rules, Some(i), false)
}

fn check_params(budget: f64, alpha: f64) -> Result<()> {
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(invalid!("budget {budget} must be positive"));
    }
    if !(alpha >= 1.0 && alpha.is_finite()) {
        return Err(invalid!("alpha {alpha} must be at least 1"));
    }
    Ok(())
}

/// Threshold payment of participant `i` of the adaptive truthful mechanism
/// under realization `r`.
pub fn threshold_payment_for_realization<U: Utility + ?Sized>(
    i: usize,
    r: &Realization,
    users: &[User],
    utility: &U,
    budget: f64,
    alpha: f64,
) -> Result<ThresholdBreakdown> {
    check_params(budget, alpha)?;
    if i >= users.len() || !seq_t_greedy(users, utility, budget, alpha, r)?.is_selected(i) {
        return Err(precondition!("user {i} is not selected under this realization"));
    }
    let rules = Rules { budget, alpha: Some(alpha) };
    Ok(breakdown(adaptive_alternate(i, users, utility, &bids(users), r, rules), budget, alpha))
}

/// Threshold payment of participant `i` of the non-adaptive truthful
/// mechanism; it does not depend on any realization.
pub fn const_threshold_payment<U: Utility + ?Sized>(
    i: usize,
    users: &[User],
    utility: &U,
    budget: f64,
    alpha: f64,
) -> Result<ThresholdBreakdown> {
    check_params(budget, alpha)?;
    let r = Realization::truth(users);
    let result = crate::mechanisms::const_variants(users, utility, budget, alpha, MechanismKind::ConstTGreedy, &r)?;
    if !result.is_selected(i) {
        return Err(precondition!("user {i} is not selected"));
    }
    let mut model = ExpectedModel::new(users, utility, n_locations(users), DEFAULT_MC_SAMPLES, 0);
    let run = allocate(
        &mut model,
        &others(users.len(), i),
        &bids(users),
        Rules { budget, alpha: Some(alpha) },
        Some(i),
        false,
    );
    Ok(breakdown(run, budget, alpha))
}

/// Sampling accuracy of expected payments: each estimate is within
/// `epsilon` of the truth with probability at least `1 − delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub epsilon: f64,
    pub delta: f64,
}

impl Accuracy {
    /// `epsilon = 0.01·budget`, `delta = 0.05`.
    pub fn for_budget(budget: f64) -> Self {
        Accuracy { epsilon: 0.01 * budget, delta: 0.05 }
    }

    fn check(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(invalid!("epsilon {} must be positive", self.epsilon));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid!("delta {} must lie in (0, 1)", self.delta));
        }
        Ok(())
    }
}

/// Hoeffding sample size `ceil(B²·ln(2/δ) / (2ε²))` for values in `[0, B]`.
pub fn hoeffding_samples(budget: f64, accuracy: Accuracy) -> Result<usize> {
    accuracy.check()?;
    let n = libm::ceil(budget * budget * libm::log(2.0 / accuracy.delta) / (2.0 * accuracy.epsilon * accuracy.epsilon));
    Ok(n as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticipantPayment {
    pub id: usize,
    pub theta: f64,
    pub estimator: Estimator,
    /// Realizations averaged over (enumerated or drawn).
    pub n_samples: usize,
    pub std_error: f64,
    /// Largest per-realization payment seen.
    pub theta_d_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaymentSchedule {
    pub participants: Vec<ParticipantPayment>,
    pub total: f64,
    pub alpha: f64,
    pub budget: f64,
}

impl PaymentSchedule {
    fn new(participants: Vec<ParticipantPayment>, alpha: f64, budget: f64) -> Self {
        let total = participants.iter().map(|p| p.theta).sum();
        PaymentSchedule { participants, total, alpha, budget }
    }

    pub fn total_std_error(&self) -> f64 {
        self.participants.iter().map(|p| p.std_error).sum()
    }

    pub fn get(&self, id: usize) -> Option<&ParticipantPayment> {
        self.participants.iter().find(|p| p.id == id)
    }
}

/// Per-realization thresholds of several users, memoized by run path.
pub(crate) struct AdaptivePayer<'a, U: ?Sized> {
    users: &'a [User],
    utility: &'a U,
    bids: Vec<f64>,
    rules: Rules,
    /// Divisor of the budget in the share term of the payment.
    share_alpha: f64,
    caches: Vec<PathMemo<f64>>,
}

impl<'a, U: Utility + ?Sized> AdaptivePayer<'a, U> {
    pub fn new(users: &'a [User], utility: &'a U, budget: f64, alpha: f64, slots: usize) -> Self {
        AdaptivePayer {
            users,
            utility,
            bids: bids(users),
            rules: Rules { budget, alpha: Some(alpha) },
            share_alpha: alpha,
            caches: (0..slots).map(|_| PathMemo::default()).collect(),
        }
    }

    /// `θ^{d,r}_i`, memoized in `slot`.
    pub fn theta(&mut self, slot: usize, i: usize, r: &Realization) -> f64 {
        if let Some(&v) = self.caches[slot].get(r) {
            return v;
        }
        let run = adaptive_alternate(i, self.users, self.utility, &self.bids, r, self.rules);
        let v = theta_of(&run, self.rules.budget, self.share_alpha);
        self.caches[slot].insert(self.users, &run.selected, r, v);
        v
    }
}

#[derive(Default, Clone, Copy)]
struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
    max: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
        self.max = self.max.max(x);
    }

    fn std_error(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        libm::sqrt(self.m2 / (self.n - 1) as f64 / self.n as f64)
    }
}

/// Expected payments of several participants of one adaptive allocation.
/// Sampled estimates share one stream of realizations.
#[allow(clippy::too_many_arguments)]
fn adaptive_expected<U: Utility + ?Sized>(
    participants: &[usize],
    observations: &ObservationSet,
    users: &[User],
    utility: &U,
    budget: f64,
    alpha: f64,
    accuracy: Accuracy,
    seed: u64,
    share_alpha: f64,
) -> Result<Vec<ParticipantPayment>> {
    accuracy.check()?;
    let mut payer = AdaptivePayer::new(users, utility, budget, alpha, participants.len());
    payer.share_alpha = share_alpha;
    let count = consistent_realization_count(users, observations);
    if count <= PAYMENT_ENUMERATION_CAP {
        let mut sums = vec![0.0; participants.len()];
        let mut maxima = vec![0.0f64; participants.len()];
        let mut n = 0;
        for r in consistent_realizations(users, observations) {
            let w = conditional_realization_weight(&r, observations, users);
            for (k, &i) in participants.iter().enumerate() {
                let t = payer.theta(k, i, &r);
                sums[k] += w * t;
                maxima[k] = maxima[k].max(t);
            }
            n += 1;
        }
        return Ok(participants
            .iter()
            .enumerate()
            .map(|(k, &i)| ParticipantPayment {
                id: i,
                theta: sums[k],
                estimator: Estimator::Exact,
                n_samples: n,
                std_error: 0.0,
                theta_d_max: maxima[k],
            })
            .collect());
    }
    let n = hoeffding_samples(budget, accuracy)?;
    let mut rng = rng_from(seed, &[PAYMENT_STREAM]);
    let mut stats = vec![Moments::default(); participants.len()];
    for _ in 0..n {
        let r = Realization::sample_consistent(users, observations, &mut rng);
        for (k, &i) in participants.iter().enumerate() {
            stats[k].push(payer.theta(k, i, &r));
        }
    }
    Ok(participants
        .iter()
        .zip(&stats)
        .map(|(&i, m)| ParticipantPayment {
            id: i,
            theta: m.mean,
            estimator: Estimator::Sampled,
            n_samples: m.n,
            std_error: m.std_error(),
            theta_d_max: m.max,
        })
        .collect())
}

/// Expected threshold payment `θ_i = Σ_r P(r | y_S)·θ^{d,r}_i` of one
/// participant of an adaptive truthful allocation.
pub fn expected_payment<U: Utility + ?Sized>(
    i: usize,
    result: &AllocationResult,
    users: &[User],
    utility: &U,
    accuracy: Accuracy,
    seed: u64,
) -> Result<ParticipantPayment> {
    if result.mechanism != MechanismKind::SeqTGreedy {
        return Err(invalid!("expected payments apply to SeqTGreedy, not {}", result.mechanism));
    }
    if !result.is_selected(i) {
        return Err(precondition!("user {i} is not a participant"));
    }
    let out = adaptive_expected(
        &[i],
        &result.observations,
        users,
        utility,
        result.budget,
        result.alpha,
        accuracy,
        seed,
        result.alpha,
    )?;
    Ok(out[0])
}

fn exact_entry(id: usize, theta: f64) -> ParticipantPayment {
    ParticipantPayment { id, theta, estimator: Estimator::Exact, n_samples: 1, std_error: 0.0, theta_d_max: theta }
}

/// Payments for every participant of `result`. Truthful mechanisms pay
/// threshold payments; the others pay true costs. `realization` is the
/// true realization, needed only by the privacy-off mechanisms.
pub fn payment_schedule<U: Utility + ?Sized>(
    result: &AllocationResult,
    users: &[User],
    utility: &U,
    realization: &Realization,
    accuracy: Accuracy,
    seed: u64,
) -> Result<PaymentSchedule> {
    payment_schedule_with_share_divisor(result, users, utility, realization, accuracy, seed, result.alpha)
}

/// [`payment_schedule`] with the budget in the share term of adaptive
/// threshold payments divided by `share_divisor` instead of the mechanism's
/// `α`. Any other divisor gives wrong payments: this exists to check that
/// the budget-feasibility checks catch such a fault.
#[allow(clippy::too_many_arguments)]
pub fn payment_schedule_with_share_divisor<U: Utility + ?Sized>(
    result: &AllocationResult,
    users: &[User],
    utility: &U,
    realization: &Realization,
    accuracy: Accuracy,
    seed: u64,
    share_divisor: f64,
) -> Result<PaymentSchedule> {
    let (budget, alpha) = (result.budget, result.alpha);
    let participants = match result.mechanism {
        MechanismKind::SeqTGreedy => adaptive_expected(
            &result.selected,
            &result.observations,
            users,
            utility,
            budget,
            alpha,
            accuracy,
            seed,
            share_divisor,
        )?,
        MechanismKind::TGreedy => {
            let open = collapse_privacy(users, realization);
            let truth = Realization::truth(&open);
            let rules = Rules { budget, alpha: Some(alpha) };
            let b = bids(users);
            result
                .selected
                .iter()
                .map(|&i| {
                    exact_entry(i, theta_of(&adaptive_alternate(i, &open, utility, &b, &truth, rules), budget, alpha))
                })
                .collect()
        }
        MechanismKind::ConstTGreedy => {
            let mut out = Vec::with_capacity(result.selected.len());
            for &i in &result.selected {
                let mut model = ExpectedModel::new(users, utility, n_locations(users), DEFAULT_MC_SAMPLES, 0);
                let run = allocate(
                    &mut model,
                    &others(users.len(), i),
                    &bids(users),
                    Rules { budget, alpha: Some(alpha) },
                    Some(i),
                    false,
                );
                out.push(exact_entry(i, theta_of(&run, budget, alpha)));
            }
            out
        }
        _ => result.selected.iter().map(|&i| exact_entry(i, users[i].true_cost)).collect(),
    };
    Ok(PaymentSchedule::new(participants, alpha, budget))
}

/// Every per-realization payment is at most `2·B·Δ_s / ΣΔ` (plus `1e-9`).
pub fn payment_upper_bound_check(result: &AllocationResult, schedule: &PaymentSchedule) -> bool {
    let total: f64 = result.marginals.iter().sum();
    result.selected.iter().zip(&result.marginals).all(|(&s, &d)| match schedule.get(s) {
        Some(p) => p.theta_d_max <= 2.0 * result.budget * d / total + 1e-9,
        None => false,
    })
}

/// Smallest `α` on the grid `1, 1+step, …, 2` for which the adaptive
/// truthful mechanism stays within budget on every probe realization, or 2.
///
/// Probes should be drawn from the prior, never from reported data.
pub fn optimize_alpha<U: Utility + ?Sized>(
    users: &[User],
    utility: &U,
    budget: f64,
    probes: &[Realization],
    grid_step: f64,
    accuracy: Accuracy,
    seed: u64,
) -> Result<f64> {
    if probes.is_empty() {
        return Err(invalid!("optimize_alpha needs at least one probe realization"));
    }
    if !(grid_step > 0.0 && grid_step.is_finite()) {
        return Err(invalid!("grid step {grid_step} must be positive"));
    }
    let steps = libm::floor(1.0 / grid_step + 1e-9) as usize;
    for k in 0..=steps {
        let alpha = (1.0 + k as f64 * grid_step).min(2.0);
        if certifies(users, utility, budget, alpha, probes, accuracy, seed)? {
            return Ok(alpha);
        }
    }
    Ok(2.0)
}

fn certifies<U: Utility + ?Sized>(
    users: &[User],
    utility: &U,
    budget: f64,
    alpha: f64,
    probes: &[Realization],
    accuracy: Accuracy,
    seed: u64,
) -> Result<bool> {
    for (p, r) in probes.iter().enumerate() {
        let result = seq_t_greedy(users, utility, budget, alpha, r)?;
        let schedule =
            payment_schedule(&result, users, utility, r, accuracy, crate::rng::derive_seed(seed, &[p as u64]))?;
        if schedule.total > budget + 1e-9 {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests;
