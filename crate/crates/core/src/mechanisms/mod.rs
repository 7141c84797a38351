//! Allocation policies: the adaptive truthful mechanism, its untruthful,
//! non-adaptive and privacy-off counterparts, and a random baseline.
//!
//! | privacy        | untruthful    | truthful       |
//! |----------------|---------------|----------------|
//! | off            | `Greedy`      | `TGreedy`      |
//! | on, fixed set  | `ConstGreedy` | `ConstTGreedy` |
//! | on, adaptive   | `SeqGreedy`   | `SeqTGreedy`   |
//!
//! Truthful variants run the proportional-share test with budget reduction
//! factor `alpha`; untruthful ones fill the budget and pay true costs.

pub(crate) mod engine;
pub(crate) mod memo;

use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::domain::{bids, realized_utility, ObservationSet, PrivacyProfile, Realization, User, Utility};
use crate::error::{invalid, Result};
use crate::rng::rng_from;

use engine::{allocate, AdaptiveModel, ExpectedModel, Rules};
pub use engine::{share_bound, Outcome, StopReason, TestValues, TraceRecord, SHARE_SLACK};

/// Monte-Carlo draws for `G(S)` increments when a utility has no closed form.
pub const DEFAULT_MC_SAMPLES: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MechanismKind {
    Greedy,
    TGreedy,
    ConstGreedy,
    ConstTGreedy,
    SeqGreedy,
    SeqTGreedy,
    Random,
}

impl MechanismKind {
    pub const ALL: [MechanismKind; 7] = [
        MechanismKind::Greedy,
        MechanismKind::TGreedy,
        MechanismKind::ConstGreedy,
        MechanismKind::ConstTGreedy,
        MechanismKind::SeqGreedy,
        MechanismKind::SeqTGreedy,
        MechanismKind::Random,
    ];

    /// Pays threshold payments rather than true costs.
    pub fn is_truthful(self) -> bool {
        matches!(self, MechanismKind::TGreedy | MechanismKind::ConstTGreedy | MechanismKind::SeqTGreedy)
    }

    pub fn name(self) -> &'static str {
        match self {
            MechanismKind::Greedy => "Greedy",
            MechanismKind::TGreedy => "TGreedy",
            MechanismKind::ConstGreedy => "ConstGreedy",
            MechanismKind::ConstTGreedy => "ConstTGreedy",
            MechanismKind::SeqGreedy => "SeqGreedy",
            MechanismKind::SeqTGreedy => "SeqTGreedy",
            MechanismKind::Random => "Random",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    pub mechanism: MechanismKind,
    /// Participants in allocation order.
    pub selected: Vec<usize>,
    pub observations: ObservationSet,
    /// Marginal gain of each participant at the time it was allocated.
    pub marginals: Vec<f64>,
    /// Sum of the participants' bids.
    pub spent_bids: f64,
    pub alpha: f64,
    pub budget: f64,
    pub stop_reason: StopReason,
    pub trace: Vec<TraceRecord>,
}

impl AllocationResult {
    pub fn realized_utility<U: Utility + ?Sized>(&self, utility: &U) -> f64 {
        realized_utility(utility, &self.observations)
    }

    /// Sum of true costs of the participants (what untruthful mechanisms pay).
    pub fn true_cost_total(&self, users: &[User]) -> f64 {
        self.selected.iter().map(|&s| users[s].true_cost).sum()
    }

    pub fn is_selected(&self, user: usize) -> bool {
        self.selected.contains(&user)
    }
}

fn check_budget(budget: f64) -> Result<()> {
    if budget > 0.0 && budget.is_finite() {
        Ok(())
    } else {
        Err(invalid!("budget {budget} must be positive"))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha >= 1.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(invalid!("alpha {alpha} must be at least 1"))
    }
}

fn all_users(users: &[User]) -> Vec<usize> {
    (0..users.len()).collect()
}

pub(crate) fn n_locations(users: &[User]) -> usize {
    users.iter().flat_map(|u| u.privacy_profile.footprint().iter().last()).map(|a| a.index() + 1).max().unwrap_or(0)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_run<U: Utility + ?Sized>(
    kind: MechanismKind,
    users: &[User],
    utility: &U,
    bid_vec: &[f64],
    budget: f64,
    alpha: Option<f64>,
    realization: &Realization,
) -> Result<AllocationResult> {
    check_budget(budget)?;
    if let Some(a) = alpha {
        check_alpha(a)?;
    }
    let mut model = AdaptiveModel::new(users, utility, realization);
    let run = allocate(&mut model, &all_users(users), bid_vec, Rules { budget, alpha }, None, true);
    let mut observations = ObservationSet::new();
    for &s in &run.selected {
        observations.reveal(users, realization, s)?;
    }
    Ok(AllocationResult {
        mechanism: kind,
        selected: run.selected,
        observations,
        marginals: run.marginals,
        spent_bids: run.spent,
        alpha: alpha.unwrap_or(1.0),
        budget,
        stop_reason: run.stop,
        trace: run.trace,
    })
}

/// Adaptive truthful allocation: greedy on conditional expected marginal
/// gain per unit bid, with the proportional-share stopping rule.
pub fn seq_t_greedy<U: Utility + ?Sized>(
    users: &[User],
    utility: &U,
    budget: f64,
    alpha: f64,
    realization: &Realization,
) -> Result<AllocationResult> {
    adaptive_run(MechanismKind::SeqTGreedy, users, utility, &bids(users), budget, Some(alpha), realization)
}

/// Same as [`seq_t_greedy`] with bids overridden (for deviation probes).
pub fn seq_t_greedy_with_bids<U: Utility + ?Sized>(
    users: &[User],
    utility: &U,
    bid_vec: &[f64],
    budget: f64,
    alpha: f64,
    realization: &Realization,
) -> Result<AllocationResult> {
    adaptive_run(MechanismKind::SeqTGreedy, users, utility, bid_vec, budget, Some(alpha), realization)
}

/// Adaptive untruthful allocation: fills the budget, no share test.
pub fn seq_greedy<U: Utility + ?Sized>(
    users: &[User],
    utility: &U,
    budget: f64,
    realization: &Realization,
) -> Result<AllocationResult> {
    adaptive_run(MechanismKind::SeqGreedy, users, utility, &bids(users), budget, None, realization)
}

/// Non-adaptive variants: greedy on increments of `G(S)`; profiles are
/// revealed from `realization` only after the set is fixed.
pub fn const_variants<U: Utility + ?Sized>(
    users: &[User],
    utility: &U,
    budget: f64,
    alpha: f64,
    kind: MechanismKind,
    realization: &Realization,
) -> Result<AllocationResult> {
    let alpha = match kind {
        MechanismKind::ConstGreedy => None,
        MechanismKind::ConstTGreedy => Some(alpha),
        other => return Err(invalid!("{other} is not a non-adaptive variant")),
    };
    check_budget(budget)?;
    if let Some(a) = alpha {
        check_alpha(a)?;
    }
    let mut model = ExpectedModel::new(users, utility, n_locations(users), DEFAULT_MC_SAMPLES, 0);
    let run = allocate(&mut model, &all_users(users), &bids(users), Rules { budget, alpha }, None, true);
    let mut observations = ObservationSet::new();
    for &s in &run.selected {
        observations.reveal(users, realization, s)?;
    }
    Ok(AllocationResult {
        mechanism: kind,
        selected: run.selected,
        observations,
        marginals: run.marginals,
        spent_bids: run.spent,
        alpha: alpha.unwrap_or(1.0),
        budget,
        stop_reason: run.stop,
        trace: run.trace,
    })
}

/// Users with every privacy profile replaced by the realized profile.
pub fn collapse_privacy(users: &[User], realization: &Realization) -> Vec<User> {
    users
        .iter()
        .map(|u| User {
            privacy_profile: PrivacyProfile::deterministic(realization.profile(users, u.id).clone()),
            true_index: 0,
            ..u.clone()
        })
        .collect()
}

/// Privacy-off variants: profiles known exactly.
pub fn deterministic_variants<U: Utility + ?Sized>(
    users: &[User],
    utility: &U,
    budget: f64,
    alpha: f64,
    kind: MechanismKind,
    realization: &Realization,
) -> Result<AllocationResult> {
    let alpha = match kind {
        MechanismKind::Greedy => None,
        MechanismKind::TGreedy => Some(alpha),
        other => return Err(invalid!("{other} is not a privacy-off variant")),
    };
    let open = collapse_privacy(users, realization);
    let truth = Realization::truth(&open);
    let mut result = adaptive_run(kind, &open, utility, &bids(users), budget, alpha, &truth)?;
    // report observations against the original supports
    let mut observations = ObservationSet::new();
    for &s in &result.selected {
        observations.reveal(users, realization, s)?;
    }
    result.observations = observations;
    Ok(result)
}

/// Uniformly random order; take each user whose true cost still fits.
pub fn random_baseline(users: &[User], budget: f64, realization: &Realization, seed: u64) -> Result<AllocationResult> {
    check_budget(budget)?;
    let mut order = all_users(users);
    order.shuffle(&mut rng_from(seed, &[0x7261_6e64]));
    let mut spent = 0.0;
    let mut selected = Vec::new();
    let mut trace = Vec::new();
    for w in order {
        let c = users[w].true_cost;
        let fits = spent + c <= budget;
        trace.push(TraceRecord {
            user_id: w,
            bid: c,
            delta: 0.0,
            cumulative_utility: 0.0,
            test_values: TestValues { budget_test: spent + c, share_bound: None },
            outcome: if fits { Outcome::Allocated } else { Outcome::OverBudget },
        });
        if fits {
            spent += c;
            selected.push(w);
        }
    }
    let mut observations = ObservationSet::new();
    for &s in &selected {
        observations.reveal(users, realization, s)?;
    }
    Ok(AllocationResult {
        mechanism: MechanismKind::Random,
        marginals: Vec::new(),
        selected,
        observations,
        spent_bids: spent,
        alpha: 1.0,
        budget,
        stop_reason: StopReason::ExhaustedUsers,
        trace,
    })
}

/// Run any mechanism on one true realization.
pub fn run_mechanism<U: Utility + ?Sized>(
    kind: MechanismKind,
    users: &[User],
    utility: &U,
    budget: f64,
    alpha: f64,
    realization: &Realization,
    seed: u64,
) -> Result<AllocationResult> {
    match kind {
        MechanismKind::SeqTGreedy => seq_t_greedy(users, utility, budget, alpha, realization),
        MechanismKind::SeqGreedy => seq_greedy(users, utility, budget, realization),
        MechanismKind::ConstGreedy | MechanismKind::ConstTGreedy => {
            const_variants(users, utility, budget, alpha, kind, realization)
        }
        MechanismKind::Greedy | MechanismKind::TGreedy => {
            deterministic_variants(users, utility, budget, alpha, kind, realization)
        }
        MechanismKind::Random => random_baseline(users, budget, realization, seed),
    }
}

#[cfg(test)]
mod tests;
