//! The greedy allocation loop shared by every mechanism, and the gain
//! models it runs against.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::domain::{support_gain, LocationSet, Realization, User, Utility};

/// Slack on the right-hand side of the proportional-share test.
pub const SHARE_SLACK: f64 = 1e-12;

/// Expected marginal gain of each user against some selection state.
pub(crate) trait GainModel {
    fn gain(&mut self, user: usize) -> f64;
    fn commit(&mut self, user: usize);
}

/// Adaptive model: gains are conditioned on the realized profiles of the
/// users committed so far.
pub(crate) struct AdaptiveModel<'a, U: ?Sized> {
    users: &'a [User],
    utility: &'a U,
    realization: &'a Realization,
    covered: LocationSet,
    cache: Vec<Option<f64>>,
}

impl<'a, U: Utility + ?Sized> AdaptiveModel<'a, U> {
    pub fn new(users: &'a [User], utility: &'a U, realization: &'a Realization) -> Self {
        AdaptiveModel { users, utility, realization, covered: LocationSet::default(), cache: vec![None; users.len()] }
    }
}

impl<U: Utility + ?Sized> GainModel for AdaptiveModel<'_, U> {
    #[inline]
    fn gain(&mut self, user: usize) -> f64 {
        if let Some(g) = self.cache[user] {
            return g;
        }
        let g = support_gain(self.utility, &self.covered, &self.users[user].privacy_profile);
        if self.utility.is_local() {
            self.cache[user] = Some(g);
        }
        g
    }

    fn commit(&mut self, user: usize) {
        let profile = self.realization.profile(self.users, user);
        let mut fresh = LocationSet::default();
        for &a in profile.locations() {
            if self.covered.insert(a) {
                fresh.insert(a);
            }
        }
        if fresh.is_empty() {
            return;
        }
        // Cached gains are recomputed from scratch, never patched, so the
        // cached and uncached runs agree bit for bit.
        for (w, slot) in self.cache.iter_mut().enumerate() {
            if slot.is_some() && self.users[w].privacy_profile.footprint().intersects(&fresh) {
                *slot = None;
            }
        }
    }
}

/// Non-adaptive model: gains are increments of `G(S) = E[g(y_S)]`, with no
/// profile revealed during selection.
pub(crate) struct ExpectedModel<'a, U: ?Sized> {
    users: &'a [User],
    utility: &'a U,
    uncovered: Vec<f64>,
    selected: Vec<usize>,
    closed_form: bool,
    mc_samples: usize,
    seed: u64,
}

impl<'a, U: Utility + ?Sized> ExpectedModel<'a, U> {
    pub fn new(users: &'a [User], utility: &'a U, n_locations: usize, mc_samples: usize, seed: u64) -> Self {
        let uncovered = vec![1.0; n_locations];
        let closed_form =
            users.first().is_none_or(|u| utility.expected_gain_independent(&uncovered, &u.privacy_profile).is_some());
        ExpectedModel { users, utility, uncovered, selected: Vec::new(), closed_form, mc_samples, seed }
    }

    fn expected_value(&self, set: &[usize]) -> f64 {
        crate::domain::expected_utility_nonadaptive(set, self.users, self.utility, self.mc_samples, self.seed).value
    }
}

impl<U: Utility + ?Sized> GainModel for ExpectedModel<'_, U> {
    fn gain(&mut self, user: usize) -> f64 {
        let pp = &self.users[user].privacy_profile;
        if self.closed_form {
            return self.utility.expected_gain_independent(&self.uncovered, pp).expect("closed form available");
        }
        let mut with = self.selected.clone();
        with.push(user);
        (self.expected_value(&with) - self.expected_value(&self.selected)).max(0.0)
    }

    fn commit(&mut self, user: usize) {
        let pp = &self.users[user].privacy_profile;
        if self.closed_form {
            for a in pp.footprint().iter() {
                self.uncovered[a.index()] *= 1.0 - pp.inclusion_probability(a);
            }
        }
        self.selected.push(user);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// No candidate left to consider.
    ExhaustedUsers,
    /// The best candidate failed the proportional-share test.
    ProportionalShareStop,
    /// Candidates ran out with the last ones rejected for budget.
    BudgetStop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Allocated,
    ZeroGain,
    OverBudget,
    ShareStop,
}

/// One considered candidate, in decision order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub user_id: usize,
    pub bid: f64,
    pub delta: f64,
    /// Sum of allocated marginals after this decision.
    pub cumulative_utility: f64,
    pub test_values: TestValues,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestValues {
    /// Spent bids plus this bid, compared against the budget.
    pub budget_test: f64,
    /// Right-hand side of the proportional-share test, when applied.
    pub share_bound: Option<f64>,
}

/// Selection state seen by an outside user at one step of a run: used for
/// threshold payments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ProbeState {
    /// Sum of marginals allocated before this state.
    pub prefix_delta: f64,
    /// Sum of bids allocated before this state.
    pub spent: f64,
    /// Gain of the probed user against this state.
    pub probe_gain: f64,
    /// (bid, gain) of the last candidate considered in this state, or
    /// `None` when the run ran out of candidates in it.
    pub last: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Run {
    pub selected: Vec<usize>,
    pub marginals: Vec<f64>,
    pub spent: f64,
    pub stop: StopReason,
    pub trace: Vec<TraceRecord>,
    pub probe_states: Vec<ProbeState>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Rules {
    pub budget: f64,
    /// Budget reduction factor of the proportional-share test; `None`
    /// disables the test.
    pub alpha: Option<f64>,
}

/// Proportional-share bound `(B/α)·Δ/(ΣΔ + Δ)`.
#[inline]
pub fn share_bound(budget: f64, alpha: f64, delta: f64, prefix: f64) -> f64 {
    if delta <= 0.0 {
        return 0.0;
    }
    budget / alpha * delta / (prefix + delta)
}

/// Greedy allocation by gain per unit bid.
///
/// Each step drops zero-gain candidates, then considers the best ratio
/// (ties to the lowest id): over budget → dropped and the next best is
/// considered; passes the share test → allocated; fails it → the run stops.
pub(crate) fn allocate<M: GainModel>(
    model: &mut M,
    candidates: &[usize],
    bids: &[f64],
    rules: Rules,
    probe: Option<usize>,
    record_trace: bool,
) -> Run {
    let mut remaining: Vec<usize> = candidates.to_vec();
    remaining.sort_unstable();
    let mut gains: Vec<f64> = Vec::with_capacity(remaining.len());
    let mut run = Run {
        selected: Vec::new(),
        marginals: Vec::new(),
        spent: 0.0,
        stop: StopReason::ExhaustedUsers,
        trace: Vec::new(),
        probe_states: Vec::new(),
    };
    let mut prefix = 0.0;
    let mut last_skip = false;

    'states: loop {
        gains.clear();
        let mut k = 0;
        while k < remaining.len() {
            let w = remaining[k];
            let g = model.gain(w);
            if g > 0.0 {
                gains.push(g);
                k += 1;
            } else {
                if record_trace {
                    run.trace.push(record(w, bids[w], 0.0, prefix, run.spent, None, Outcome::ZeroGain));
                }
                remaining.remove(k);
            }
        }
        let probe_gain = probe.map(|p| model.gain(p));
        let push_probe = |run: &mut Run, last: Option<(f64, f64)>| {
            if let Some(pg) = probe_gain {
                run.probe_states.push(ProbeState { prefix_delta: prefix, spent: run.spent, probe_gain: pg, last });
            }
        };

        loop {
            if remaining.is_empty() {
                push_probe(&mut run, None);
                run.stop = if last_skip && !run.selected.is_empty() {
                    StopReason::BudgetStop
                } else {
                    StopReason::ExhaustedUsers
                };
                break 'states;
            }
            let mut best = 0;
            for j in 1..remaining.len() {
                // strict: equal ratios keep the lower id
                if gains[j] * bids[remaining[best]] > gains[best] * bids[remaining[j]] {
                    best = j;
                }
            }
            let w = remaining[best];
            let (b, delta) = (bids[w], gains[best]);
            if run.spent + b > rules.budget {
                if record_trace {
                    run.trace.push(record(w, b, delta, prefix, run.spent, None, Outcome::OverBudget));
                }
                remaining.remove(best);
                gains.remove(best);
                last_skip = true;
                continue;
            }
            last_skip = false;
            let bound = rules.alpha.map(|a| share_bound(rules.budget, a, delta, prefix));
            if bound.is_none_or(|rhs| b <= rhs + SHARE_SLACK) {
                push_probe(&mut run, Some((b, delta)));
                if record_trace {
                    run.trace.push(record(w, b, delta, prefix + delta, run.spent, bound, Outcome::Allocated));
                }
                run.selected.push(w);
                run.marginals.push(delta);
                run.spent += b;
                prefix += delta;
                model.commit(w);
                remaining.remove(best);
                continue 'states;
            }
            push_probe(&mut run, Some((b, delta)));
            if record_trace {
                run.trace.push(record(w, b, delta, prefix, run.spent, bound, Outcome::ShareStop));
            }
            run.stop = StopReason::ProportionalShareStop;
            break 'states;
        }
    }
    run
}

fn record(
    user_id: usize,
    bid: f64,
    delta: f64,
    cumulative: f64,
    spent: f64,
    share_bound: Option<f64>,
    outcome: Outcome,
) -> TraceRecord {
    TraceRecord {
        user_id,
        bid,
        delta,
        cumulative_utility: cumulative,
        test_values: TestValues { budget_test: spent + bid, share_bound },
        outcome,
    }
}
