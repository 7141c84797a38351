//! Brute-force ground truth for desk-sized instances: the optimal adaptive
//! policy by dynamic programming, bid sweeps for thresholds, and the
//! approximation guarantees of the adaptive truthful mechanism.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::domain::{
    expected_marginal_gain, LocationSet, Observation, ObservationSet, PrivacyProfile, Realization, Region,
    SensingProfile, User, Utility, ENUMERATION_CAP,
};
use crate::error::{precondition, Error, Result};
use crate::mechanisms::memo::PathMemo;
use crate::mechanisms::{seq_greedy, seq_t_greedy, seq_t_greedy_with_bids};
use crate::payments::{AdaptivePayer, PAYMENT_STREAM};
use crate::rng::{rng_from, Rng};

pub const SEQ_OPT_MAX_USERS: usize = 8;
pub const SEQ_OPT_MAX_OUTCOMES: f64 = 4096.0;

/// `(e − 1)/(3e)`, the constant of the approximation guarantee.
pub const APPROXIMATION_CONSTANT: f64 = (core::f64::consts::E - 1.0) / (3.0 * core::f64::consts::E);

const INSTANCE_STREAM: u64 = 0x696e_7374;

/// Smallest cost drawn by [`random_instance`].
pub const RANDOM_INSTANCE_MIN_COST: f64 = 0.01;

/// A seeded random instance: `n_locations` locations (unit or random
/// weights), users with 1..=`max_profiles` distinct profiles of 1 to 3
/// locations each, random support probabilities and bids equal to costs
/// in `[0.01, 1]`.
pub fn random_instance(seed: u64, n_users: usize, max_profiles: usize, n_locations: usize) -> (Region, Vec<User>) {
    let mut rng = rng_from(seed, &[INSTANCE_STREAM]);
    let region = if rng.random_bool(0.5) {
        Region::abstract_unit(n_locations)
    } else {
        Region::abstract_weighted((0..n_locations).map(|_| rng.random_range(0.5..2.0)).collect())
            .expect("positive weights")
    };
    let users = (0..n_users).map(|id| random_user(&mut rng, id, max_profiles, n_locations)).collect();
    (region, users)
}

fn random_user(rng: &mut Rng, id: usize, max_profiles: usize, n_locations: usize) -> User {
    let k = rng.random_range(1..=max_profiles.max(1));
    let mut profiles: Vec<SensingProfile> = Vec::with_capacity(k);
    let mut attempts = 0;
    while profiles.len() < k && attempts < 50 {
        attempts += 1;
        let size = rng.random_range(1..=3.min(n_locations));
        let locs: Vec<u32> = sample(rng, n_locations, size).iter().map(|a| a as u32).collect();
        let p = SensingProfile::from_indices(&locs);
        if !profiles.contains(&p) {
            profiles.push(p);
        }
    }
    let weights: Vec<f64> = profiles.iter().map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let pp = PrivacyProfile::new(profiles.into_iter().zip(weights.iter().map(|w| w / total)).collect())
        .expect("distinct profiles with normalized weights");
    let truth = pp.sample(rng);
    let cost = rng.random_range(RANDOM_INSTANCE_MIN_COST..=1.0);
    User::new(id, cost, pp, truth).expect("valid random user")
}

fn outcome_count(users: &[User]) -> f64 {
    users.iter().map(|u| u.privacy_profile.len() as f64).product()
}

fn check_desk_caps(users: &[User]) -> Result<()> {
    if users.len() > SEQ_OPT_MAX_USERS {
        return Err(Error::CapExceeded { what: "users", size: users.len() as f64, cap: SEQ_OPT_MAX_USERS as f64 });
    }
    let outcomes = outcome_count(users);
    if outcomes > SEQ_OPT_MAX_OUTCOMES {
        return Err(Error::CapExceeded { what: "joint profile outcomes", size: outcomes, cap: SEQ_OPT_MAX_OUTCOMES });
    }
    Ok(())
}

struct SeqOpt<'a, U: ?Sized> {
    users: &'a [User],
    utility: &'a U,
    budget: f64,
    strides: Vec<usize>,
    memo: Vec<f64>,
}

impl<U: Utility + ?Sized> SeqOpt<'_, U> {
    /// State key: mixed-radix digits, 0 for unselected users and `k + 1` for
    /// a user revealed with profile `k`.
    fn value(&mut self, key: usize, open: &mut [bool], covered: &LocationSet, spent: f64) -> f64 {
        if !self.memo[key].is_nan() {
            return self.memo[key];
        }
        let mut best = self.utility.value(covered);
        for w in 0..self.users.len() {
            let u = &self.users[w];
            if !open[w] || spent + u.true_cost > self.budget {
                continue;
            }
            open[w] = false;
            let mut ev = 0.0;
            for (k, (profile, p)) in u.privacy_profile.support().iter().enumerate() {
                let mut next = covered.clone();
                next.insert_profile(profile);
                ev += p * self.value(key + self.strides[w] * (k + 1), open, &next, spent + u.true_cost);
            }
            open[w] = true;
            best = best.max(ev);
        }
        self.memo[key] = best;
        best
    }
}

/// Expected utility of the optimal adaptive policy that pays true costs
/// within `budget`.
pub fn seq_opt_value<U: Utility + ?Sized>(users: &[User], utility: &U, budget: f64) -> Result<f64> {
    check_desk_caps(users)?;
    let mut strides = Vec::with_capacity(users.len());
    let mut size = 1usize;
    for u in users {
        strides.push(size);
        size *= u.privacy_profile.len() + 1;
    }
    let mut dp = SeqOpt { users, utility, budget, strides, memo: vec![f64::NAN; size] };
    Ok(dp.value(0, &mut vec![true; users.len()], &LocationSet::default(), 0.0))
}

/// Exact `Σ_r P(r)·f(r)` over every joint realization.
pub fn average_over_realizations<F>(users: &[User], mut f: F) -> Result<f64>
where
    F: FnMut(&Realization) -> Result<f64>,
{
    let outcomes = outcome_count(users);
    if outcomes > ENUMERATION_CAP {
        return Err(Error::CapExceeded { what: "realizations", size: outcomes, cap: ENUMERATION_CAP });
    }
    let mut total = 0.0;
    for r in crate::domain::consistent_realizations(users, &ObservationSet::new()) {
        total += r.probability(users) * f(&r)?;
    }
    Ok(total)
}

/// Largest utility a single profile of any user can contribute.
pub fn f_max<U: Utility + ?Sized>(users: &[User], utility: &U) -> f64 {
    users
        .iter()
        .flat_map(|u| u.privacy_profile.support().iter())
        .map(|(s, _)| utility.single_profile_value(s))
        .fold(0.0, f64::max)
}

/// Largest bid in `[c_min, budget]` at which `i` is still selected, found by
/// bisection to resolution `(budget − c_min)/2^grid`.
#[allow(clippy::too_many_arguments)]
pub fn bid_sweep_threshold<U: Utility + ?Sized>(
    i: usize,
    r: &Realization,
    users: &[User],
    utility: &U,
    budget: f64,
    alpha: f64,
    c_min: f64,
    grid: u32,
) -> Result<f64> {
    if i >= users.len() || !seq_t_greedy(users, utility, budget, alpha, r)?.is_selected(i) {
        return Err(precondition!("user {i} is not selected at its own bid"));
    }
    let mut bids = crate::domain::bids(users);
    let mut selected_at = |b: f64| -> Result<bool> {
        bids[i] = b;
        Ok(seq_t_greedy_with_bids(users, utility, &bids, budget, alpha, r)?.is_selected(i))
    };
    if selected_at(budget)? {
        return Ok(budget);
    }
    let (mut lo, mut hi) = (c_min.min(users[i].bid), budget);
    for _ in 0..grid {
        let mid = 0.5 * (lo + hi);
        if selected_at(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Expected profit of one user as a function of its bid, all other bids
/// fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfitCurve {
    pub user: usize,
    pub truthful_bid: f64,
    pub truthful_profit: f64,
    /// `(bid, expected profit)` for each deviation.
    pub deviations: Vec<(f64, f64)>,
}

impl ProfitCurve {
    /// Largest gain from deviating (non-positive for a truthful mechanism).
    pub fn best_deviation_gain(&self) -> f64 {
        self.deviations.iter().map(|&(_, p)| p - self.truthful_profit).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Expected profit `Σ_r P(r)·(θ^{d,r} − c)·[selected under r]` of user `s`
/// of the adaptive truthful mechanism at its true cost and at each bid in
/// `deviations`, by exact enumeration of realizations. The allocation is
/// re-run at every bid; the payment `θ^{d,r}` does not depend on it.
pub fn profit_curve<U: Utility + ?Sized>(
    s: usize,
    users: &[User],
    utility: &U,
    budget: f64,
    alpha: f64,
    deviations: &[f64],
) -> Result<ProfitCurve> {
    if s >= users.len() {
        return Err(precondition!("no user {s}"));
    }
    let outcomes = outcome_count(users);
    if outcomes > ENUMERATION_CAP {
        return Err(Error::CapExceeded { what: "realizations", size: outcomes, cap: ENUMERATION_CAP });
    }
    let cost = users[s].true_cost;
    let mut payer = AdaptivePayer::new(users, utility, budget, alpha, 1);
    let bid_points: Vec<f64> = core::iter::once(cost).chain(deviations.iter().copied()).collect();
    let mut memos: Vec<PathMemo<bool>> = bid_points.iter().map(|_| PathMemo::default()).collect();
    let mut profit = vec![0.0; bid_points.len()];
    let mut bid_vec = crate::domain::bids(users);
    bid_vec[s] = cost;
    for r in crate::domain::consistent_realizations(users, &ObservationSet::new()) {
        let p = r.probability(users);
        let mut theta = None;
        for (k, &b) in bid_points.iter().enumerate() {
            let selected = match memos[k].get(&r) {
                Some(&hit) => hit,
                None => {
                    bid_vec[s] = b;
                    let res = seq_t_greedy_with_bids(users, utility, &bid_vec, budget, alpha, &r)?;
                    let hit = res.is_selected(s);
                    memos[k].insert(users, &res.selected, &r, hit);
                    hit
                }
            };
            if selected {
                let t = *theta.get_or_insert_with(|| payer.theta(0, s, &r));
                profit[k] += p * (t - cost);
            }
        }
    }
    Ok(ProfitCurve {
        user: s,
        truthful_bid: cost,
        truthful_profit: profit[0],
        deviations: deviations.iter().copied().zip(profit[1..].iter().copied()).collect(),
    })
}

/// Allocation and per-realization thresholds of the adaptive truthful
/// mechanism under one realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationOutcome {
    pub realization: Realization,
    pub probability: f64,
    pub selected: Vec<usize>,
    pub marginals: Vec<f64>,
    /// `θ^{d,r}_s` for each selected user, in selection order.
    pub thresholds: Vec<f64>,
}

/// [`RealizationOutcome`] for every joint realization.
pub fn realization_outcomes<U: Utility + ?Sized>(
    users: &[User],
    utility: &U,
    budget: f64,
    alpha: f64,
) -> Result<Vec<RealizationOutcome>> {
    let outcomes = outcome_count(users);
    if outcomes > ENUMERATION_CAP {
        return Err(Error::CapExceeded { what: "realizations", size: outcomes, cap: ENUMERATION_CAP });
    }
    let mut payer = AdaptivePayer::new(users, utility, budget, alpha, users.len());
    let mut out = Vec::new();
    for r in crate::domain::consistent_realizations(users, &ObservationSet::new()) {
        let res = seq_t_greedy(users, utility, budget, alpha, &r)?;
        let thresholds = res.selected.iter().map(|&s| payer.theta(s, s, &r)).collect();
        out.push(RealizationOutcome {
            probability: r.probability(users),
            realization: r,
            selected: res.selected,
            marginals: res.marginals,
            thresholds,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub seq_opt_value: f64,
    pub mechanism_value: f64,
    /// `f_max / seq_opt_value`; reported as 1 when the optimum is 0.
    pub gamma: f64,
    pub ratio: f64,
    pub bound: f64,
    pub satisfied: bool,
    /// The optimum is 0 or the bound is not positive, so the check is vacuous.
    pub degenerate: bool,
}

/// Compare the adaptive truthful mechanism (`α = 2`) against the optimal
/// adaptive policy. The mechanism value is exact when the joint support is
/// small enough and a Monte-Carlo mean over `n_monte_carlo` draws otherwise.
pub fn verify_approximation<U: Utility + ?Sized>(
    users: &[User],
    utility: &U,
    budget: f64,
    n_monte_carlo: usize,
    seed: u64,
) -> Result<OracleReport> {
    let opt = seq_opt_value(users, utility, budget)?;
    let run = |r: &Realization| Ok(seq_t_greedy(users, utility, budget, 2.0, r)?.realized_utility(utility));
    let mechanism_value = if outcome_count(users) <= ENUMERATION_CAP {
        average_over_realizations(users, run)?
    } else {
        let mut rng = rng_from(seed, &[PAYMENT_STREAM]);
        let n = n_monte_carlo.max(1);
        let mut total = 0.0;
        for _ in 0..n {
            total += run(&Realization::sample(users, &mut rng))?;
        }
        total / n as f64
    };
    let fm = f_max(users, utility);
    let (gamma, ratio) = if opt > 0.0 { (fm / opt, mechanism_value / opt) } else { (1.0, 1.0) };
    let bound = APPROXIMATION_CONSTANT - gamma;
    Ok(OracleReport {
        seq_opt_value: opt,
        mechanism_value,
        gamma,
        ratio,
        bound,
        satisfied: ratio >= bound - 1e-9,
        degenerate: opt <= 0.0 || bound <= 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntermediateBoundsReport {
    pub optimal: f64,
    pub greedy: f64,
    pub truthful_greedy: f64,
    pub f_max: f64,
    pub alpha: f64,
    /// `e/(e−1)·(greedy + f_max)`, an upper bound on `optimal`.
    pub optimal_bound: f64,
    /// `(1+α)·truthful_greedy + α·f_max`, an upper bound on `greedy`.
    pub greedy_bound: f64,
    pub optimal_bound_holds: bool,
    pub greedy_bound_holds: bool,
}

/// Exact average utilities of the optimal, greedy and truthful greedy
/// adaptive policies, checked against the two intermediate bounds.
pub fn verify_intermediate_bounds<U: Utility + ?Sized>(
    users: &[User],
    utility: &U,
    budget: f64,
    alpha: f64,
) -> Result<IntermediateBoundsReport> {
    let optimal = seq_opt_value(users, utility, budget)?;
    let greedy =
        average_over_realizations(users, |r| Ok(seq_greedy(users, utility, budget, r)?.realized_utility(utility)))?;
    let truthful_greedy = average_over_realizations(users, |r| {
        Ok(seq_t_greedy(users, utility, budget, alpha, r)?.realized_utility(utility))
    })?;
    let fm = f_max(users, utility);
    let e = core::f64::consts::E;
    let optimal_bound = e / (e - 1.0) * (greedy + fm);
    let greedy_bound = (1.0 + alpha) * truthful_greedy + alpha * fm;
    Ok(IntermediateBoundsReport {
        optimal,
        greedy,
        truthful_greedy,
        f_max: fm,
        alpha,
        optimal_bound,
        greedy_bound,
        optimal_bound_holds: optimal <= optimal_bound + 1e-9,
        greedy_bound_holds: greedy <= greedy_bound + 1e-9,
    })
}

/// Draw `obs ⊆ obs'` over random users with profiles revealed from one
/// prior draw, and a user outside `obs'`. `None` when every user would be
/// observed.
pub fn random_nested_observations(users: &[User], rng: &mut Rng) -> Option<(ObservationSet, ObservationSet, usize)> {
    if users.is_empty() {
        return None;
    }
    let r = Realization::sample(users, rng);
    let mut order: Vec<usize> = (0..users.len()).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), rng);
    let w = order.pop()?;
    let large = rng.random_range(0..=order.len());
    let small = rng.random_range(0..=large);
    let mut obs = ObservationSet::new();
    let mut obs_sup = ObservationSet::new();
    for (k, &u) in order[..large].iter().enumerate() {
        let o = Observation { user: u, profile_index: r.profile_index(u), profile: r.profile(users, u).clone() };
        if k < small {
            obs.push(o.clone()).ok()?;
        }
        obs_sup.push(o).ok()?;
    }
    Some((obs, obs_sup, w))
}

/// `Δ(w | obs) ≥ Δ(w | obs') ≥ 0` for `obs ⊆ obs'`, up to `1e-12`.
pub fn adaptive_submodularity_holds<U: Utility + ?Sized>(
    w: &User,
    obs: &ObservationSet,
    obs_sup: &ObservationSet,
    utility: &U,
) -> Result<bool> {
    if let Some(o) = obs.entries().iter().find(|o| obs_sup.get(o.user) != Some(*o)) {
        return Err(precondition!("observation of user {} missing from the larger set", o.user));
    }
    let small = expected_marginal_gain(w, obs, utility)?;
    let large = expected_marginal_gain(w, obs_sup, utility)?;
    Ok(small >= large - 1e-12 && large >= -1e-12)
}

#[cfg(test)]
mod tests;
