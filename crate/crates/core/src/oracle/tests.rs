use super::*;
use crate::mechanisms::{run_mechanism, MechanismKind};
use proptest::prelude::*;

fn det(id: usize, cost: f64, locs: &[u32]) -> User {
    User::deterministic(id, cost, SensingProfile::from_indices(locs))
}

fn mixed(id: usize, cost: f64, support: &[(&[u32], f64)], truth: usize) -> User {
    let pp = PrivacyProfile::new(support.iter().map(|(s, p)| (SensingProfile::from_indices(s), *p)).collect()).unwrap();
    User::new(id, cost, pp, truth).unwrap()
}

/// An explicit adaptive policy: stop, or pick a user and continue with one
/// sub-policy per profile it may reveal.
enum Policy {
    Stop,
    Pick(usize, Vec<Policy>),
}

fn all_policies(users: &[User], open: &[usize], budget_left: f64) -> Vec<Policy> {
    let mut out = vec![Policy::Stop];
    for (k, &w) in open.iter().enumerate() {
        let c = users[w].true_cost;
        if c > budget_left {
            continue;
        }
        let rest: Vec<usize> = open.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, &u)| u).collect();
        let outcomes = users[w].privacy_profile.len();
        // every combination of one sub-policy per outcome
        let mut combos: Vec<Vec<Policy>> = vec![Vec::new()];
        for _ in 0..outcomes {
            let mut next = Vec::new();
            for prefix in combos {
                for sub in 0..all_policies(users, &rest, budget_left - c).len() {
                    let mut subs = all_policies(users, &rest, budget_left - c);
                    let chosen = subs.swap_remove(sub);
                    let mut p: Vec<Policy> = prefix.iter().map(clone_policy).collect();
                    p.push(chosen);
                    next.push(p);
                }
            }
            combos = next;
        }
        out.extend(combos.into_iter().map(|subs| Policy::Pick(w, subs)));
    }
    out
}

fn clone_policy(p: &Policy) -> Policy {
    match p {
        Policy::Stop => Policy::Stop,
        Policy::Pick(w, subs) => Policy::Pick(*w, subs.iter().map(clone_policy).collect()),
    }
}

fn play(policy: &Policy, users: &[User], r: &Realization, covered: &mut LocationSet) {
    if let Policy::Pick(w, subs) = policy {
        let k = r.profile_index(*w);
        covered.insert_profile(users[*w].privacy_profile.profile(k));
        play(&subs[k], users, r, covered);
    }
}

fn policy_tree_optimum(users: &[User], region: &Region, budget: f64) -> f64 {
    let open: Vec<usize> = (0..users.len()).collect();
    all_policies(users, &open, budget)
        .iter()
        .map(|p| {
            average_over_realizations(users, |r| {
                let mut covered = LocationSet::default();
                play(p, users, r, &mut covered);
                Ok(region.value(&covered))
            })
            .unwrap()
        })
        .fold(0.0, f64::max)
}

#[test]
fn seq_opt_small_cases() {
    let region = Region::abstract_unit(2);
    assert_eq!(seq_opt_value(&[det(0, 0.9, &[0])], &region, 0.5).unwrap(), 0.0);
    let one = [mixed(0, 0.3, &[(&[0], 0.5), (&[1], 0.5)], 0)];
    assert_eq!(seq_opt_value(&one, &region, 1.0).unwrap(), 1.0);
}

#[test]
fn seq_opt_adapts_to_revealed_profiles() {
    let region = Region::abstract_weighted(vec![1.0, 1.0, 1.0, 0.0]).unwrap();
    let users = [det(0, 0.5, &[0]), mixed(1, 0.5, &[(&[1, 2], 0.5), (&[3], 0.5)], 0)];
    assert_eq!(seq_opt_value(&users, &region, 0.5).unwrap(), 1.0);
    assert_eq!(seq_opt_value(&users, &region, 1.0).unwrap(), 2.0);
    assert_eq!(policy_tree_optimum(&users, &region, 1.0), 2.0);
}

#[test]
fn seq_opt_enforces_caps() {
    let region = Region::abstract_unit(2);
    let many: Vec<User> = (0..9).map(|k| det(k, 0.1, &[0])).collect();
    assert!(matches!(seq_opt_value(&many, &region, 1.0), Err(Error::CapExceeded { .. })));
    let wide: Vec<User> =
        (0..7).map(|k| mixed(k, 0.1, &[(&[0], 0.25), (&[1], 0.25), (&[0, 1], 0.25), (&[], 0.25)], 0)).collect();
    assert!(matches!(seq_opt_value(&wide, &region, 1.0), Err(Error::CapExceeded { .. })));
}

#[test]
fn bid_sweep_fixtures() {
    let region = Region::abstract_unit(2);
    let single = [det(0, 0.1, &[0, 1])];
    let r = Realization::truth(&single);
    let res = (1.0 - 0.01) / f64::from(1u32 << 20);
    let t = bid_sweep_threshold(0, &r, &single, &region, 1.0, 2.0, 0.01, 20).unwrap();
    assert!((t - 0.5).abs() <= res);
    let pair = [det(0, 0.2, &[0]), det(1, 0.3, &[1])];
    let r = Realization::truth(&pair);
    let t = bid_sweep_threshold(0, &r, &pair, &region, 1.0, 2.0, 0.01, 20).unwrap();
    assert!((t - 0.3).abs() <= res);
    let coarse = bid_sweep_threshold(0, &r, &pair, &region, 1.0, 2.0, 0.01, 1).unwrap();
    assert!((coarse - 0.2575).abs() < 1e-12);
    assert!(bid_sweep_threshold(1, &r, &pair, &region, 1.0, 2.0, 0.01, 20).is_err());
}

#[test]
fn approximation_single_user_is_degenerate() {
    let region = Region::abstract_unit(2);
    let users = [det(0, 0.1, &[0, 1])];
    let report = verify_approximation(&users, &region, 1.0, 100, 0).unwrap();
    assert_eq!(report.ratio, 1.0);
    assert!(report.satisfied && report.degenerate);
}

#[test]
fn intermediate_bounds_on_two_users() {
    let region = Region::abstract_unit(2);
    let users = [det(0, 0.2, &[0]), det(1, 0.3, &[1])];
    let report = verify_intermediate_bounds(&users, &region, 1.0, 2.0).unwrap();
    assert_eq!(report.greedy, 2.0);
    assert_eq!(report.truthful_greedy, 1.0);
    assert_eq!(report.f_max, 1.0);
    assert_eq!(report.greedy_bound, 5.0);
    assert!(report.optimal_bound_holds && report.greedy_bound_holds);
    let single = [det(0, 0.1, &[0, 1])];
    let report = verify_intermediate_bounds(&single, &region, 1.0, 2.0).unwrap();
    assert_eq!((report.optimal, report.greedy, report.truthful_greedy), (2.0, 2.0, 2.0));
}

#[test]
fn nested_observations_are_nested() {
    let (_, users) = random_instance(4, 6, 3, 8);
    let mut rng = rng_from(1, &[]);
    for _ in 0..100 {
        let (a, b, w) = random_nested_observations(&users, &mut rng).unwrap();
        assert!(a.len() <= b.len() && !b.contains(w));
        assert!(a.entries().iter().all(|o| b.get(o.user) == Some(o)));
    }
    assert!(random_nested_observations(&[], &mut rng).is_none());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn dp_matches_policy_tree_enumeration(seed in any::<u64>(), n in 1usize..=3, budget in 0.1f64..2.0) {
        let (region, users) = random_instance(seed, n, 3, 5);
        let dp = seq_opt_value(&users, &region, budget).unwrap();
        let tree = policy_tree_optimum(&users, &region, budget);
        prop_assert!((dp - tree).abs() <= 1e-12, "dp {dp} tree {tree}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn seq_opt_dominates_implementable_mechanisms(seed in any::<u64>(), budget in 0.1f64..2.0) {
        let (region, users) = random_instance(seed, 5, 3, 7);
        let opt = seq_opt_value(&users, &region, budget).unwrap();
        for kind in [
            MechanismKind::SeqTGreedy,
            MechanismKind::SeqGreedy,
            MechanismKind::ConstGreedy,
            MechanismKind::ConstTGreedy,
            MechanismKind::Random,
        ] {
            let v = average_over_realizations(&users, |r| {
                Ok(run_mechanism(kind, &users, &region, budget, 2.0, r, seed)?.realized_utility(&region))
            })
            .unwrap();
            prop_assert!(v <= opt + 1e-9, "{kind}: {v} > {opt}");
        }
    }

    #[test]
    fn approximation_guarantees_hold(seed in any::<u64>(), budget in 0.1f64..2.0) {
        let (region, users) = random_instance(seed, 5, 3, 7);
        let report = verify_approximation(&users, &region, budget, 1000, seed).unwrap();
        prop_assert!(report.satisfied, "{report:?}");
        let bounds = verify_intermediate_bounds(&users, &region, budget, 2.0).unwrap();
        prop_assert!(bounds.optimal_bound_holds && bounds.greedy_bound_holds, "{bounds:?}");
    }

    #[test]
    fn gains_are_adaptive_submodular(seed in any::<u64>()) {
        let (region, users) = random_instance(seed, 6, 3, 8);
        let mut rng = rng_from(seed, &[2]);
        let (a, b, w) = random_nested_observations(&users, &mut rng).unwrap();
        prop_assert!(adaptive_submodularity_holds(&users[w], &a, &b, &region).unwrap());
    }

    #[test]
    fn truthful_bid_maximizes_expected_profit(seed in any::<u64>(), budget in 0.2f64..2.0) {
        let (region, users) = random_instance(seed, 4, 3, 6);
        let grid: Vec<f64> = (0..50).map(|k| 0.01 + (budget - 0.01) * k as f64 / 49.0).collect();
        for s in 0..users.len() {
            let curve = profit_curve(s, &users, &region, budget, 2.0, &grid).unwrap();
            prop_assert!(curve.truthful_profit >= -1e-12);
            prop_assert!(curve.best_deviation_gain() <= 1e-9, "{curve:?}");
        }
    }

    #[test]
    fn realization_outcomes_match_direct_thresholds(seed in any::<u64>(), budget in 0.2f64..2.0) {
        let (region, users) = random_instance(seed, 4, 3, 6);
        let outcomes = realization_outcomes(&users, &region, budget, 2.0).unwrap();
        let total: f64 = outcomes.iter().map(|o| o.probability).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        for o in &outcomes {
            for (&s, &t) in o.selected.iter().zip(&o.thresholds) {
                let direct = crate::payments::threshold_payment_for_realization(s, &o.realization, &users, &region, budget, 2.0).unwrap();
                prop_assert_eq!(t, direct.theta_d);
                prop_assert!(t >= users[s].bid - crate::payments::IR_TOLERANCE);
            }
        }
    }
}
