use super::*;
use crate::domain::{Region, SensingProfile};
use crate::oracle::random_instance;
use alloc::vec;
use proptest::prelude::*;

fn det(id: usize, bid: f64, locs: &[u32]) -> User {
    User::deterministic(id, bid, SensingProfile::from_indices(locs))
}

fn mixed(id: usize, bid: f64, support: &[(&[u32], f64)], truth: usize) -> User {
    let pp = PrivacyProfile::new(support.iter().map(|(s, p)| (SensingProfile::from_indices(s), *p)).collect()).unwrap();
    User::new(id, bid, pp, truth).unwrap()
}

/// Two users of unit gain on distinct locations, bids 0.2 and 0.3.
fn two_users() -> Vec<User> {
    vec![det(0, 0.2, &[0]), det(1, 0.3, &[1])]
}

#[test]
fn all_bids_over_budget_selects_nobody() {
    let region = Region::abstract_unit(3);
    let users = vec![det(0, 0.9, &[0]), det(1, 0.8, &[1])];
    let r = Realization::truth(&users);
    let res = seq_t_greedy(&users, &region, 0.5, 2.0, &r).unwrap();
    assert!(res.selected.is_empty());
    assert_eq!(res.stop_reason, StopReason::ExhaustedUsers);
}

#[test]
fn single_user_passes_share_test() {
    let region = Region::abstract_unit(2);
    let users = vec![det(0, 0.1, &[0, 1])];
    let r = Realization::truth(&users);
    let res = seq_t_greedy(&users, &region, 1.0, 2.0, &r).unwrap();
    assert_eq!(res.selected, vec![0]);
    assert_eq!(res.marginals, vec![2.0]);
    assert_eq!(res.trace[0].test_values.share_bound, Some(0.5));
    assert_eq!(seq_greedy(&users, &region, 1.0, &r).unwrap().selected, vec![0]);
}

#[test]
fn two_users_share_stop() {
    let region = Region::abstract_unit(2);
    let users = two_users();
    let r = Realization::truth(&users);
    let res = seq_t_greedy(&users, &region, 1.0, 2.0, &r).unwrap();
    assert_eq!(res.selected, vec![0]);
    assert_eq!(res.stop_reason, StopReason::ProportionalShareStop);
    assert_eq!(res.trace.last().unwrap().test_values.share_bound, Some(0.25));
}

#[test]
fn seq_greedy_fills_budget() {
    let region = Region::abstract_unit(2);
    let users = two_users();
    let r = Realization::truth(&users);
    let res = seq_greedy(&users, &region, 1.0, &r).unwrap();
    assert_eq!(res.selected, vec![0, 1]);
    assert_eq!(res.alpha, 1.0);
    let res = seq_greedy(&users, &region, 0.25, &r).unwrap();
    assert_eq!(res.selected, vec![0]);
    assert_eq!(res.stop_reason, StopReason::BudgetStop);
}

#[test]
fn rejects_bad_parameters() {
    let region = Region::abstract_unit(2);
    let users = two_users();
    let r = Realization::truth(&users);
    assert!(seq_t_greedy(&users, &region, 0.0, 2.0, &r).is_err());
    assert!(seq_greedy(&users, &region, -1.0, &r).is_err());
    assert!(seq_t_greedy(&users, &region, 1.0, 0.5, &r).is_err());
    assert!(random_baseline(&users, 0.0, &r, 1).is_err());
    assert!(const_variants(&users, &region, 1.0, 2.0, MechanismKind::SeqGreedy, &r).is_err());
    assert!(deterministic_variants(&users, &region, 1.0, 2.0, MechanismKind::ConstGreedy, &r).is_err());
}

#[test]
fn const_commits_without_reranking_on_observations() {
    let region = Region::abstract_unit(2);
    // A: 50% {0} / 50% {1}; B: {0}; equal bids
    for truth_a in 0..2 {
        let users = vec![mixed(0, 0.1, &[(&[0], 0.5), (&[1], 0.5)], truth_a), det(1, 0.1, &[0])];
        let r = Realization::truth(&users);
        let c = const_variants(&users, &region, 5.0, 2.0, MechanismKind::ConstGreedy, &r).unwrap();
        assert_eq!(c.selected, vec![0, 1]);
        assert_eq!(c.marginals, vec![1.0, 0.5]);
        let s = seq_greedy(&users, &region, 5.0, &r).unwrap();
        if truth_a == 0 {
            // A revealed {0}: B is redundant and dropped
            assert_eq!(s.selected, vec![0]);
        } else {
            assert_eq!(s.selected, vec![0, 1]);
            assert_eq!(s.marginals, vec![1.0, 1.0]);
        }
    }
}

#[test]
fn empty_population_allocates_nothing() {
    let region = Region::abstract_unit(1);
    let r = Realization::truth(&[]);
    for kind in MechanismKind::ALL {
        let res = run_mechanism(kind, &[], &region, 1.0, 2.0, &r, 0).unwrap();
        assert!(res.selected.is_empty(), "{kind}");
    }
}

#[test]
fn privacy_off_beats_obfuscated_on_hidden_redundancy() {
    let region = Region::abstract_unit(4);
    let users = vec![det(0, 0.5, &[0, 1]), mixed(1, 0.3, &[(&[0, 1], 0.5), (&[2, 3], 0.5)], 0), det(2, 0.4, &[2])];
    let r = Realization::truth(&users);
    let g = deterministic_variants(&users, &region, 0.9, 2.0, MechanismKind::Greedy, &r).unwrap();
    let c = const_variants(&users, &region, 0.9, 2.0, MechanismKind::ConstGreedy, &r).unwrap();
    assert_eq!(g.selected, vec![1, 2]);
    assert_eq!(c.selected, vec![1, 0]);
    assert_eq!(g.realized_utility(&region), 3.0);
    assert_eq!(c.realized_utility(&region), 2.0);
}

#[test]
fn tgreedy_matches_seq_on_deterministic_profiles() {
    let region = Region::abstract_unit(2);
    let users = two_users();
    let r = Realization::truth(&users);
    let t = deterministic_variants(&users, &region, 1.0, 2.0, MechanismKind::TGreedy, &r).unwrap();
    let s = seq_t_greedy(&users, &region, 1.0, 2.0, &r).unwrap();
    assert_eq!(t.selected, s.selected);
    assert_eq!(t.trace, s.trace);
}

#[test]
fn random_baseline_edges_and_golden_order() {
    let users = vec![det(0, 0.3, &[0]), det(1, 0.2, &[1]), det(2, 0.4, &[2])];
    let r = Realization::truth(&users);
    assert!(random_baseline(&users, 0.1, &r, 7).unwrap().selected.is_empty());
    let all = random_baseline(&users, 0.9, &r, 7).unwrap();
    assert_eq!(all.selected.len(), 3);
    // frozen from the first run of this seed
    let order: Vec<usize> = all.trace.iter().map(|t| t.user_id).collect();
    assert_eq!(order, GOLDEN_RANDOM_ORDER);
    let a = random_baseline(&users, 0.5, &r, 7).unwrap();
    assert_eq!(a, random_baseline(&users, 0.5, &r, 7).unwrap());
    assert!(a.spent_bids <= 0.5);
}

const GOLDEN_RANDOM_ORDER: [usize; 3] = [0, 2, 1];

fn ratio_sequence(res: &AllocationResult, users: &[User]) -> Vec<f64> {
    res.selected.iter().zip(&res.marginals).map(|(&s, d)| d / users[s].bid).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn allocations_respect_budget(seed in any::<u64>(), budget in 0.05f64..3.0, alpha in 1.0f64..3.0) {
        let (region, users) = random_instance(seed, 6, 3, 8);
        let r = Realization::truth(&users);
        for kind in MechanismKind::ALL {
            let res = run_mechanism(kind, &users, &region, budget, alpha, &r, seed).unwrap();
            prop_assert!(res.spent_bids <= budget + 1e-12);
            prop_assert_eq!(res.marginals.len(), if kind == MechanismKind::Random { 0 } else { res.selected.len() });
        }
    }

    #[test]
    fn lowering_a_winning_bid_keeps_it_selected(seed in any::<u64>(), budget in 0.1f64..3.0, pick in any::<prop::sample::Index>(), scale in 0.0f64..1.0) {
        let (region, users) = random_instance(seed, 6, 3, 8);
        let r = Realization::truth(&users);
        let res = seq_t_greedy(&users, &region, budget, 2.0, &r).unwrap();
        prop_assume!(!res.selected.is_empty());
        let i = res.selected[pick.index(res.selected.len())];
        let mut b = bids(&users);
        b[i] = 0.01 + (b[i] - 0.01) * scale;
        let lower = seq_t_greedy_with_bids(&users, &region, &b, budget, 2.0, &r).unwrap();
        prop_assert!(lower.is_selected(i));
    }

    #[test]
    fn singleton_supports_make_variants_coincide(seed in any::<u64>(), budget in 0.1f64..3.0) {
        let (region, users) = random_instance(seed, 6, 1, 8);
        let r = Realization::truth(&users);
        let s = seq_t_greedy(&users, &region, budget, 2.0, &r).unwrap();
        let c = const_variants(&users, &region, budget, 2.0, MechanismKind::ConstTGreedy, &r).unwrap();
        let t = deterministic_variants(&users, &region, budget, 2.0, MechanismKind::TGreedy, &r).unwrap();
        prop_assert_eq!(&s.trace, &c.trace);
        prop_assert_eq!(&s.trace, &t.trace);
        prop_assert_eq!(&s.selected, &c.selected);
    }

    #[test]
    fn selection_ratios_do_not_increase(seed in any::<u64>(), budget in 0.1f64..3.0) {
        let (region, users) = random_instance(seed, 6, 3, 8);
        let r = Realization::truth(&users);
        for res in [
            seq_t_greedy(&users, &region, budget, 2.0, &r).unwrap(),
            seq_greedy(&users, &region, budget, &r).unwrap(),
        ] {
            let ratios = ratio_sequence(&res, &users);
            for w in ratios.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn truthful_selection_is_prefix_of_untruthful(seed in any::<u64>(), budget in 0.1f64..3.0, alpha in 1.0f64..2.5) {
        let (region, users) = random_instance(seed, 6, 3, 8);
        let r = Realization::sample(&users, &mut rng_from(seed, &[1]));
        let t = seq_t_greedy(&users, &region, budget, alpha, &r).unwrap();
        let g = seq_greedy(&users, &region, budget, &r).unwrap();
        prop_assert!(t.selected.len() <= g.selected.len());
        prop_assert_eq!(&t.selected[..], &g.selected[..t.selected.len()]);
    }
}
