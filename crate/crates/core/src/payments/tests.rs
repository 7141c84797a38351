use super::*;
use crate::domain::{PrivacyProfile, Region, SensingProfile};
use crate::mechanisms::seq_t_greedy_with_bids;
use crate::oracle::random_instance;
use proptest::prelude::*;

fn det(id: usize, bid: f64, locs: &[u32]) -> User {
    User::deterministic(id, bid, SensingProfile::from_indices(locs))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

#[test]
fn single_user_is_paid_its_share_bound() {
    let region = Region::abstract_unit(2);
    let users = vec![det(0, 0.1, &[0, 1])];
    let r = Realization::truth(&users);
    let t = threshold_payment_for_realization(0, &r, &users, &region, 1.0, 2.0).unwrap();
    assert!(t.alternate_selected.is_empty());
    assert_eq!(t.per_position.len(), 1);
    assert_eq!(t.per_position[0].b_i_j, None);
    assert_eq!(t.theta_d, 0.5);
}

#[test]
fn two_users_hand_trace() {
    let region = Region::abstract_unit(2);
    let users = vec![det(0, 0.2, &[0]), det(1, 0.3, &[1])];
    let r = Realization::truth(&users);
    let t = threshold_payment_for_realization(0, &r, &users, &region, 1.0, 2.0).unwrap();
    assert_eq!(t.alternate_selected, vec![1]);
    assert_eq!(t.per_position[0].b_i_j, Some(0.3));
    assert_eq!(t.per_position[0].rho_i_j, 0.5);
    assert_eq!(t.per_position[0].theta_d_i_j, 0.3);
    assert_eq!(t.per_position[1].rho_i_j, 0.25);
    assert_eq!(t.theta_d, 0.3);
    let err = threshold_payment_for_realization(1, &r, &users, &region, 1.0, 2.0).unwrap_err();
    assert!(matches!(err, crate::Error::Precondition(_)));
}

#[test]
fn bidding_the_threshold_still_wins() {
    let region = Region::abstract_unit(2);
    let users = vec![det(0, 0.2, &[0]), det(1, 0.3, &[1])];
    let r = Realization::truth(&users);
    let theta = threshold_payment_for_realization(0, &r, &users, &region, 1.0, 2.0).unwrap().theta_d;
    let at = seq_t_greedy_with_bids(&users, &region, &[theta, 0.3], 1.0, 2.0, &r).unwrap();
    assert!(at.is_selected(0));
    let above = seq_t_greedy_with_bids(&users, &region, &[theta + 1e-9, 0.3], 1.0, 2.0, &r).unwrap();
    assert!(!above.is_selected(0));
}

#[test]
fn fully_observed_payment_is_exact() {
    let region = Region::abstract_unit(2);
    let users = vec![det(0, 0.1, &[0, 1])];
    let r = Realization::truth(&users);
    let result = seq_t_greedy(&users, &region, 1.0, 2.0, &r).unwrap();
    let p = expected_payment(0, &result, &users, &region, Accuracy::for_budget(1.0), 0).unwrap();
    assert_eq!(p.estimator, Estimator::Exact);
    assert_eq!(p.n_samples, 1);
    assert_eq!(p.theta, 0.5);
    assert_eq!(p.std_error, 0.0);
}

#[test]
fn one_unobserved_user_averages_two_realizations() {
    let region = Region::abstract_unit(4);
    let b = PrivacyProfile::new(vec![
        (SensingProfile::from_indices(&[0]), 0.5),
        (SensingProfile::from_indices(&[2, 3]), 0.5),
    ])
    .unwrap();
    let users = vec![det(0, 0.1, &[0, 1]), User::new(1, 0.9, b, 0).unwrap()];
    let r = Realization::truth(&users);
    let result = seq_t_greedy(&users, &region, 1.0, 2.0, &r).unwrap();
    assert_eq!(result.selected, vec![0]);
    let p = expected_payment(0, &result, &users, &region, Accuracy::for_budget(1.0), 0).unwrap();
    let both: f64 = (0..2)
        .map(|k| {
            let rk = Realization::new(&users, vec![0, k]).unwrap();
            threshold_payment_for_realization(0, &rk, &users, &region, 1.0, 2.0).unwrap().theta_d
        })
        .sum();
    assert_eq!(p.n_samples, 2);
    assert!(close(p.theta, both / 2.0));
}

#[test]
fn hoeffding_sample_size() {
    let acc = Accuracy { epsilon: 0.01, delta: 0.05 };
    assert_eq!(hoeffding_samples(1.0, acc).unwrap(), 18445);
    assert_eq!(hoeffding_samples(3.0, Accuracy::for_budget(3.0)).unwrap(), 18445);
    assert!(hoeffding_samples(1.0, Accuracy { epsilon: 0.0, delta: 0.05 }).is_err());
    assert!(hoeffding_samples(1.0, Accuracy { epsilon: 0.01, delta: 1.0 }).is_err());
}

#[test]
fn large_residual_uncertainty_is_sampled() {
    let region = Region::abstract_unit(40);
    let users: Vec<User> = (0..16)
        .map(|k| {
            let a = 2 * k as u32;
            let pp = PrivacyProfile::new(vec![
                (SensingProfile::from_indices(&[a]), 0.5),
                (SensingProfile::from_indices(&[a, a + 1]), 0.5),
            ])
            .unwrap();
            User::new(k, 0.05 + 0.01 * k as f64, pp, k % 2).unwrap()
        })
        .collect();
    let r = Realization::truth(&users);
    let result = seq_t_greedy(&users, &region, 0.3, 2.0, &r).unwrap();
    assert!(!result.selected.is_empty());
    let acc = Accuracy { epsilon: 0.03, delta: 0.1 };
    let schedule = payment_schedule(&result, &users, &region, &r, acc, 5).unwrap();
    let n = hoeffding_samples(0.3, acc).unwrap();
    for p in &schedule.participants {
        assert_eq!(p.estimator, Estimator::Sampled);
        assert_eq!(p.n_samples, n);
        assert!(p.theta >= users[p.id].bid - IR_TOLERANCE && p.theta <= 0.3);
    }
    assert_eq!(schedule, payment_schedule(&result, &users, &region, &r, acc, 5).unwrap());
}

#[test]
fn upper_bound_check_on_fixtures() {
    let region = Region::abstract_unit(2);
    let users = vec![det(0, 0.2, &[0]), det(1, 0.3, &[1])];
    let r = Realization::truth(&users);
    let result = seq_t_greedy(&users, &region, 1.0, 2.0, &r).unwrap();
    let schedule = payment_schedule(&result, &users, &region, &r, Accuracy::for_budget(1.0), 0).unwrap();
    assert!(payment_upper_bound_check(&result, &schedule));
    let nobody =
        seq_t_greedy(&[det(0, 2.0, &[0])], &region, 1.0, 2.0, &Realization::truth(&[det(0, 2.0, &[0])])).unwrap();
    let empty = PaymentSchedule::new(Vec::new(), 2.0, 1.0);
    assert!(payment_upper_bound_check(&nobody, &empty));
}

#[test]
fn untruthful_mechanisms_pay_costs() {
    let region = Region::abstract_unit(2);
    let users = vec![det(0, 0.2, &[0]), det(1, 0.3, &[1])];
    let r = Realization::truth(&users);
    let result = crate::mechanisms::seq_greedy(&users, &region, 1.0, &r).unwrap();
    let schedule = payment_schedule(&result, &users, &region, &r, Accuracy::for_budget(1.0), 0).unwrap();
    assert!(close(schedule.total, 0.5));
}

#[test]
fn const_and_privacy_off_single_user() {
    let region = Region::abstract_unit(2);
    let users = vec![det(0, 0.1, &[0, 1])];
    assert_eq!(const_threshold_payment(0, &users, &region, 1.0, 2.0).unwrap().theta_d, 0.5);
    let r = Realization::truth(&users);
    for kind in [MechanismKind::TGreedy, MechanismKind::ConstTGreedy] {
        let result = crate::mechanisms::run_mechanism(kind, &users, &region, 1.0, 2.0, &r, 0).unwrap();
        let schedule = payment_schedule(&result, &users, &region, &r, Accuracy::for_budget(1.0), 0).unwrap();
        assert_eq!(schedule.total, 0.5);
    }
}

#[test]
fn optimize_alpha_edges() {
    let region = Region::abstract_unit(2);
    let users = vec![det(0, 0.1, &[0, 1])];
    let probes = vec![Realization::truth(&users)];
    let acc = Accuracy::for_budget(1.0);
    assert_eq!(optimize_alpha(&users, &region, 1.0, &probes, 0.1, acc, 0).unwrap(), 1.0);
    assert!(optimize_alpha(&users, &region, 1.0, &[], 0.1, acc, 0).is_err());
    assert!(optimize_alpha(&users, &region, 1.0, &probes, 0.0, acc, 0).is_err());
    let (region, users) = random_instance(3, 5, 3, 6);
    let probes = vec![Realization::truth(&users)];
    let a = optimize_alpha(&users, &region, 1.0, &probes, 1.0, acc, 0).unwrap();
    assert!(a == 1.0 || a == 2.0);
}

/// Deterministic instance whose threshold payments overrun the budget at
/// `α = 1`.
fn overrun_fixture() -> (Region, Vec<User>) {
    let region =
        Region::abstract_weighted(vec![1.9241996533571628, 0.8108759741163112, 1.6022134695425554, 1.0695615427729437])
            .unwrap();
    let users = vec![
        det(0, 0.23276213828208925, &[1, 3]),
        det(1, 0.09949665071782456, &[1, 2]),
        det(2, 0.6523708640716213, &[0, 1]),
        det(3, 0.5523088010420965, &[0, 3]),
    ];
    (region, users)
}

#[test]
fn overrun_fixture_needs_alpha_above_one() {
    let (region, users) = overrun_fixture();
    let r = Realization::truth(&users);
    let acc = Accuracy::for_budget(1.0);
    let at_one = seq_t_greedy(&users, &region, 1.0, 1.0, &r).unwrap();
    let total = payment_schedule(&at_one, &users, &region, &r, acc, 0).unwrap().total;
    assert!(total > 1.0 + 1e-6, "total {total}");
    let alpha = optimize_alpha(&users, &region, 1.0, std::slice::from_ref(&r), 0.1, acc, 0).unwrap();
    assert!(alpha > 1.0);
    let at_alpha = seq_t_greedy(&users, &region, 1.0, alpha, &r).unwrap();
    assert!(payment_schedule(&at_alpha, &users, &region, &r, acc, 0).unwrap().total <= 1.0 + 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn thresholds_are_individually_rational_and_bounded(seed in any::<u64>(), budget in 0.2f64..3.0, alpha in 1.0f64..2.5) {
        let (region, users) = random_instance(seed, 6, 3, 8);
        let r = Realization::sample(&users, &mut crate::rng::rng_from(seed, &[9]));
        let result = seq_t_greedy(&users, &region, budget, alpha, &r).unwrap();
        for &s in &result.selected {
            let t = threshold_payment_for_realization(s, &r, &users, &region, budget, alpha).unwrap();
            prop_assert!(t.theta_d >= users[s].bid - IR_TOLERANCE, "theta {} bid {}", t.theta_d, users[s].bid);
            prop_assert!(t.theta_d <= budget);
        }
    }

    #[test]
    fn threshold_is_the_selection_boundary(seed in any::<u64>(), budget in 0.2f64..3.0) {
        let (region, users) = random_instance(seed, 5, 3, 7);
        let r = Realization::truth(&users);
        let result = seq_t_greedy(&users, &region, budget, 2.0, &r).unwrap();
        let mut b = bids(&users);
        for &s in &result.selected {
            let theta = threshold_payment_for_realization(s, &r, &users, &region, budget, 2.0).unwrap().theta_d;
            b[s] = theta * (1.0 - 1e-9);
            prop_assert!(seq_t_greedy_with_bids(&users, &region, &b, budget, 2.0, &r).unwrap().is_selected(s));
            b[s] = theta * (1.0 + 1e-9) + 1e-12;
            prop_assert!(!seq_t_greedy_with_bids(&users, &region, &b, budget, 2.0, &r).unwrap().is_selected(s));
            b[s] = users[s].bid;
        }
    }

    #[test]
    fn expected_payment_is_weighted_mean(seed in any::<u64>(), budget in 0.2f64..2.0) {
        let (region, users) = random_instance(seed, 5, 3, 7);
        let r = Realization::truth(&users);
        let result = seq_t_greedy(&users, &region, budget, 2.0, &r).unwrap();
        let schedule = payment_schedule(&result, &users, &region, &r, Accuracy::for_budget(budget), 0).unwrap();
        for p in &schedule.participants {
            let mut direct = 0.0;
            for rr in consistent_realizations(&users, &result.observations) {
                let w = conditional_realization_weight(&rr, &result.observations, &users);
                direct += w * threshold_payment_for_realization(p.id, &rr, &users, &region, budget, 2.0).unwrap().theta_d;
            }
            prop_assert!((p.theta - direct).abs() <= 1e-9);
        }
        prop_assert!(schedule.total <= budget + 1e-9);
        prop_assert!(payment_upper_bound_check(&result, &schedule));
    }
}
