mod common;

use twin_offload::agents::{advantage, n_step_returns};
use twin_offload::channel::{bessel_j0, kappa_from_mobility};
use twin_offload::compute::drain;

#[test]
fn drain_matches_ceiling_on_constant_supply() {
    common::drain_closed_form().unwrap();
}

#[test]
fn drain_of_nothing_takes_no_slots() {
    assert_eq!(drain(0.0, &[1.0], 3).unwrap().duration(), 0);
}

#[test]
fn backward_sweep_equals_double_sum() {
    common::n_step_brute_force().unwrap();
}

#[test]
fn n_step_hand_examples() {
    let r = n_step_returns(&[1.0, 1.0], 2.0, 0.9);
    assert!((r[0] - 3.52).abs() < 1e-12);
    assert_eq!(n_step_returns(&[0.3, -1.0, 2.0], 7.0, 0.0), vec![0.3, -1.0, 2.0]);
    let a = advantage(&[3.52], &[1.0]).unwrap();
    assert!((a[0] - 2.52).abs() < 1e-12);
    assert_eq!(advantage(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
    assert!(advantage(&[1.0], &[]).is_err());
}

#[test]
fn reward_shift_absorbed_by_critic_keeps_advantages() {
    // gamma = 1: shifting every reward by c shifts target i by c (n - i);
    // a critic that absorbs the same shift leaves the advantages unchanged
    let (rewards, values, c) = ([0.5, -1.0, 2.0, 0.1], [1.0, 0.2, -0.4, 3.0], 0.75);
    let base = advantage(&n_step_returns(&rewards, 1.5, 1.0), &values).unwrap();
    let shifted_r: Vec<f64> = rewards.iter().map(|r| r + c).collect();
    let shifted_v: Vec<f64> = values.iter().enumerate().map(|(i, v)| v + c * (4 - i) as f64).collect();
    let shifted = advantage(&n_step_returns(&shifted_r, 1.5, 1.0), &shifted_v).unwrap();
    for (a, b) in base.iter().zip(&shifted) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let (actor, critic) = common::gradient_check().unwrap();
    assert!(actor < 1e-4, "actor relative error {actor:e}");
    assert!(critic < 1e-4, "critic relative error {critic:e}");
}

#[test]
fn kappa_limits() {
    common::kappa_checks().unwrap();
    assert!(kappa_from_mobility(10.0, 0.0, 0.2).is_err());
}

#[test]
fn bessel_agrees_with_reference_series() {
    for x in [0.0, 0.5, 1.0, 2.404826, 5.520078, 8.0, 11.9] {
        assert!((bessel_j0(x) - common::j0_reference(x)).abs() < 1e-10, "x = {x}");
    }
}

#[test]
fn fading_is_stationary_with_lag_one_correlation_kappa() {
    common::fading_stationarity().unwrap();
}

#[test]
fn reward_arithmetic_fixtures() {
    common::reward_fixtures().unwrap();
}
