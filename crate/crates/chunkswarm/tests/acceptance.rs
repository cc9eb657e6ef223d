//! Release-gate acceptance suite.
//!
//! One test per registered criterion, in gate order; each prints its
//! summary line (visible with `--nocapture`) and fails the build if the
//! criterion does not hold at its pinned tolerance.

use chunkswarm::validation;

fn check(id: usize) {
    let result = validation::run_criterion(id).expect("criterion registered");
    println!("{}", result.summary_line());
    assert!(result.passed, "{}", result.summary_line());
}

#[test]
fn criterion_01_drift_identity() {
    check(1);
}

#[test]
fn criterion_02_single_chunk_logistic() {
    check(2);
}

#[test]
fn criterion_03_sir_conservation() {
    check(3);
}

#[test]
fn criterion_04_single_chunk_open_settling() {
    check(4);
}

#[test]
fn criterion_05_spiral_criterion() {
    check(5);
}

#[test]
fn criterion_06_two_chunk_closed_form() {
    check(6);
}

#[test]
fn criterion_07_settling_time_transcendental() {
    check(7);
}

#[test]
fn criterion_08_case2_stability() {
    check(8);
}

#[test]
fn criterion_09_case3_equilibrium() {
    check(9);
}

#[test]
fn criterion_10_settling_bounds() {
    check(10);
}

#[test]
fn criterion_11_fluid_limit_scaling() {
    check(11);
}

#[test]
fn criterion_12_incentives_criterion() {
    check(12);
}

#[test]
fn criterion_13_little_identity() {
    check(13);
}

#[test]
fn criterion_14_diffusion_moments() {
    check(14);
}

#[test]
fn criterion_15_symmetric_reduction() {
    check(15);
}
