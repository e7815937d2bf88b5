//! Library routines checked against slow, independent reference
//! implementations.

mod common;

#[test]
fn geodetic_to_scene_matches_high_precision_reference() {
    println!("{}", common::geodetic().unwrap());
}

#[test]
fn gospa_matches_exhaustive_enumeration() {
    common::gospa_enumeration().unwrap();
}

#[test]
fn dbscan_matches_quadratic_reference() {
    common::dbscan_reference_match().unwrap();
}

#[test]
fn assignment_matches_permutation_brute_force() {
    common::assignment_brute_force_match().unwrap();
}

#[test]
fn mahalanobis_agrees_with_explicit_inverse() {
    common::mahalanobis().unwrap();
}
