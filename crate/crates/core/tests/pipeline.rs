//! Cross-module checks on public APIs.

use std::f64::consts::PI;

use ipvt_core::corona::{cell_assign, sample_corona, separation, CoronaPoint, CoronaSample};
use ipvt_core::crosses::{coverage_run, sample_deposition_from_corona, CoverageGrid, CoverageMode};
use ipvt_core::field::{RescaledCoronaPoint, TravelerState};
use ipvt_core::finite::{delay_convergence_test, voronoi_assign, voronoi_assign_brute, NucleiSet, DEFAULT_MARGIN};
use ipvt_core::hyperbolic::DiskPoint;
use ipvt_core::product::ProductPoint;
use ipvt_core::rng::rng_stream;
use rand::Rng;

fn random_point(rng: &mut impl Rng, max_dist: f64) -> ProductPoint {
    ProductPoint::Disk(
        DiskPoint::from_polar(rng.random_range(0.0..max_dist), rng.random_range(-PI..PI)).unwrap(),
        DiskPoint::from_polar(rng.random_range(0.0..max_dist), rng.random_range(-PI..PI)).unwrap(),
    )
}

#[test]
fn corona_csv_round_trip_preserves_cells() {
    let mut rng = rng_stream(5, 0);
    let s = sample_corona(300.0, &mut rng).unwrap();
    let mut buf = Vec::new();
    s.write_csv(&mut buf).unwrap();
    let back = CoronaSample::read_csv(buf.as_slice(), s.r_cutoff()).unwrap();
    assert_eq!(back.len(), s.len());
    for _ in 0..200 {
        let z = random_point(&mut rng, 2.0);
        let (a, b) = (cell_assign(&z, &s).unwrap(), cell_assign(&z, &back).unwrap());
        assert_eq!(a.index, b.index);
        assert!((a.separation - b.separation).abs() <= 1e-12 * a.separation);
    }
}

#[test]
fn pruned_voronoi_matches_brute_force() {
    let mut rng = rng_stream(6, 0);
    let nuclei = NucleiSet::sample(1e-3, 0.0, DEFAULT_MARGIN, &mut rng).unwrap();
    assert!(!nuclei.is_empty());
    for _ in 0..300 {
        let z = random_point(&mut rng, 3.0);
        assert_eq!(voronoi_assign(&z, &nuclei).unwrap(), voronoi_assign_brute(&z, &nuclei).unwrap());
    }
}

#[test]
fn delay_report_is_deterministic() {
    let edges = [-3.0, -2.0, -1.0, 0.0, 1.0];
    let a = delay_convergence_test(1e-3, 200, &edges, 9).unwrap();
    let b = delay_convergence_test(1e-3, 200, &edges, 9).unwrap();
    assert_eq!(a, b);
    assert!(delay_convergence_test(1e-3, 99, &edges, 9).is_err());
}

#[test]
fn corona_deposition_covers_monotonically() {
    let (r1, events) = sample_deposition_from_corona(3000, &mut rng_stream(7, 0)).unwrap();
    let mut gc = CoverageGrid::new(10.0, 128).unwrap();
    let mut gd = CoverageGrid::new(10.0, 128).unwrap();
    let cc = coverage_run(&mut gc, r1, &events, CoverageMode::Crosses).unwrap();
    let cd = coverage_run(&mut gd, r1, &events, CoverageMode::InscribedDisks).unwrap();
    assert!(cc.windows(2).all(|w| w[0] <= w[1]));
    assert!(cc.iter().zip(&cd).all(|(c, d)| d <= c));
    assert!(*cc.last().unwrap() > 0.9);
}

#[test]
fn rescaled_atoms_converge_along_traveler() {
    // fixed rescaled coordinates settle to their limit-field separation
    let atom = RescaledCoronaPoint { theta_hat: 0.7, phi_hat: -1.3, r_hat: 0.4 };
    let sep = |e: f64| separation(&TravelerState::from_epsilon(e).unwrap().position, &atom.to_corona(e).unwrap()).unwrap();
    let (a, b, c) = (sep(1e-3), sep(1e-4), sep(1e-5));
    assert!((b - c).abs() < (a - b).abs() + 1e-12);
    assert!((b - c).abs() / c < 1e-3);
    let p = CoronaPoint::disk(0.7e-4, -1.3e-4, 0.4e8).unwrap();
    let back = RescaledCoronaPoint::from_corona(&p, 1e-4);
    assert!((back.r_hat - 0.4).abs() < 1e-12 && (back.theta_hat - 0.7).abs() < 1e-9);
}
