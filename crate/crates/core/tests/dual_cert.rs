use proptest::prelude::*;
use sja_core::dual_cert::{
    build_certificate, build_matching_graph, certificate_for_coloring, certify,
    double_saturating_matching, dual_objective, hall_spotcheck, CertGrid, CertifyOptions,
    DualCertificate, GridColoring,
};
use sja_core::mechanism::{expected_revenue, Mechanism, Method};
use sja_core::SjaError;
use std::time::Instant;

fn cert(m: usize, n: usize) -> DualCertificate {
    certify(&Mechanism::sja(m).unwrap(), &CertGrid::new(m, n).unwrap()).unwrap()
}

#[test]
fn single_item_certificates() {
    let c10 = cert(1, 10);
    assert!(c10.gap >= 0.0 && c10.gap <= 7.0 * (2.0 * 2.0 * 0.1));
    assert!(c10.residuals.values().iter().all(|&r| r <= c10.eps));
    let c1000 = cert(1, 1000);
    assert!(c1000.gap < 1e-2);
    assert!((c1000.revenue - 0.25).abs() < 1e-15);
}

#[test]
fn two_item_certificate_at_105() {
    let start = Instant::now();
    let mech = Mechanism::sja(2).unwrap();
    let grid = CertGrid::new(2, 105).unwrap();
    let graph = build_matching_graph(&mech, &grid).unwrap();
    let matching = double_saturating_matching(&graph).unwrap();
    assert_eq!(matching.cover_matching_size, graph.cover_cells().len());
    assert_eq!(matching.boundary_matching_size, graph.b_nodes());
    let c = cert(2, 105);
    assert!(c.feasible && c.pass);
    assert!(c.gap >= -1e-9 && c.gap <= 1.2);
    assert!((c.bound - 1.2).abs() < 1e-12);
    assert!(c.z_top_min >= 1.0 - 1e-12);
    assert!(start.elapsed().as_secs_f64() < 30.0);
}

#[test]
fn two_item_gaps_shrink_with_the_grid() {
    let gaps: Vec<f64> = [21, 105, 210].iter().map(|&n| cert(2, n).gap).collect();
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    assert!(cert(2, 18).pass);
}

#[test]
fn three_item_certificate_at_12() {
    let c = cert(3, 12);
    assert!(c.feasible && c.pass);
    assert!(c.gap >= -1e-9 && c.gap <= c.bound);
}

#[test]
fn certification_validates_its_inputs() {
    assert!(matches!(CertGrid::new(2, 100), Err(SjaError::GridMisaligned { n: 100, modulus: 3 })));
    let mech = Mechanism::sja(4).unwrap();
    let grid = CertGrid::new(4, 5).unwrap();
    assert!(matches!(
        build_certificate(&mech, &grid, CertifyOptions::default()),
        Err(SjaError::InvalidParameter(_))
    ));
}

#[test]
fn four_items_can_be_forced() {
    let mech = Mechanism::sja(4).unwrap();
    let grid = CertGrid::new(4, 5).unwrap();
    let opts = CertifyOptions {
        force_large: true,
        revenue_samples: 200_000,
        seed: 1,
    };
    let c = build_certificate(&mech, &grid, opts).unwrap();
    assert!(c.revenue_stderr.is_some());
    assert!(c.feasible);
    assert!(c.gap >= -4.0 * c.revenue_stderr.unwrap() - 1e-9);
}

#[test]
fn hall_condition_on_sampled_slices() {
    for (m, n) in [(2, 21), (2, 105), (3, 12)] {
        let graph = build_matching_graph(&Mechanism::sja(m).unwrap(), &CertGrid::new(m, n).unwrap())
            .unwrap();
        let rep = hall_spotcheck(&graph, 1000, 3);
        assert_eq!(rep.violations, 0, "m={m} N={n}");
    }
}

#[test]
fn infeasible_colorings_fail_verification() {
    let mech = Mechanism::sja(2).unwrap();
    let grid = CertGrid::new(2, 21).unwrap();
    let graph = build_matching_graph(&mech, &grid).unwrap();
    let blank = GridColoring::uniform(grid, 0).unwrap();
    let c = certificate_for_coloring(&graph, blank, &mech, CertifyOptions::default()).unwrap();
    assert!(!c.feasible && !c.pass);
    assert!(matches!(c.verify(), Err(SjaError::CertificateViolation { .. })));
}

#[test]
fn json_export_names_the_grid_n() {
    let json = cert(1, 10).to_json().unwrap();
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["N"], 10);
    assert!(v.get("coloring").is_none());
}

#[test]
fn csv_export_lists_every_cell() {
    let c = cert(2, 21);
    let mut buf = Vec::new();
    c.coloring.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 1 + 21 * 21);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weak_duality_on_perturbed_colorings(
        pick in 0usize..3,
        moves in 0usize..5000,
        seed in any::<u64>(),
    ) {
        let (m, n) = [(1, 10), (2, 21), (2, 18)][pick];
        let base = cert(m, n);
        let revenue = expected_revenue(&Mechanism::sja(m).unwrap(), Method::Exact).unwrap().value;
        let perturbed = base.coloring.perturbed(moves, seed);
        prop_assert!(perturbed.feasibility().feasible);
        let dual = dual_objective(&perturbed);
        prop_assert!(dual.objective >= revenue - 1e-9);
        prop_assert!(dual.z_top_min >= 1.0 - 1e-12);
    }
}
