use proptest::prelude::*;
use sja_core::distributions::{
    integrate, myerson_dual, nonregular_demo, regularity_check, revenue_curve, Density1D,
    DEMO_TABLE_ROWS, REGULARITY_GRID,
};
use sja_core::SjaError;

fn square_law() -> Density1D {
    Density1D::from_functions("square", 0.0, 1.0, |x| x * x, |x| 2.0 * x, None).unwrap()
}

#[test]
fn densities_integrate_to_one() {
    let mut all = Density1D::registry();
    all.push(square_law());
    for d in &all {
        let (lo, hi) = d.support();
        let mass = integrate(|x| d.pdf(x), lo, hi, 64);
        assert!((mass - 1.0).abs() < 1e-8, "{}", d.name());
    }
}

#[test]
fn regular_duals_close_the_gap() {
    let mut regular: Vec<Density1D> = Density1D::registry()
        .into_iter()
        .filter(|d| regularity_check(d, REGULARITY_GRID).monotone)
        .collect();
    regular.push(square_law());
    assert_eq!(regular.len(), 4);
    for d in &regular {
        let dual = myerson_dual(d).unwrap();
        assert!((dual.objective - dual.revenue).abs() < 1e-10, "{}", d.name());
        assert!(dual.residuals.max() < 1e-6, "{}: {:?}", d.name(), dual.residuals);
    }
}

#[test]
fn reserve_prices_match_revenue_maximizers() {
    let uniform = myerson_dual(&Density1D::uniform()).unwrap();
    assert_eq!(uniform.reserve, 0.5);
    assert_eq!(uniform.revenue, 0.25);
    assert_eq!(myerson_dual(&Density1D::uniform_on(0.0, 2.0).unwrap()).unwrap().reserve, 1.0);
    assert_eq!(myerson_dual(&Density1D::uniform_on(1.0, 2.0).unwrap()).unwrap().reserve, 1.0);
    let sq = myerson_dual(&square_law()).unwrap();
    assert!((sq.reserve - 1.0 / 3f64.sqrt()).abs() < 1e-9);
    assert!((sq.revenue - 2.0 / (3.0 * 3f64.sqrt())).abs() < 1e-12);
}

#[test]
fn nonregular_inputs_are_rejected() {
    assert_eq!(myerson_dual(&Density1D::nonregular_demo()).unwrap_err(), SjaError::NonRegular);
}

#[test]
fn invalid_laws_are_rejected() {
    assert!(Density1D::uniform_on(1.0, 1.0).is_err());
    assert!(Density1D::polynomial("bad", 0.0, 1.0, vec![0.0, 2.0]).is_err());
    assert!(Density1D::polynomial("bad", 0.0, 1.0, vec![0.0, 2.0, -1.0, 0.0]).is_ok());
    assert!(Density1D::polynomial("dip", 0.0, 1.0, vec![0.0, -1.0, 2.0]).is_err());
    assert!(revenue_curve(&Density1D::uniform(), 1.5).is_err());
}

#[test]
fn nonregular_demo_separates_the_relaxation() {
    let rep = nonregular_demo().unwrap();
    assert!(!rep.regularity.monotone);
    assert!(rep.margin() > 1e-6);
    assert!(rep.ironed_integral.abs() < 1e-8);
    assert!(rep.z1_feasible);
    assert!(rep.z1_objective > rep.optimal_value + 1e-6);
    assert!((rep.z_objective - rep.optimal_value).abs() < 1e-10);
    assert!((rep.z1_objective - rep.relaxed_value).abs() < 1e-10);
    assert_eq!(rep.table.len(), DEMO_TABLE_ROWS);
}

#[test]
fn nonregular_points_have_closed_forms() {
    let rep = nonregular_demo().unwrap();
    let s3 = 3f64.sqrt();
    assert!((rep.x0 - (3.0 - s3) / 6.0).abs() < 1e-12);
    assert!((rep.x2 - 5.0 / 9.0).abs() < 1e-12);
    assert!((rep.x3 - (3.0 + s3) / 6.0).abs() < 1e-12);
    let d = Density1D::nonregular_demo();
    let r = |x: f64| x * (1.0 - d.cdf(x));
    assert!((r(rep.x1) - r(rep.x3)).abs() < 1e-12);
    assert!(rep.x0 < rep.x1 && rep.x1 < rep.x2 && rep.x2 < rep.x3);
}

#[test]
fn nonregular_values_are_stable() {
    let a = nonregular_demo().unwrap();
    let b = nonregular_demo().unwrap();
    for (x, y) in [(a.x0, b.x0), (a.x1, b.x1), (a.x2, b.x2), (a.x3, b.x3)] {
        assert!((x - y).abs() <= 1e-10);
    }
    let mut csv_a = Vec::new();
    let mut csv_b = Vec::new();
    a.write_csv(&mut csv_a).unwrap();
    b.write_csv(&mut csv_b).unwrap();
    assert_eq!(csv_a, csv_b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn uniform_reserve_is_max_of_lo_and_half_hi(lo in 0.0..5.0f64, w in 0.1..5.0f64) {
        let hi = lo + w;
        let d = Density1D::uniform_on(lo, hi).unwrap();
        let dual = myerson_dual(&d).unwrap();
        let expected = lo.max(hi / 2.0);
        prop_assert!((dual.reserve - expected).abs() < 1e-9);
        prop_assert!((dual.objective - dual.revenue).abs() < 1e-9);
    }

    #[test]
    fn central_differences_track_analytic_derivatives(x in 0.05..0.95f64) {
        let d = Density1D::nonregular_demo();
        let numeric = Density1D::from_functions(
            "demo-numeric",
            0.0,
            1.0,
            |x| 3.9 * x - 5.6 * x * x + 2.7 * x * x * x,
            |x| 3.9 - 11.2 * x + 8.1 * x * x,
            None,
        )
        .unwrap();
        prop_assert!((d.pdf_derivative(x) - numeric.pdf_derivative(x)).abs() < 1e-6);
        prop_assert!((d.virtual_margin(x) - numeric.virtual_margin(x)).abs() < 1e-12);
    }
}
