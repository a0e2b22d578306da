use proptest::prelude::*;
use sja_core::pricing::{solve_prices, DEFAULT_TOL};
use sja_core::volumes::{
    duplication_normalized, mc_sale_probability, slice_volume, slice_volume_by_slicing, sells,
    PriceSeq,
};
use sja_core::{appendix_polynomial, SjaError};

fn v(p: &[f64]) -> f64 {
    slice_volume(&PriceSeq::new(p.to_vec()).unwrap()).unwrap()
}

fn prices(max_order: usize) -> impl Strategy<Value = Vec<f64>> {
    (1..=max_order).prop_flat_map(|r| proptest::collection::vec(0.0..=r as f64, r))
}

/// Independent reference for `r = 2`: the unsold region is
/// `{x1 <= p1, x2 <= p1, x1 + x2 <= p2}`.
fn two_item_reference(p1: f64, p2: f64) -> f64 {
    let a = p1.min(1.0);
    let unsold = if p2 >= 2.0 * a {
        a * a
    } else if p2 <= a {
        p2 * p2 / 2.0
    } else {
        let c = p2 - a;
        a * a - (a - c) * (a - c) / 2.0
    };
    1.0 - unsold
}

#[test]
fn two_item_closed_form_on_the_canonical_band() {
    for i in 0..=40 {
        for j in 0..=40 {
            let p1 = 0.025 * i as f64;
            let p2 = p1 + p1 * j as f64 / 40.0;
            let closed = p1 * p1 + p2 * p2 / 2.0 - 2.0 * p1 * p2 + 1.0;
            assert!((v(&[p1, p2]) - closed).abs() < 1e-12, "({p1}, {p2})");
        }
    }
}

#[test]
fn order_above_cap_is_rejected() {
    let p = PriceSeq::new(vec![0.5; 9]).unwrap();
    assert!(matches!(
        slice_volume(&p),
        Err(SjaError::RecursionDepthUnsupported { order: 9, cap: 8 })
    ));
}

#[test]
fn mc_agrees_on_random_prices_for_every_order() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for r in 1..=6usize {
        for case in 0..100u64 {
            let p: Vec<f64> = (0..r).map(|_| rng.random_range(0.0..=r as f64)).collect();
            let seq = PriceSeq::new(p.clone()).unwrap();
            let exact = slice_volume(&seq).unwrap();
            let mc = mc_sale_probability(&seq, 1_000_000, 1000 * r as u64 + case).unwrap();
            let tol = 4.0 * mc.stderr.max(1e-3 / 1_000_000f64.sqrt());
            assert!((exact - mc.estimate).abs() <= tol, "r={r} p={p:?} exact={exact} mc={mc:?}");
        }
    }
}

#[test]
fn appendix_polynomials_vanish_at_solved_parameters() {
    for m in 2..=6 {
        let mu = solve_prices(m, DEFAULT_TOL).unwrap().solved_mu();
        for r in 2..=m {
            let poly = appendix_polynomial(r, m, &mu[..r - 1]).unwrap();
            assert!(poly.eval(mu[r - 1]).abs() < 1e-8, "m={m} r={r}");
            let root = poly.designated_root().unwrap();
            assert!((root - mu[r - 1]).abs() < 1e-8, "m={m} r={r}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn volume_lies_in_unit_interval(p in prices(6)) {
        let x = v(&p);
        prop_assert!((0.0..=1.0).contains(&x));
    }

    #[test]
    fn raising_a_price_never_sells_more(p in prices(6), idx in 0usize..6, bump in 0.0..1.0f64) {
        let i = idx % p.len();
        let mut q = p.clone();
        q[i] = (q[i] + bump).min(p.len() as f64);
        prop_assert!(v(&q) <= v(&p) + 1e-12);
    }

    #[test]
    fn duplication_normalization_preserves_volume(p in prices(6)) {
        let q = duplication_normalized(&p);
        prop_assert!((v(&p) - v(&q)).abs() < 1e-12);
    }

    #[test]
    fn slicing_recursion_matches_default_path(p in prices(5)) {
        let seq = PriceSeq::new(p).unwrap();
        let a = slice_volume(&seq).unwrap();
        let b = slice_volume_by_slicing(&seq).unwrap();
        prop_assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }

    #[test]
    fn two_item_volume_matches_reference(p1 in 0.0..2.0f64, p2 in 0.0..2.0f64) {
        prop_assert!((v(&[p1, p2]) - two_item_reference(p1.min(p2), p2)).abs() < 1e-12);
    }

    #[test]
    fn sells_is_monotone_in_valuations(
        x in proptest::collection::vec(0.0..1.0f64, 3),
        p in proptest::collection::vec(0.0..3.0f64, 3),
        d in 0.0..0.5f64,
    ) {
        let y: Vec<f64> = x.iter().map(|a| (a + d).min(1.0)).collect();
        prop_assert!(!sells(&p, &x) || sells(&p, &y));
    }
}
