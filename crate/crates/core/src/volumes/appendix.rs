//! Defining polynomials of `mu_r` for orders `2..=6`.
//!
//! Each polynomial is expressed in `mu_r` with coefficients depending on the
//! earlier parameters `mu_3` and `mu_4` (the values `mu_1 = 1` and
//! `mu_2 = 2 + sqrt 2` are already substituted). Coefficients are assembled
//! and evaluated in double-double arithmetic because the sextic has terms of
//! magnitude `1e9` around its designated root.

use crate::error::{Result, SjaError};
use crate::numeric::{horner_dd, real_roots, Dd};
use serde::{Deserialize, Serialize};

/// Which real root of the polynomial is the price parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RootRule {
    Largest,
    SecondLargest,
}

/// One coefficient term `(a + b sqrt 2) / den * mu_3^i * mu_4^j`.
type Term = (f64, f64, f64, u32, u32);

const fn t(a: f64, b: f64, i: u32, j: u32) -> Term {
    (a, b, 1.0, i, j)
}

const P2: &[&[Term]] = &[&[t(1.0, 0.0, 0, 0)], &[t(-4.0, 0.0, 0, 0)], &[t(2.0, 0.0, 0, 0)]];

const P3: &[&[Term]] = &[
    &[t(1.0, 0.0, 0, 0)],
    &[t(-9.0, 0.0, 0, 0)],
    &[t(9.0, 0.0, 0, 0)],
    &[t(15.0, 12.0, 0, 0)],
];

const P4: &[&[Term]] = &[
    &[t(1.0, 0.0, 0, 0)],
    &[t(-16.0, 0.0, 0, 0)],
    &[t(24.0, 0.0, 0, 0)],
    &[t(128.0, 96.0, 0, 0)],
    &[t(72.0, 0.0, 2, 0), t(-288.0, -144.0, 1, 0), t(88.0, 48.0, 0, 0)],
];

const P5_EQUAL: &[&[Term]] = &[
    &[t(4.0, 0.0, 0, 0)],
    &[t(-225.0, 0.0, 0, 0)],
    &[t(4350.0, 0.0, 0, 0)],
    &[t(-34950.0, 800.0, 0, 0)],
    &[t(900.0, 0.0, 2, 0), t(-3600.0, -1800.0, 1, 0), t(121175.0, -14600.0, 0, 0)],
    &[t(-14220.0, 720.0, 2, 0), t(49680.0, 22680.0, 1, 0), t(-161215.0, 41080.0, 0, 0)],
];

const P5_LARGE: &[&[Term]] = &[
    &[t(1.0, 0.0, 0, 0)],
    &[t(-25.0, 0.0, 0, 0)],
    &[t(50.0, 0.0, 0, 0)],
    &[t(-100.0, 0.0, 3, 0), t(900.0, 0.0, 2, 0), t(-900.0, 0.0, 1, 0), t(-950.0, -800.0, 0, 0)],
    &[
        t(-150.0, 0.0, 4, 0),
        t(400.0, 0.0, 3, 1),
        t(1200.0, 0.0, 3, 0),
        t(-3600.0, 0.0, 2, 1),
        t(-900.0, 0.0, 2, 0),
        t(3600.0, 0.0, 1, 1),
        t(-25.0, 0.0, 0, 4),
        t(400.0, 0.0, 0, 3),
        t(-600.0, 0.0, 0, 2),
        t(2800.0, 2400.0, 0, 1),
        t(-2225.0, -1600.0, 0, 0),
    ],
    &[
        t(60.0, 0.0, 5, 0),
        t(-150.0, 0.0, 4, 0),
        t(-200.0, 0.0, 3, 2),
        t(-400.0, 0.0, 3, 1),
        t(-1900.0, 0.0, 3, 0),
        t(1800.0, 0.0, 2, 2),
        t(3600.0, 0.0, 2, 1),
        t(-1800.0, 0.0, 1, 2),
        t(-3600.0, 0.0, 1, 1),
        t(1800.0, 0.0, 1, 0),
        t(20.0, 0.0, 0, 5),
        t(-275.0, 0.0, 0, 4),
        t(-800.0, -1200.0, 0, 2),
        t(-2800.0, -2400.0, 0, 1),
        t(12185.0, 8960.0, 0, 0),
    ],
];

const P6_EQUAL: &[&[Term]] = &[
    &[t(1.0, 0.0, 0, 0)],
    &[(-396.0, 0.0, 5.0, 0, 0)],
    &[t(2214.0, 0.0, 0, 0)],
    &[t(-160.0, 0.0, 3, 0), t(1440.0, 0.0, 2, 0), t(-1440.0, 0.0, 1, 0), t(-29808.0, -1200.0, 0, 0)],
    &[
        t(-180.0, 0.0, 4, 0),
        t(720.0, 0.0, 3, 1),
        t(6480.0, 0.0, 3, 0),
        t(-6480.0, 0.0, 2, 1),
        t(-46440.0, 0.0, 2, 0),
        t(6480.0, 0.0, 1, 1),
        t(45360.0, 0.0, 1, 0),
        t(-45.0, 0.0, 0, 4),
        t(720.0, 0.0, 0, 3),
        t(-1080.0, 0.0, 0, 2),
        t(5040.0, 4320.0, 0, 1),
        t(239040.0, 38880.0, 0, 0),
    ],
    &[
        t(144.0, 0.0, 5, 0),
        t(6480.0, 0.0, 4, 0),
        t(-720.0, 0.0, 3, 2),
        t(-20160.0, 0.0, 3, 1),
        t(-95040.0, 0.0, 3, 0),
        t(6480.0, 0.0, 2, 2),
        t(181440.0, 0.0, 2, 1),
        t(362880.0, 0.0, 2, 0),
        t(-6480.0, 0.0, 1, 2),
        t(-181440.0, 0.0, 1, 1),
        t(-317520.0, 0.0, 1, 0),
        t(72.0, 0.0, 0, 5),
        t(180.0, 0.0, 0, 4),
        t(-18720.0, 0.0, 0, 3),
        t(25200.0, -4320.0, 0, 2),
        t(-141120.0, -120960.0, 0, 1),
        (-4476096.0, -992160.0, 5.0, 0, 0),
    ],
    &[
        t(-40.0, 0.0, 6, 0),
        t(-2736.0, 0.0, 5, 0),
        t(-56880.0, 0.0, 4, 0),
        t(240.0, 0.0, 3, 3),
        t(10080.0, 0.0, 3, 2),
        t(141120.0, 0.0, 3, 1),
        t(537600.0, 0.0, 3, 0),
        t(-2160.0, 0.0, 2, 3),
        t(-90720.0, 0.0, 2, 2),
        t(-1270080.0, 0.0, 2, 1),
        t(264600.0, 0.0, 2, 0),
        t(2160.0, 0.0, 1, 3),
        t(90720.0, 0.0, 1, 2),
        t(1270080.0, 0.0, 1, 1),
        t(-740880.0, 0.0, 1, 0),
        t(-30.0, 0.0, 0, 6),
        t(-576.0, 0.0, 0, 5),
        t(5760.0, 0.0, 0, 4),
        t(122640.0, 1440.0, 0, 3),
        t(-141120.0, 60480.0, 0, 2),
        t(987840.0, 846720.0, 0, 1),
        (-12141912.0, -12686400.0, 5.0, 0, 0),
    ],
];

/// A defining polynomial in `mu_r` together with its root-selection rule.
#[derive(Clone, Debug, PartialEq)]
pub struct AppendixPolynomial {
    r: usize,
    m: usize,
    coeffs: Vec<Dd>,
    rule: RootRule,
}

impl AppendixPolynomial {
    pub fn order(&self) -> usize {
        self.r
    }

    pub fn items(&self) -> usize {
        self.m
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn rule(&self) -> RootRule {
        self.rule
    }

    /// Coefficients in descending degree order, rounded to `f64`.
    pub fn coefficients(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c.to_f64()).collect()
    }

    /// Value at `mu`, evaluated in double-double arithmetic.
    pub fn eval(&self, mu: f64) -> f64 {
        horner_dd(&self.coeffs, Dd::from_f64(mu)).to_f64()
    }

    /// All real roots, largest first.
    pub fn real_roots(&self) -> Vec<f64> {
        real_roots(&self.coeffs)
    }

    /// The root selected by [`Self::rule`].
    pub fn designated_root(&self) -> Option<f64> {
        let roots = self.real_roots();
        match self.rule {
            RootRule::Largest => roots.first().copied(),
            RootRule::SecondLargest => roots.get(1).copied(),
        }
    }
}

/// The defining polynomial of `mu_r` for `m` items.
///
/// Supported: `r` in `2..=4` for any `m >= r`; `r = 5` for `m >= 5`;
/// `r = 6` for `m = 6`. `mu_prefix` holds `mu_1, ..., mu_{r-1}`.
pub fn appendix_polynomial(r: usize, m: usize, mu_prefix: &[f64]) -> Result<AppendixPolynomial> {
    let (table, rule) = match (r, m) {
        (2, m) if m >= 2 => (P2, RootRule::Largest),
        (3, m) if m >= 3 => (P3, RootRule::Largest),
        (4, m) if m >= 4 => (P4, RootRule::Largest),
        (5, 5) => (P5_EQUAL, RootRule::SecondLargest),
        (5, m) if m >= 6 => (P5_LARGE, RootRule::Largest),
        (6, 6) => (P6_EQUAL, RootRule::SecondLargest),
        _ => return Err(SjaError::UnsupportedOrder { r, m }),
    };
    if mu_prefix.len() + 1 < r {
        return Err(SjaError::InvalidParameter(format!(
            "order {r} needs {} prefix parameters, got {}",
            r - 1,
            mu_prefix.len()
        )));
    }
    let mu3 = Dd::from_f64(mu_prefix.get(2).copied().unwrap_or(0.0));
    let mu4 = Dd::from_f64(mu_prefix.get(3).copied().unwrap_or(0.0));
    let pow = |base: Dd, e: u32| (0..e).fold(Dd::from_f64(1.0), |acc, _| acc * base);
    let coeffs = table
        .iter()
        .map(|terms| {
            terms.iter().fold(Dd::ZERO, |acc, &(a, b, den, i, j)| {
                let c = Dd::ratio(a, den) + Dd::SQRT2 * Dd::ratio(b, den);
                acc + c * pow(mu3, i) * pow(mu4, j)
            })
        })
        .collect();
    Ok(AppendixPolynomial { r, m, coeffs, rule })
}
