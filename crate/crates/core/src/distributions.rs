//! Single-item duality: the dual solution of a regular distribution, and a
//! non-regular distribution for which dropping the convexity constraint on
//! the utility raises the value of the relaxed program.

use std::io::Write;

use serde::Serialize;

use crate::error::{Result, SjaError};
use crate::numeric::{gauss_legendre, KahanSum};

/// Step of the central differences used when no analytic derivative is
/// registered.
pub const CENTRAL_DIFFERENCE_STEP: f64 = 1e-6;

/// Grid size of the regularity test run by [`myerson_dual`].
pub const REGULARITY_GRID: usize = 10_000;

/// Number of rows in the curve table of [`nonregular_demo`].
pub const DEMO_TABLE_ROWS: usize = 201;

/// Stationary points of the revenue curve of the non-regular demo
/// distribution and the point `x_1 < x_2` with `R(x_1) = R(x_3)`, frozen
/// from [`nonregular_demo`].
pub const DEMO_X0: f64 = 0.211_324_865_405_187_08;
pub const DEMO_X1: f64 = 0.399_209_790_779_459_2;
pub const DEMO_X2: f64 = 0.555_555_555_555_556_2;
pub const DEMO_X3: f64 = 0.788_675_134_594_811_8;

/// Cumulative distribution function of the non-regular demo distribution,
/// `F(x) = 1 - (1 - x)(1 + x(2.7x - 2.9))`, as ascending coefficients.
pub const DEMO_CDF: [f64; 4] = [0.0, 3.9, -5.6, 2.7];

#[derive(Clone, Debug)]
enum Law {
    /// The CDF as a polynomial with ascending coefficients.
    Polynomial(Vec<f64>),
    Functions {
        cdf: fn(f64) -> f64,
        pdf: fn(f64) -> f64,
        pdf_derivative: Option<fn(f64) -> f64>,
    },
}

/// A distribution with a density on a bounded interval `[lo, hi]`.
#[derive(Clone, Debug)]
pub struct Density1D {
    name: String,
    lo: f64,
    hi: f64,
    law: Law,
}

fn poly_eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

fn poly_derivative(c: &[f64]) -> Vec<f64> {
    c.iter()
        .enumerate()
        .skip(1)
        .map(|(i, &a)| i as f64 * a)
        .collect()
}

impl Density1D {
    /// A distribution whose CDF on `[lo, hi]` is the polynomial with
    /// ascending coefficients `cdf`.
    pub fn polynomial(name: &str, lo: f64, hi: f64, cdf: Vec<f64>) -> Result<Self> {
        Self::validated(Self {
            name: name.into(),
            lo,
            hi,
            law: Law::Polynomial(cdf),
        })
    }

    /// A distribution given by its CDF and density. Without a registered
    /// density derivative, central differences are used.
    pub fn from_functions(
        name: &str,
        lo: f64,
        hi: f64,
        cdf: fn(f64) -> f64,
        pdf: fn(f64) -> f64,
        pdf_derivative: Option<fn(f64) -> f64>,
    ) -> Result<Self> {
        Self::validated(Self {
            name: name.into(),
            lo,
            hi,
            law: Law::Functions {
                cdf,
                pdf,
                pdf_derivative,
            },
        })
    }

    fn validated(d: Self) -> Result<Self> {
        if !(d.lo.is_finite() && d.hi.is_finite() && d.lo < d.hi) {
            return Err(SjaError::InvalidParameter(format!(
                "support [{}, {}] must be a bounded nonempty interval",
                d.lo, d.hi
            )));
        }
        let (f_lo, f_hi) = (d.cdf(d.lo), d.cdf(d.hi));
        if f_lo.abs() > 1e-12 || (f_hi - 1.0).abs() > 1e-12 {
            return Err(SjaError::InvalidParameter(format!(
                "{}: F(lo) = {f_lo} and F(hi) = {f_hi} must be 0 and 1",
                d.name
            )));
        }
        let steps = 1000;
        let mut prev = f_lo;
        for i in 1..=steps {
            let x = d.lo + (d.hi - d.lo) * i as f64 / steps as f64;
            let v = d.cdf(x);
            if v < prev - 1e-12 {
                return Err(SjaError::InvalidParameter(format!(
                    "{}: F decreases near x = {x}",
                    d.name
                )));
            }
            prev = v;
        }
        Ok(d)
    }

    /// Uniform on `[0, 1]`.
    pub fn uniform() -> Self {
        Self::uniform_on(0.0, 1.0).expect("valid interval")
    }

    /// Uniform on `[lo, hi]`.
    pub fn uniform_on(lo: f64, hi: f64) -> Result<Self> {
        let w = hi - lo;
        Self::polynomial(
            &format!("uniform[{lo},{hi}]"),
            lo,
            hi,
            vec![-lo / w, 1.0 / w],
        )
    }

    /// The non-regular distribution `F(x) = 1 - (1-x)(1 + x(2.7x - 2.9))`
    /// on `[0, 1]`.
    pub fn nonregular_demo() -> Self {
        Self::polynomial("nonregular-demo", 0.0, 1.0, DEMO_CDF.to_vec()).expect("valid CDF")
    }

    /// Every built-in distribution.
    pub fn registry() -> Vec<Density1D> {
        vec![
            Self::uniform(),
            Self::uniform_on(0.0, 2.0).expect("valid interval"),
            Self::uniform_on(1.0, 2.0).expect("valid interval"),
            Self::nonregular_demo(),
        ]
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match &self.law {
            Law::Polynomial(c) => poly_eval(c, x),
            Law::Functions { cdf, .. } => cdf(x),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match &self.law {
            Law::Polynomial(c) => poly_eval(&poly_derivative(c), x),
            Law::Functions { pdf, .. } => pdf(x),
        }
    }

    /// `f'(x)`.
    pub fn pdf_derivative(&self, x: f64) -> f64 {
        match &self.law {
            Law::Polynomial(c) => poly_eval(&poly_derivative(&poly_derivative(c)), x),
            Law::Functions {
                pdf,
                pdf_derivative,
                ..
            } => match pdf_derivative {
                Some(d) => d(x),
                None => {
                    let h = CENTRAL_DIFFERENCE_STEP;
                    (pdf(x + h) - pdf(x - h)) / (2.0 * h)
                }
            },
        }
    }

    /// `F(x) + x f(x) - 1`, which equals `-R'(x)`.
    pub fn virtual_margin(&self, x: f64) -> f64 {
        self.cdf(x) + x * self.pdf(x) - 1.0
    }

    /// `f(x) + (x f(x))'`, the derivative of [`Self::virtual_margin`].
    pub fn virtual_margin_derivative(&self, x: f64) -> f64 {
        2.0 * self.pdf(x) + x * self.pdf_derivative(x)
    }

    fn check_domain(&self, x: f64) -> Result<()> {
        if x < self.lo || x > self.hi || x.is_nan() {
            return Err(SjaError::DomainViolation(format!(
                "x = {x} outside [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

/// Integrates `g` over `[a, b]` with `pieces` panels of 8-point
/// Gauss-Legendre.
pub fn integrate<G: Fn(f64) -> f64>(g: G, a: f64, b: f64, pieces: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (nodes, weights) = gauss_legendre(8);
    let h = (b - a) / pieces as f64;
    let mut sum = KahanSum::default();
    for p in 0..pieces {
        let mid = a + (p as f64 + 0.5) * h;
        for (x, w) in nodes.iter().zip(weights) {
            sum.add(0.5 * h * w * g(mid + 0.5 * h * x));
        }
    }
    sum.value()
}

/// The revenue `R(x) = x (1 - F(x))` of posting price `x`.
pub fn revenue_curve(dist: &Density1D, x: f64) -> Result<f64> {
    dist.check_domain(x)?;
    Ok(x * (1.0 - dist.cdf(x)))
}

/// Whether `F(x) + x f(x) - 1` is non-decreasing on a grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegularityReport {
    pub monotone: bool,
    /// Maximal grid intervals on which the function decreases.
    pub violations: Vec<(f64, f64)>,
}

/// Tests monotonicity of `F(x) + x f(x) - 1` on `grid` equal steps.
pub fn regularity_check(dist: &Density1D, grid: usize) -> RegularityReport {
    let grid = grid.max(1);
    let (lo, hi) = dist.support();
    let xs: Vec<f64> = (0..=grid)
        .map(|i| lo + (hi - lo) * i as f64 / grid as f64)
        .collect();
    let vals: Vec<f64> = xs.iter().map(|&x| dist.virtual_margin(x)).collect();
    let mut violations: Vec<(f64, f64)> = Vec::new();
    for i in 0..grid {
        if vals[i + 1] < vals[i] - 1e-12 {
            match violations.last_mut() {
                Some(last) if last.1 == xs[i] => last.1 = xs[i + 1],
                _ => violations.push((xs[i], xs[i + 1])),
            }
        }
    }
    RegularityReport {
        monotone: violations.is_empty(),
        violations,
    }
}

/// Largest products of the complementarity conditions for one item.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SingleItemResiduals {
    /// `u(x) (f + (x f)' - z'(x))`.
    pub interior: f64,
    /// `u(lo) (z(lo) - lo f(lo))`.
    pub lower: f64,
    /// `u(hi) (z(hi) - hi f(hi))`.
    pub upper: f64,
    /// `z(x) (1 - u'(x))`.
    pub unallocated: f64,
}

impl SingleItemResiduals {
    pub fn max(&self) -> f64 {
        self.interior
            .abs()
            .max(self.lower.abs())
            .max(self.upper.abs())
            .max(self.unallocated.abs())
    }
}

/// The posted-price optimum and its dual `z(x) = max(0, F(x) + x f(x) - 1)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MyersonDual {
    pub reserve: f64,
    /// `integral of z`.
    pub objective: f64,
    /// `R(reserve)`.
    pub revenue: f64,
    /// Complementarity with `u(x) = max(0, x - reserve)` on a grid.
    pub residuals: SingleItemResiduals,
}

fn bisect<G: Fn(f64) -> f64>(g: G, mut a: f64, mut b: f64) -> f64 {
    let ga = g(a);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if (g(mid) > 0.0) == (ga > 0.0) {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Solves the dual of a regular distribution.
///
/// Fails with [`SjaError::NonRegular`] when the regularity check fails.
pub fn myerson_dual(dist: &Density1D) -> Result<MyersonDual> {
    if !regularity_check(dist, REGULARITY_GRID).monotone {
        return Err(SjaError::NonRegular);
    }
    let (lo, hi) = dist.support();
    let phi = |x: f64| dist.virtual_margin(x);
    let reserve = if phi(lo) >= 0.0 {
        lo
    } else {
        bisect(phi, lo, hi)
    };
    let z = |x: f64| phi(x).max(0.0);
    let objective = integrate(z, reserve, hi, 64);
    let revenue = revenue_curve(dist, reserve)?;
    let u = |x: f64| (x - reserve).max(0.0);
    let mut res = SingleItemResiduals::default();
    for i in 0..=REGULARITY_GRID {
        let x = lo + (hi - lo) * i as f64 / REGULARITY_GRID as f64;
        let (dz, du) = if x > reserve {
            (dist.virtual_margin_derivative(x), 1.0)
        } else {
            (0.0, 0.0)
        };
        let r1 = u(x) * (dist.virtual_margin_derivative(x) - dz);
        let r4 = z(x) * (1.0 - du);
        res.interior = res.interior.max(r1.abs());
        res.unallocated = res.unallocated.max(r4.abs());
    }
    res.lower = u(lo) * (z(lo) - lo * dist.pdf(lo));
    res.upper = u(hi) * (z(hi) - hi * dist.pdf(hi));
    Ok(MyersonDual {
        reserve,
        objective,
        revenue,
        residuals: res,
    })
}

/// One sampled row of the curves of the non-regular demo.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurveRow {
    pub x: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "neg_R_prime")]
    pub neg_r_prime: f64,
    pub z: f64,
    pub z0: f64,
    pub z1: f64,
}

/// Stationary points, values and dual curves of the non-regular demo.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NonregularReport {
    pub x0: f64,
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    /// `R(x_0)`, the value with the convexity constraint.
    pub optimal_value: f64,
    /// `R(x_0) - R(x_2) + R(x_3)`, the value without it.
    pub relaxed_value: f64,
    /// `integral over [x_1, x_3] of -R'`.
    pub ironed_integral: f64,
    /// Integrals of the ironed dual `z`, of `z_1 = max(0, -R')` and of the
    /// dual `z_0` that also lacks the monotonicity multiplier.
    pub z_objective: f64,
    pub z1_objective: f64,
    pub z0_objective: f64,
    /// `(z_1, s = max(0, R'))` meets the derivative and boundary
    /// constraints on the table grid.
    pub z1_feasible: bool,
    pub regularity: RegularityReport,
    #[serde(skip)]
    pub table: Vec<CurveRow>,
}

impl NonregularReport {
    /// `relaxed_value - optimal_value`.
    pub fn margin(&self) -> f64 {
        self.relaxed_value - self.optimal_value
    }

    /// Writes the curve table as CSV with columns `x, R, -R', z, z0, z1`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let export = |e: csv::Error| SjaError::Export(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "R", "-R'", "z", "z0", "z1"])
            .map_err(export)?;
        for row in &self.table {
            w.write_record(
                [row.x, row.r, row.neg_r_prime, row.z, row.z0, row.z1].map(|v| format!("{v:.12e}")),
            )
            .map_err(export)?;
        }
        w.flush().map_err(|e| SjaError::Export(e.to_string()))
    }
}

/// Runs the non-regular example on `F(x) = 1 - (1-x)(1 + x(2.7x - 2.9))`.
pub fn nonregular_demo() -> Result<NonregularReport> {
    let dist = Density1D::nonregular_demo();
    let r = |x: f64| x * (1.0 - dist.cdf(x));
    let dr = |x: f64| -dist.virtual_margin(x);
    let steps = 1000;
    let mut roots = Vec::new();
    for i in 0..steps {
        let (a, b) = (i as f64 / steps as f64, (i + 1) as f64 / steps as f64);
        if (dr(a) > 0.0) != (dr(b) > 0.0) {
            roots.push(bisect(dr, a, b));
        }
    }
    let [x0, x2, x3] = roots[..] else {
        return Err(SjaError::RootBracketing(format!(
            "expected three stationary points of R, found {}",
            roots.len()
        )));
    };
    let target = r(x3);
    if !(r(x2) < target && target < r(x0)) {
        return Err(SjaError::RootBracketing(format!(
            "R(x3) = {target} not between R(x2) = {} and R(x0) = {}",
            r(x2),
            r(x0)
        )));
    }
    let x1 = bisect(|x| r(x) - target, x0, x2);
    let neg_dr = |x: f64| dist.virtual_margin(x);
    let z = |x: f64| {
        if (x0..=x1).contains(&x) || x >= x3 {
            neg_dr(x)
        } else {
            0.0
        }
    };
    let z1 = |x: f64| neg_dr(x).max(0.0);
    // Largest value of R' on [x, 1]: at the endpoints or at the local
    // maximum of R' between x2 and x3.
    let peak = bisect(|x| dist.virtual_margin_derivative(x), x2, x3);
    let z0 = |x: f64| {
        let mut best = dr(x).max(dr(1.0));
        if x <= peak {
            best = best.max(dr(peak));
        }
        best.max(0.0) - dr(x)
    };
    let pieces = |a: f64, b: f64, g: &dyn Fn(f64) -> f64| integrate(g, a, b, 16);
    let z_objective = pieces(x0, x1, &z) + pieces(x3, 1.0, &z);
    let z1_objective = pieces(x0, x2, &z1) + pieces(x3, 1.0, &z1);
    let z0_objective = pieces(0.0, peak, &z0) + pieces(peak, 1.0, &z0);
    let ironed_integral = pieces(x1, x3, &neg_dr);
    let table: Vec<CurveRow> = (0..DEMO_TABLE_ROWS)
        .map(|i| {
            let x = i as f64 / (DEMO_TABLE_ROWS - 1) as f64;
            CurveRow {
                x,
                r: r(x),
                neg_r_prime: neg_dr(x),
                z: z(x),
                z0: z0(x),
                z1: z1(x),
            }
        })
        .collect();
    // With s = max(0, R'), z1 - s = -R', so the derivative constraint is
    // tight; check it and the boundary values on the table grid.
    let h = 1e-6;
    let s = |x: f64| dr(x).max(0.0);
    let interior_ok = table.iter().all(|row| {
        let x = row.x.clamp(h, 1.0 - h);
        let lhs = (z1(x + h) - s(x + h) - z1(x - h) + s(x - h)) / (2.0 * h);
        (lhs - dist.virtual_margin_derivative(x)).abs() <= 1e-6
    });
    let z1_feasible = interior_ok && z1(0.0) - s(0.0) <= 0.0 && z1(1.0) - s(1.0) >= dist.pdf(1.0) - 1e-12;
    Ok(NonregularReport {
        x0,
        x1,
        x2,
        x3,
        optimal_value: r(x0),
        relaxed_value: r(x0) - r(x2) + r(x3),
        ironed_integral,
        z_objective,
        z1_objective,
        z0_objective,
        z1_feasible,
        regularity: regularity_check(&dist, REGULARITY_GRID),
        table,
    })
}
