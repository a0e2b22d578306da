//! Acceptance run: one PASS/FAIL line per criterion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sja_core::appendix_polynomial;
use sja_core::distributions::{nonregular_demo, regularity_check, Density1D, REGULARITY_GRID};
use sja_core::dual_cert::{
    build_matching_graph, certify, double_saturating_matching, CertGrid, DualCertificate,
};
use sja_core::geometry::{
    compact_chi, deficiency, deficiency_search, sim_deficiency, structure_checks, SearchMode,
    SimBody, VoxelBody, Voxelization,
};
use sja_core::mechanism::{expected_revenue, Mechanism, Method};
use sja_core::pricing::{normalize, solve_prices, verify_slice_conditions, DEFAULT_TOL};
use std::process::Command;
use std::time::Instant;

const MU_TOL: f64 = 5e-4;
const MU2_TOL: f64 = 1e-9;
const PRICES_SECONDS: f64 = 1.0;
const POLY_TOL: f64 = 1e-8;
const SLICE_SAMPLES: u64 = 10_000_000;
const SLICE_SECONDS: f64 = 60.0;
const DEFICIENCY_TOL: f64 = 1e-6;
const SCALING_TOL: f64 = 1e-8;
const WEAK_DUALITY: f64 = 1e-9;
const CERT_M2_SECONDS: f64 = 30.0;
const DEMO_MARGIN: f64 = 1e-6;
const IRONED_TOL: f64 = 1e-8;
const STABILITY_TOL: f64 = 1e-10;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let mu = |m: usize| -> Result<Vec<f64>, String> {
        Ok(solve_prices(m, DEFAULT_TOL).map_err(err)?.solved_mu())
    };
    let norm = |m: usize| -> Result<Vec<f64>, String> {
        Ok(normalize(&solve_prices(m, DEFAULT_TOL).map_err(err)?).mu)
    };
    let m6 = mu(6)?;
    ensure(mu(1)?[0] == 1.0, "mu_1 != 1")?;
    ensure((mu(2)?[1] - (2.0 + 2f64.sqrt())).abs() < MU2_TOL, "mu_2")?;
    let table = [
        ("mu_3", mu(3)?[2], 7.0972),
        ("mu_4", mu(4)?[3], 11.9972),
        ("mu_5 (m=5)", mu(5)?[4], 18.0865),
        ("mu_5 (m=6)", m6[4], 18.0843),
        ("mu_6 (m=6)", m6[5], 25.3585),
        ("normalized mu_4 (m=5)", norm(5)?[3], 12.0865),
        ("normalized mu_5 (m=6)", norm(6)?[4], 18.3585),
    ];
    let mut worst: f64 = 0.0;
    for (name, got, want) in table {
        ensure((got - want).abs() < MU_TOL, format!("{name} = {got}, want {want}"))?;
        worst = worst.max((got - want).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < PRICES_SECONDS, format!("runtime {secs:.3} s"))?;
    Ok(format!("max table deviation {worst:.2e}"))
}

fn criterion_2() -> Check {
    let mut worst: f64 = 0.0;
    for m in 2..=6 {
        let mu = solve_prices(m, DEFAULT_TOL).map_err(err)?.solved_mu();
        for r in 2..=m {
            let poly = appendix_polynomial(r, m, &mu[..r - 1]).map_err(err)?;
            let res = poly.eval(mu[r - 1]).abs();
            ensure(res < POLY_TOL, format!("m={m} r={r} residual {res:e}"))?;
            worst = worst.max(res);
        }
    }
    Ok(format!("max residual {worst:.2e}"))
}

fn criterion_3() -> Check {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for m in 1..=6 {
        let prof = solve_prices(m, DEFAULT_TOL).map_err(err)?;
        let rep = verify_slice_conditions(&prof, SLICE_SAMPLES, 0).map_err(err)?;
        for c in &rep.checks {
            ensure(c.pass, format!("m={m} r={}: {c:?}", c.r))?;
            worst = worst.max(c.exact_residual);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < SLICE_SECONDS, format!("runtime {secs:.1} s"))?;
    Ok(format!("max exact residual {worst:.2e}"))
}

fn criterion_4() -> Check {
    let mut worst: f64 = 0.0;
    for m in 1..=6 {
        let prof = normalize(&solve_prices(m, DEFAULT_TOL).map_err(err)?);
        let pm = prof.p[m - 1];
        for r in (1..=m).filter(|&r| r == m || prof.p[r - 1] < pm) {
            let body = SimBody::new(prof.lambda[..r].to_vec()).map_err(err)?;
            let d = sim_deficiency(&body, 1.0).abs();
            ensure(d < DEFICIENCY_TOL, format!("m={m} r={r}: delta_1 = {d:e}"))?;
            worst = worst.max(d);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..100 {
        let r = rng.random_range(1..=6);
        let alphas: Vec<f64> = (0..r).map(|_| rng.random_range(0.2..3.0)).collect();
        let k = rng.random_range(0.1..2.0);
        let body = SimBody::new(alphas).map_err(err)?;
        for q in [1.0 / 3.0, 0.5, 2.0] {
            let lhs = sim_deficiency(&body.scaled(q).map_err(err)?, q * k);
            let rhs = q.powi(r) * sim_deficiency(&body, k);
            ensure((lhs - rhs).abs() < SCALING_TOL, format!("scaling q={q}: {lhs} vs {rhs}"))?;
        }
    }
    Ok(format!("max |delta_1| {worst:.2e}"))
}

fn cert(m: usize, n: usize) -> Result<DualCertificate, String> {
    certify(&Mechanism::sja(m).map_err(err)?, &CertGrid::new(m, n).map_err(err)?).map_err(err)
}

fn criterion_5() -> Check {
    let mech = Mechanism::sja(1).map_err(err)?;
    ensure(mech.prices() == [0.5], "price")?;
    let rev = expected_revenue(&mech, Method::Exact).map_err(err)?.value;
    ensure(rev == 0.25, format!("revenue {rev}"))?;
    let c10 = cert(1, 10)?;
    ensure(
        c10.gap >= 0.0 && c10.gap <= 7.0 * (2.0 * 2.0 * 0.1),
        format!("gap(N=10) {}", c10.gap),
    )?;
    let c1000 = cert(1, 1000)?;
    ensure(c1000.gap < 1e-2, format!("gap(N=1000) {}", c1000.gap))?;
    for c in [&c10, &c1000] {
        let max = c.residuals.values().into_iter().fold(0.0, f64::max);
        ensure(max <= c.eps, format!("N={} residual {max} > {}", c.n, c.eps))?;
    }
    Ok(format!("gap(10) {:.3e}, gap(1000) {:.3e}", c10.gap, c1000.gap))
}

fn certification_suite(m: usize, n: usize) -> Result<f64, String> {
    let mech = Mechanism::sja(m).map_err(err)?;
    let grid = CertGrid::new(m, n).map_err(err)?;
    let graph = build_matching_graph(&mech, &grid).map_err(err)?;
    let matching = double_saturating_matching(&graph).map_err(err)?;
    ensure(
        matching.cover_matching_size == graph.cover_cells().len()
            && matching.boundary_matching_size == graph.b_nodes(),
        format!("m={m} N={n}: matching does not saturate both sides"),
    )?;
    let c = cert(m, n)?;
    ensure(c.feasible, format!("m={m} N={n}: infeasible coloring"))?;
    ensure(c.gap >= -WEAK_DUALITY, format!("m={m} N={n}: gap {}", c.gap))?;
    ensure(c.gap <= c.bound, format!("m={m} N={n}: gap {} > {}", c.gap, c.bound))?;
    Ok(c.gap)
}

fn criterion_6() -> Check {
    let start = Instant::now();
    let gap105 = certification_suite(2, 105)?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < CERT_M2_SECONDS, format!("runtime {secs:.1} s"))?;
    ensure(
        (CertGrid::new(2, 105).map_err(err)?.gap_bound() - 1.2).abs() < 1e-12,
        "bound != 1.2",
    )?;
    let gaps = [cert(2, 21)?.gap, gap105, cert(2, 210)?.gap];
    ensure(gaps[0] > gaps[1] && gaps[1] > gaps[2], format!("gaps {gaps:?}"))?;
    let gap3 = certification_suite(3, 12)?;
    Ok(format!(
        "gaps(21,105,210) = {:.4e}, {:.4e}, {:.4e}; m=3 gap {gap3:.4e}",
        gaps[0], gaps[1], gaps[2]
    ))
}

fn lattice(dim: usize) -> usize {
    [0, 0, 8, 5, 4][dim]
}

fn random_body(rng: &mut ChaCha8Rng, dim: usize, fill: f64) -> VoxelBody {
    let g = lattice(dim);
    let occ = (0..g.pow(dim as u32)).map(|_| rng.random_bool(fill)).collect();
    VoxelBody::from_occupancy(dim, g, 1.0 / g as f64, occ).expect("valid lattice")
}

fn criterion_7() -> Check {
    let mut failures = 0usize;
    for dim in 2..=4 {
        let mut rng = ChaCha8Rng::seed_from_u64(dim as u64);
        for _ in 0..200 {
            let fill = rng.random_range(0.1..0.9);
            let a = random_body(&mut rng, dim, fill);
            let b = a.union(&random_body(&mut rng, dim, 0.3));
            let (ca, cb) = (compact_chi(&a), compact_chi(&b));
            failures += usize::from(ca.count() != a.count());
            for mask in 1..(1usize << dim) - 1 {
                let keep: Vec<usize> = (0..dim).filter(|j| mask >> j & 1 == 1).collect();
                failures += usize::from(ca.project(&keep).count() > a.project(&keep).count());
            }
            failures += usize::from(!ca.is_subset_of(&cb));
            failures += usize::from(compact_chi(&ca) != ca);
            failures += usize::from(!ca.is_downwards_closed());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..500 {
        let fill = rng.random_range(0.05..0.95);
        let a = random_body(&mut rng, 2 + i % 3, fill);
        failures += usize::from(!structure_checks(&a, 0.5, 0, 0).loomis_whitney);
    }
    let full = VoxelBody::full(3, 5, 0.2).map_err(err)?;
    failures += structure_checks(&full, 0.3, 500, 9).supermodular_failures;
    let mut fixtures = Vec::new();
    for dim in 2..=4 {
        let g = lattice(dim);
        for s in 1..=g {
            fixtures.push(
                VoxelBody::from_fn(dim, g, 1.0 / g as f64, |c| c.iter().all(|&x| x < s))
                    .map_err(err)?,
            );
        }
    }
    for lam in [vec![1.0, 1.0 + 2f64.sqrt()], vec![1.0, 1.0 + 2f64.sqrt(), 3.682960011888639]] {
        let body = SimBody::new(lam).map_err(err)?;
        fixtures.push(VoxelBody::from_sim(&body, 8, Voxelization::Center).map_err(err)?);
    }
    let mut chain_checked = 0;
    for body in &fixtures {
        let proj: f64 = (0..body.dim()).map(|j| body.project_without(j).volume()).sum();
        for t in [0.25, 0.5, 0.75, 1.0] {
            let k = body.volume() / proj * t;
            if deficiency(body, k) >= 0.0 {
                chain_checked += 1;
                failures += usize::from(structure_checks(body, k, 0, 0).chain_point != Some(true));
            }
        }
    }
    ensure(failures == 0, format!("{failures} failures"))?;
    Ok(format!("0 failures, {chain_checked} chain-point fixtures"))
}

fn criterion_8() -> Check {
    let two = SimBody::new(vec![1.0, 1.0 + 2f64.sqrt()]).map_err(err)?;
    let vox2 = VoxelBody::from_sim(&two, 20, Voxelization::Inner).map_err(err)?;
    let res2 = deficiency_search(&vox2, 1.0, SearchMode::Exhaustive).map_err(err)?;
    ensure(
        res2.best <= res2.slack_bound,
        format!("2D best {} > slack {}", res2.best, res2.slack_bound),
    )?;
    let lambda = solve_prices(3, DEFAULT_TOL).map_err(err)?.lambda;
    let three = SimBody::new(lambda).map_err(err)?;
    let vox3 = VoxelBody::from_sim(&three, 8, Voxelization::Inner).map_err(err)?;
    let mut best3 = f64::NEG_INFINITY;
    for mode in [SearchMode::Local, SearchMode::Exhaustive] {
        let res = deficiency_search(&vox3, 1.0, mode).map_err(err)?;
        ensure(
            res.best <= res.slack_bound,
            format!("3D {mode:?} best {} > slack {}", res.best, res.slack_bound),
        )?;
        best3 = best3.max(res.best);
    }
    Ok(format!(
        "2D best {:.4} (slack {:.4}), 3D best {best3:.4}",
        res2.best, res2.slack_bound
    ))
}

fn criterion_9() -> Check {
    let reg = regularity_check(&Density1D::nonregular_demo(), REGULARITY_GRID);
    ensure(!reg.monotone, "regularity check passed")?;
    let a = nonregular_demo().map_err(err)?;
    ensure(a.margin() > DEMO_MARGIN, format!("margin {}", a.margin()))?;
    ensure(
        a.ironed_integral.abs() < IRONED_TOL,
        format!("ironed integral {:e}", a.ironed_integral),
    )?;
    let b = nonregular_demo().map_err(err)?;
    for (x, y) in [(a.x0, b.x0), (a.x1, b.x1), (a.x2, b.x2), (a.x3, b.x3)] {
        ensure((x - y).abs() <= STABILITY_TOL, "x-values unstable")?;
    }
    Ok(format!("margin {:.4e}", a.margin()))
}

fn criterion_10() -> Check {
    let dir = std::env::temp_dir().join(format!("sja-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(err)?;
    let witness = dir.join("witness.rle");
    let coloring = dir.join("coloring.csv");
    let w = witness.to_str().expect("utf-8 path");
    let c = coloring.to_str().expect("utf-8 path");
    let commands: Vec<Vec<&str>> = vec![
        vec!["prices", "--items", "4", "--samples", "100000", "--seed", "1"],
        vec!["certify", "--items", "2", "--grid", "105"],
        vec!["certify", "--items", "2", "--grid", "21", "--format", "csv", "--out", c],
        vec!["revenue", "--items", "3"],
        vec!["revenue", "--items", "5", "--method", "mc", "--samples", "100000", "--seed", "2"],
        vec!["deficiency-scan", "--items", "2", "--grid", "12", "--witness", w],
        vec!["myerson", "--format", "text"],
        vec!["nonregular", "--format", "csv"],
    ];
    let run = |args: &[&str]| -> Result<Vec<u8>, String> {
        let out = Command::new(env!("CARGO_BIN_EXE_sja"))
            .args(args)
            .output()
            .map_err(err)?;
        let mut bytes = out.stdout;
        for file in [&witness, &coloring] {
            if args.iter().any(|a| std::path::Path::new(a) == file.as_path()) {
                bytes.extend(std::fs::read(file).map_err(err)?);
            }
        }
        ensure(out.status.success(), format!("{args:?} exited with {}", out.status))?;
        Ok(bytes)
    };
    for args in &commands {
        let first = run(args)?;
        let second = run(args)?;
        ensure(first == second, format!("{args:?} differs between runs"))?;
    }
    Ok(format!("{} commands byte-identical", commands.len()))
}

fn main() {
    let criteria: [(usize, fn() -> Check); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let mut failed = 0;
    for (n, check) in criteria {
        match check() {
            Ok(detail) => println!("criterion {n}: PASS ({detail})"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n}: FAIL ({detail})");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
