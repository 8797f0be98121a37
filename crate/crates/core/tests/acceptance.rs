//! Acceptance run: the thirteen end-to-end criteria at their stated
//! tolerances, one PASS/FAIL line each. A panic fails `cargo test`.
//!
//! Criterion 8 compares the wedge-channel slope with the printed exponent
//! −0.2. That exponent does not follow from the wedge integral, which scales
//! like ε^{1/H−|α|−d} = ε^{−1/3} for (H, d) = (0.6, 2), approached with an
//! ε^{1/6} relative correction (about −0.5 on the standard ladder). The line
//! is reported as FAIL; the test instead pins the deep-ladder slope to −1/3,
//! so a regression in either direction is caught.

use std::time::Instant;

use fraclt::cov_kernels::ProcessKind;
use fraclt::frac_calc::{verify_exponential_identity, verify_gaussian_fourier_shift, MultiIndex, Sign};
use fraclt::gp_sim::{PathSampler, PathSource, TimeGrid};
use fraclt::local_time::{
    alpha_continuity_check, eps_convergence, holder_exponent_time, lt_moments, resolution_ok, VerdictRule,
    DEFAULT_RESOLUTION_RATIO,
};
use fraclt::moment_engine::{
    default_eps_ladder, geometric_ladder, rate_fit_conditional_wedge, rate_fit_low_dimension, rate_fit_off_origin,
    reflection_check, second_moment, verify_correlated_moment_closed_form, verify_gaussian_conditioning_identity,
    wedge_moment, ConditioningMethod, GrowthModel, RateCriteria, TestFunction,
};
use fraclt::slnd::slnd_scan;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Line {
    id: u32,
    pass: bool,
    summary: String,
}

fn report(id: u32, pass: bool, summary: String) -> Line {
    println!("[{}] criterion {id:>2}: {summary}", if pass { "PASS" } else { "FAIL" });
    Line { id, pass, summary }
}

fn exponential_identity() -> Line {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let a = rng.random_range(0.05..0.95);
        let u = rng.random_range(-10.0..10.0);
        worst = worst.max(verify_exponential_identity(a, u, 1e-8).unwrap().residual);
    }
    let secs = start.elapsed().as_secs_f64();
    report(1, worst <= 1e-8 && secs < 10.0, format!("exponential identity, 50 draws: max residual {worst:.2e}, {secs:.2}s"))
}

fn fourier_shift() -> Line {
    let mut worst: f64 = 0.0;
    for m in 0..=4 {
        for &a in &[0.5, 1.0, 2.0] {
            for &x in &[-3.0, -1.3, 0.0, 0.7, 3.0] {
                worst = worst.max(verify_gaussian_fourier_shift(a, x, m, 1e-8).unwrap().residual);
            }
        }
    }
    report(2, worst <= 1e-8, format!("gaussian Fourier shift, m ≤ 4: max residual {worst:.2e}"))
}

fn correlated_moments() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let a: f64 = rng.random_range(0.1..3.0);
        let c: f64 = rng.random_range(0.1..3.0);
        let b = rng.random_range(-0.95..0.95) * (a * c).sqrt();
        let e = rng.random_range(0.0..0.5);
        for k in 0..=3 {
            worst = worst.max(verify_correlated_moment_closed_form(k, a, b, c, e, 1e-8).unwrap().residual);
        }
    }
    report(3, worst <= 1e-8, format!("correlated moment closed form, k ≤ 3 × 20 inputs: max residual {worst:.2e}"))
}

fn conditioning_identity() -> Line {
    let cov2 = DMatrix::from_row_slice(2, 2, &[1.3, 0.5, 0.5, 0.8]);
    let q = verify_gaussian_conditioning_identity(&cov2, TestFunction::AbsPower(0.5), ConditioningMethod::Quadrature, 1e-6)
        .unwrap();
    let cov3 = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.2, 0.3, 1.5, -0.4, 0.2, -0.4, 2.0]);
    let mc = verify_gaussian_conditioning_identity(
        &cov3,
        TestFunction::AbsPower(0.5),
        ConditioningMethod::MonteCarlo { samples: 10_000_000, seed: 404, z_max: 3.0 },
        3.0,
    )
    .unwrap();
    report(
        4,
        q.pass && mc.pass,
        format!("conditioning identity: n=2 residual {:.2e}, n=3 |z| {:.2}", q.residual, mc.residual),
    )
}

fn brownian_oracle() -> Line {
    let start = Instant::now();
    let grid = TimeGrid::uniform(1.0, 4096).unwrap();
    let src = PathSampler::circulant(0.5, grid, 1, 10_000, 505).unwrap();
    let alpha = MultiIndex::new(vec![0.0]).unwrap();
    let ladder = geometric_ladder(1e-2, 10f64.powf(-0.5), 5).unwrap();
    let diag = eps_convergence(&src, &alpha, Sign::Plus, &[0.0], 1.0, &ladder, VerdictRule::default()).unwrap();
    let last = diag.mc_mean.last().unwrap();
    let target = (2.0 / std::f64::consts::PI).sqrt();
    let z = (last.mean - target) / last.se;
    let secs = start.elapsed().as_secs_f64();
    report(
        5,
        z.abs() <= 3.0 && secs <= 300.0,
        format!("Brownian L_ε(1,0) at ε=1e-4: {:.5} ± {:.5} vs {target:.5} (z {z:.2}), {secs:.1}s", last.mean, last.se),
    )
}

fn existence_regime() -> Line {
    let kind = ProcessKind::fbm(0.25).unwrap();
    let alpha = MultiIndex::new(vec![0.5]).unwrap();
    let ladder = geometric_ladder(1e-2, 0.5, 8).unwrap();
    let vals: Vec<f64> =
        ladder.iter().map(|&e| second_moment(&alpha, &[0.0], 1.0, e, &kind, Sign::Plus).unwrap()).collect();
    let n = vals.len();
    let rel = (vals[n - 1] - vals[n - 2]).abs() / vals[n - 1];
    report(6, rel < 0.02, format!("existence regime (0.25, 1, 0.5): last-rung relative change {rel:.3e}"))
}

fn part_one() -> Line {
    let bm = ProcessKind::fbm(0.5).unwrap();
    let crit = RateCriteria::default();
    let ladder = default_eps_ladder();
    let power = rate_fit_low_dimension(&MultiIndex::new(vec![1.0]).unwrap(), &bm, 1.0, &ladder, &crit).unwrap();
    let boundary = rate_fit_low_dimension(&MultiIndex::new(vec![0.5]).unwrap(), &bm, 1.0, &ladder, &crit).unwrap();
    let ok_power = (power.slope + 0.5).abs() <= 0.15 && power.r2 >= 0.95;
    let ok_log = boundary.selected == GrowthModel::Log;
    report(
        7,
        ok_power && ok_log,
        format!(
            "low-dimension rate: slope {:.4} (r² {:.4}); boundary case selects {:?}",
            power.slope, power.r2, boundary.selected
        ),
    )
}

fn part_two() -> (Line, f64) {
    let kind = ProcessKind::fbm(0.6).unwrap();
    let consts = slnd_scan(&kind, 8, 400, 606).unwrap().constants;
    let alpha = MultiIndex::new(vec![0.0, 0.0]).unwrap();
    let crit = RateCriteria { slope_tol: 0.1, ..Default::default() };
    let fit = rate_fit_conditional_wedge(&alpha, &kind, 1.0, &default_eps_ladder(), &consts, &crit).unwrap();
    let pass = (fit.slope + 0.2).abs() <= 0.1 && fit.r2 >= 0.95;
    // asymptotic slope from the last decade of a deep ladder
    let deep = |e: f64| wedge_moment(&alpha, &kind, 1.0, e, &consts).unwrap();
    let asymptotic = (deep(1e-12) / deep(1e-11)).ln() / 0.1f64.ln();
    let line = report(
        8,
        pass,
        format!(
            "wedge channel (0.6, 2, (0,0)): slope {:.4} (r² {:.4}) vs printed −0.2 ± 0.1; \
             slope over ε ∈ [1e-12, 1e-11] {asymptotic:.4}, integral exponent 1/H−d = {:.4}",
            fit.slope,
            fit.r2,
            1.0 / 0.6 - 2.0
        ),
    );
    (line, asymptotic)
}

fn part_three() -> Line {
    let kind = ProcessKind::subfbm(0.6).unwrap();
    let alpha = MultiIndex::new(vec![1.0]).unwrap();
    let r = rate_fit_off_origin(&alpha, &[0.5], &kind, 1.0, &default_eps_ladder(), &RateCriteria::default(), false)
        .unwrap();
    let want = 1.0 / 1.2 - 1.5;
    report(
        9,
        (r.fit.slope - want).abs() <= 0.15 && r.fit.r2 >= 0.95,
        format!("off-origin sub-fBm (0.6, 1, 1, 0.5): slope {:.4} (r² {:.4}) vs {want:.4}", r.fit.slope, r.fit.r2),
    )
}

fn slnd_certification() -> Line {
    let kinds = [
        ProcessKind::fbm(0.3).unwrap(),
        ProcessKind::fbm(0.5).unwrap(),
        ProcessKind::fbm(0.7).unwrap(),
        ProcessKind::bifbm(0.5, 0.8).unwrap(),
        ProcessKind::subfbm(0.7).unwrap(),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for k in kinds {
        let r = slnd_scan(&k, 16, 2000, 707).unwrap();
        pass &= r.stable && r.kappa_2n > 0.0;
        if k.family() == fraclt::cov_kernels::Family::Fbm && k.hurst() == 0.5 {
            pass &= r.kappa_2n >= 0.5 - 1e-9;
        }
        parts.push(format!("{k} κ̂={:.4}", r.kappa_2n));
    }
    report(10, pass, format!("local nondeterminism scan: {}", parts.join(", ")))
}

struct McConfig {
    kind: ProcessKind,
    alpha: Vec<f64>,
    x: Vec<f64>,
    eps: f64,
    steps: usize,
    paths: usize,
}

fn mc_cross_validation() -> Line {
    let configs = [
        McConfig { kind: ProcessKind::fbm(0.5).unwrap(), alpha: vec![0.0], x: vec![0.0], eps: 1e-2, steps: 1024, paths: 10_000 },
        McConfig { kind: ProcessKind::fbm(0.3).unwrap(), alpha: vec![0.5], x: vec![0.0], eps: 0.05, steps: 1024, paths: 10_000 },
        McConfig { kind: ProcessKind::fbm(0.5).unwrap(), alpha: vec![1.0], x: vec![0.0], eps: 0.05, steps: 1024, paths: 10_000 },
        McConfig { kind: ProcessKind::subfbm(0.6).unwrap(), alpha: vec![1.0], x: vec![0.5], eps: 0.05, steps: 512, paths: 10_000 },
        McConfig { kind: ProcessKind::fbm(0.6).unwrap(), alpha: vec![0.0, 0.0], x: vec![0.0, 0.0], eps: 0.05, steps: 1024, paths: 10_000 },
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, c) in configs.iter().enumerate() {
        let grid = TimeGrid::uniform(1.0, c.steps).unwrap();
        assert!(resolution_ok(&grid, c.kind.hurst(), c.eps, DEFAULT_RESOLUTION_RATIO));
        let d = c.alpha.len();
        let src = PathSampler::auto(c.kind, grid, d, c.paths, 1100 + i as u64).unwrap();
        let alpha = MultiIndex::new(c.alpha.clone()).unwrap();
        let mc = lt_moments(&src, &alpha, Sign::Plus, &c.x, 1.0, &[c.eps]).unwrap()[0].second_moment;
        let quad = second_moment(&alpha, &c.x, 1.0, c.eps, &c.kind, Sign::Plus).unwrap();
        let z = (mc.mean - quad) / mc.se;
        pass &= z.abs() <= 3.0;
        parts.push(format!("{}: z {z:.2}", c.kind));
    }
    report(11, pass, format!("MC vs quadrature second moments: {}", parts.join("; ")))
}

fn reflection() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(1212);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let h = rng.random_range(0.3..0.8);
        let kind = match rng.random_range(0..3) {
            0 => ProcessKind::fbm(h).unwrap(),
            1 => ProcessKind::subfbm(h).unwrap(),
            _ => ProcessKind::bifbm(h, rng.random_range(0.5..1.0)).unwrap(),
        };
        let a = if rng.random::<bool>() { rng.random_range(0.0..1.5) } else { rng.random_range(0..3) as f64 };
        let alpha = MultiIndex::new(vec![a]).unwrap();
        let x = rng.random_range(-1.0..1.0);
        let eps = rng.random_range(0.05..0.5);
        worst = worst.max(reflection_check(&alpha, &[x], 1.0, eps, &kind, 1e-8).unwrap().residual);
    }
    report(12, worst <= 1e-8, format!("reflection symmetry, 20 draws: max relative gap {worst:.2e}"))
}

fn holder_windows() -> Line {
    let kind = ProcessKind::fbm(0.25).unwrap();
    let grid = TimeGrid::uniform(1.0, 4096).unwrap();
    let src = PathSampler::circulant(kind.hurst(), grid, 1, 2000, 1313).unwrap();
    let eps = 0.03;
    assert!(resolution_ok(src.grid(), kind.hurst(), eps, DEFAULT_RESOLUTION_RATIO));
    let hs: Vec<f64> = (0..5).map(|k| 2f64.powi(-8 + k)).collect();
    let mut pass = true;
    let mut parts = Vec::new();
    for a in [0.0, 0.5] {
        let alpha = MultiIndex::new(vec![a]).unwrap();
        let fit = holder_exponent_time(&src, &alpha, Sign::Plus, &[0.0], 0.5, &hs, eps).unwrap();
        let ok = fit.theta_hat >= fit.predicted - 0.15 && fit.theta_hat <= 1.05;
        pass &= ok;
        parts.push(format!("α={a}: θ̂ {:.3} (pred {:.3})", fit.theta_hat, fit.predicted));
    }
    let alpha = MultiIndex::new(vec![0.5]).unwrap();
    let betas: Vec<MultiIndex> = [0.1, 0.25, 0.4, 0.45].iter().map(|&b| MultiIndex::new(vec![b]).unwrap()).collect();
    let cont = alpha_continuity_check(&src, &alpha, &betas, Sign::Plus, &[0.0], 1.0, eps).unwrap();
    pass &= cont.decreasing_beyond_error_bars;
    parts.push(format!("α-continuity decreasing: {}", cont.decreasing_beyond_error_bars));
    report(13, pass, format!("Hölder windows: {}", parts.join("; ")))
}

// runs without the libtest harness so the PASS/FAIL lines are always shown
fn main() {
    let mut lines = vec![
        exponential_identity(),
        fourier_shift(),
        correlated_moments(),
        conditioning_identity(),
        brownian_oracle(),
        existence_regime(),
        part_one(),
    ];
    let (wedge, wedge_slope) = part_two();
    lines.push(wedge);
    lines.extend([part_three(), slnd_certification(), mc_cross_validation(), reflection(), holder_windows()]);

    let passed = lines.iter().filter(|l| l.pass).count();
    println!("acceptance: {passed}/{} criteria pass", lines.len());

    for l in &lines {
        if l.id == 8 {
            // documented: the printed exponent is not attainable; the slope must
            // instead track the wedge integral's own exponent
            let derived = 1.0 / 0.6 - 2.0;
            assert!(
                (wedge_slope - derived).abs() <= 0.01,
                "wedge slope {wedge_slope} no longer tracks the derived exponent {derived}"
            );
        } else {
            assert!(l.pass, "criterion {} failed: {}", l.id, l.summary);
        }
    }
}
