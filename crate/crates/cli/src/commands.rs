//! The subcommands. Each one reads only the resolved [`Settings`], writes
//! its files into the output directory and reports pass/fail; `run` wraps
//! them with the worker-count knob and the manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fraclt::cov_kernels::{verify_increment_cov_bound, verify_two_time_propositions, ProcessKind, SlndConstants};
use fraclt::frac_calc::{
    gaussian_pairs, signed_power_difference_envelope, verify_exponential_identity, verify_gaussian_fourier_shift,
    MultiIndex,
};
use fraclt::gp_sim::{PathSampler, PathSource, TimeGrid};
use fraclt::local_time::{
    alpha_continuity_check, eps_convergence, holder_exponent_space, holder_exponent_time, min_resolved_eps,
    resolution_ok, VerdictRule, DEFAULT_RESOLUTION_RATIO,
};
use fraclt::moment_engine::{
    kernel_moment, off_origin_exploratory, rate_fit_conditional_wedge, rate_fit_low_dimension, rate_fit_off_origin,
    verify_correlated_moment_closed_form, verify_gaussian_conditioning_identity, verify_regularized_power_integral,
    verify_simplex_power_bound, ConditioningMethod, JRoute, JVariant, RateCriteria, RateFit, SecondMomentOptions,
    TestFunction,
};
use fraclt::report::CheckRecord;
use fraclt::slnd::{default_lambda_grid, slnd_scan, spectral_lower_check};
use fraclt::Error;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::config::Settings;
use crate::manifest::{now_unix, sha256_file, Manifest};
use crate::{Outcome, UsageError};

/// Failure inside a command: usage errors exit 2, check failures exit 1.
enum CmdError {
    Usage(String),
    Check(String),
}

impl From<UsageError> for CmdError {
    fn from(e: UsageError) -> Self {
        CmdError::Usage(e.0)
    }
}

impl From<Error> for CmdError {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain(_) | Error::Precondition(_) | Error::Io(_) | Error::Json(_) => CmdError::Usage(e.to_string()),
            Error::Accuracy { .. } | Error::Numerical(_) => CmdError::Check(e.to_string()),
        }
    }
}

type CmdResult = Result<Outcome, CmdError>;

/// Files written by a command, relative to the output directory.
struct Out {
    dir: PathBuf,
    files: Vec<String>,
}

impl Out {
    fn path(&mut self, name: &str) -> PathBuf {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        self.dir.join(name)
    }

    fn text(&mut self, name: &str, body: &str) -> Result<(), CmdError> {
        let p = self.path(name);
        std::fs::write(&p, body).map_err(|e| CmdError::Usage(format!("cannot write {}: {e}", p.display())))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CmdError> {
        let body = serde_json::to_string_pretty(value).map_err(|e| CmdError::Usage(e.to_string()))?;
        self.text(name, &(body + "\n"))
    }
}

pub fn run(command: &str, settings: &Settings, dir: &Path) -> Result<Outcome, UsageError> {
    std::fs::create_dir_all(dir).map_err(|e| UsageError(format!("cannot create {}: {e}", dir.display())))?;
    let started = now_unix();
    let mut out = Out { dir: dir.to_path_buf(), files: Vec::new() };
    let result = fraclt::par::with_workers(settings.workers, || match command {
        "simulate" => simulate(settings, &mut out),
        "localtime" => localtime(settings, &mut out),
        "moment" => moment(settings, &mut out),
        "rate" => rate(settings, &mut out),
        "holder" => holder(settings, &mut out),
        "slnd-scan" => slnd(settings, &mut out),
        "verify" => verify(settings, &mut out),
        other => Err(CmdError::Usage(format!("unknown command '{other}'"))),
    });
    let mut outputs = BTreeMap::new();
    for f in &out.files {
        let digest = sha256_file(&dir.join(f)).map_err(|e| UsageError(format!("cannot hash {f}: {e}")))?;
        outputs.insert(f.clone(), digest);
    }
    Manifest {
        command: command.to_string(),
        config: settings.clone(),
        seed: settings.seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix: started,
        finished_unix: now_unix(),
        outputs,
    }
    .write(dir)?;
    match result {
        Ok(o) => Ok(o),
        Err(CmdError::Usage(m)) => Err(UsageError(m)),
        Err(CmdError::Check(m)) => Ok(Outcome::Fail(m)),
    }
}

/// Paths on [0, span] with `s.steps` steps.
fn sampler(s: &Settings, kind: ProcessKind, span: f64) -> Result<PathSampler, CmdError> {
    let grid = TimeGrid::uniform(span, s.steps)?;
    Ok(match s.method.as_str() {
        "auto" => PathSampler::auto(kind, grid, s.d, s.paths, s.seed)?,
        "cholesky" => PathSampler::cholesky(kind, grid, s.d, s.paths, s.seed)?,
        "circulant" => {
            if kind.family() != fraclt::cov_kernels::Family::Fbm {
                return Err(CmdError::Usage("the circulant sampler needs stationary increments (fbm)".into()));
            }
            PathSampler::circulant(kind.hurst(), grid, s.d, s.paths, s.seed)?
        }
        other => return Err(CmdError::Usage(format!("unknown method '{other}' (auto | cholesky | circulant)"))),
    })
}

fn require_resolution(s: &Settings, grid: &TimeGrid, hurst: f64, eps: &[f64]) -> Result<(), CmdError> {
    if s.allow_unresolved {
        return Ok(());
    }
    if let Some(e) = eps.iter().find(|&&e| !resolution_ok(grid, hurst, e, DEFAULT_RESOLUTION_RATIO)) {
        return Err(CmdError::Usage(format!(
            "grid with {} steps does not resolve ε = {e:e} (smallest resolved ε is {:e}); \
             raise --steps or pass --allow-unresolved",
            s.steps,
            min_resolved_eps(grid, hurst, DEFAULT_RESOLUTION_RATIO)
        )));
    }
    Ok(())
}

fn simulate(s: &Settings, out: &mut Out) -> CmdResult {
    let kind = s.process()?;
    let set = sampler(s, kind, s.horizon)?.collect();
    set.write_csv(&out.path("paths.csv"))?;
    out.path("paths.bin");
    out.path("paths.json");
    set.write_binary(&out.dir.join("paths"))?;
    Ok(Outcome::Pass)
}

fn localtime(s: &Settings, out: &mut Out) -> CmdResult {
    let kind = s.process()?;
    let alpha = s.alpha()?;
    let x = s.shift()?;
    let eps = s.eps_ladder.values()?;
    let src = sampler(s, kind, s.horizon)?;
    require_resolution(s, src.grid(), kind.hurst(), &eps)?;
    let diag = eps_convergence(&src, &alpha, s.sign, &x, s.horizon, &eps, VerdictRule::default())?;
    let mut csv = String::from("# schema=1\neps,mean,mean_se,second_moment,second_moment_se,pairwise_l2,pairwise_l2_se,resolved,verdict\n");
    for (i, e) in eps.iter().enumerate() {
        let (pl, pse) = if i > 0 { (diag.pairwise_l2[i - 1].mean, diag.pairwise_l2[i - 1].se) } else { (f64::NAN, f64::NAN) };
        let _ = writeln!(
            csv,
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{:?}",
            e, diag.mc_mean[i].mean, diag.mc_mean[i].se, diag.mc_second_moment[i].mean, diag.mc_second_moment[i].se,
            pl, pse, diag.resolved[i], diag.verdict
        );
    }
    out.text("localtime.csv", &csv)?;
    out.json("localtime.json", &diag)?;
    Ok(Outcome::Pass)
}

fn moment(s: &Settings, out: &mut Out) -> CmdResult {
    let kind = s.process()?;
    let alpha = s.alpha()?;
    let x = s.shift()?;
    let eps = s.eps_ladder.values()?;
    let variant = match s.variant.as_str() {
        "full" => JVariant::Full,
        "hat" => JVariant::Hat,
        "tilde" => JVariant::Tilde,
        other => return Err(CmdError::Usage(format!("unknown variant '{other}' (full | hat | tilde)"))),
    };
    let route = match s.route.as_str() {
        "closed_form" | "closed-form" => JRoute::ClosedForm,
        "generic" => JRoute::Generic,
        other => return Err(CmdError::Usage(format!("unknown route '{other}' (closed_form | generic)"))),
    };
    let opts = SecondMomentOptions { route, check_accuracy: s.check_accuracy, ..Default::default() };
    let mut csv = String::from("# schema=1\neps,value,error_estimate\n");
    for &e in &eps {
        let v = kernel_moment(variant, &alpha, &x, s.horizon, e, &kind, s.sign, &opts)?;
        let _ = writeln!(csv, "{e:e},{:e},{:e}", v.value, v.error_estimate);
    }
    out.text("moment.csv", &csv)?;
    Ok(Outcome::Pass)
}

fn rate_table(fit: &RateFit) -> String {
    let mut csv = String::from("# schema=1\neps,value\n");
    for (e, v) in fit.eps.iter().zip(&fit.values) {
        let _ = writeln!(csv, "{e:e},{v:e}");
    }
    csv
}

fn constants(s: &Settings, kind: &ProcessKind) -> Result<SlndConstants, CmdError> {
    match (s.kappa, s.big_k) {
        (Some(k), Some(b)) => Ok(SlndConstants::supplied(k, b)?),
        (None, None) => Ok(slnd_scan(kind, s.m_max, s.trials, s.seed)?.constants),
        _ => Err(CmdError::Usage("give both --kappa and --bigK, or neither".into())),
    }
}

fn rate(s: &Settings, out: &mut Out) -> CmdResult {
    let kind = s.process()?;
    let alpha = s.alpha()?;
    let eps = s.eps_ladder.values()?;
    let crit = RateCriteria::default();
    let (fit, extra) = match s.regime.as_str() {
        "part1" | "low_dimension" | "low-dimension" => (rate_fit_low_dimension(&alpha, &kind, s.horizon, &eps, &crit)?, json!(null)),
        "part2" | "conditional_wedge" | "conditional-wedge" => {
            let c = constants(s, &kind)?;
            (rate_fit_conditional_wedge(&alpha, &kind, s.horizon, &eps, &c, &crit)?, json!({"constants": c}))
        }
        "part3" | "off_origin" | "off-origin" => {
            let r = rate_fit_off_origin(&alpha, &s.shift()?, &kind, s.horizon, &eps, &crit, s.with_correction)?;
            let extra = json!({"correction_ratio": r.correction_ratio, "full_moment": r.full_moment});
            (r.fit, extra)
        }
        "exploratory" | "off_origin_exploratory" => {
            let fit = off_origin_exploratory(&alpha, &s.shift()?, &kind, s.horizon, &eps)?;
            out.text("rate.csv", &rate_table(&fit))?;
            out.json("rate_fit.json", &fit)?;
            return Ok(Outcome::Pass);
        }
        other => return Err(CmdError::Usage(format!("unknown regime '{other}' (part1 | part2 | part3 | exploratory)"))),
    };
    out.text("rate.csv", &rate_table(&fit))?;
    out.json("rate_fit.json", &json!({"fit": fit, "extra": extra}))?;
    if fit.pass {
        Ok(Outcome::Pass)
    } else {
        Err(CmdError::Check(format!(
            "{} fit: slope {:.4} vs predicted {:.4} (r² {:.4}, selected {:?})",
            fit.regime, fit.slope, fit.predicted_exponent, fit.r2, fit.selected
        )))
    }
}

fn holder(s: &Settings, out: &mut Out) -> CmdResult {
    let kind = s.process()?;
    let alpha = s.alpha()?;
    let x = s.shift()?;
    let eps = s.eps_ladder.start;
    // the time increments reach past T by the largest scale
    let reach = s.h_list.iter().copied().fold(0.0, f64::max);
    let src = sampler(s, kind, s.horizon + reach)?;
    require_resolution(s, src.grid(), kind.hurst(), &[eps])?;
    let time = holder_exponent_time(&src, &alpha, s.sign, &x, s.horizon, &s.h_list, eps)?;
    let space = if s.offsets.is_empty() {
        None
    } else {
        Some(holder_exponent_space(&src, &alpha, s.sign, &x, &s.offsets, s.horizon, eps)?)
    };
    let continuity = if s.betas.is_empty() {
        None
    } else {
        let betas = s.betas.iter().map(|b| MultiIndex::new(b.clone())).collect::<fraclt::Result<Vec<_>>>()?;
        Some(alpha_continuity_check(&src, &alpha, &betas, s.sign, &x, s.horizon, eps)?)
    };
    let mut csv = String::from("# schema=1\nscale,mean_sq_increment,se\n");
    for (h, m) in time.scales.iter().zip(&time.mean_sq_increment) {
        let _ = writeln!(csv, "{h:e},{:e},{:e}", m.mean, m.se);
    }
    out.text("holder_time.csv", &csv)?;
    out.json("holder.json", &json!({"time": time, "space": space, "alpha_continuity": continuity}))?;
    Ok(Outcome::Pass)
}

fn slnd(s: &Settings, out: &mut Out) -> CmdResult {
    let kind = s.process()?;
    let report = slnd_scan(&kind, s.m_max, s.trials, s.seed)?;
    out.json("slnd_constants.json", &report)?;
    if report.stable {
        Ok(Outcome::Pass)
    } else {
        Err(CmdError::Check(format!(
            "κ̂ moved by {:.1}% under trial doubling ({} → {})",
            100.0 * report.rel_change,
            report.kappa_n,
            report.kappa_2n
        )))
    }
}

fn identity_records(s: &Settings) -> Result<Vec<CheckRecord>, CmdError> {
    let mut recs = Vec::new();
    for &a in &[0.1, 0.3, 0.5, 0.7, 0.9] {
        for &u in &[-7.5, -0.3, 0.8, 4.2] {
            recs.push(verify_exponential_identity(a, u, 1e-8)?);
        }
    }
    for m in 0..=4 {
        for &a in &[0.5, 1.0, 2.0] {
            for &x in &[-2.5, 0.0, 1.7] {
                recs.push(verify_gaussian_fourier_shift(a, x, m, 1e-8)?);
            }
        }
    }
    let pairs = gaussian_pairs(4000, s.seed);
    for &a in &[0.3, 0.7, 1.0, 1.5] {
        let env = signed_power_difference_envelope(a, &pairs)?;
        recs.push(
            CheckRecord::within("signed power difference envelope", json!({"alpha": a}), env.relative_change, 0.05)
                .with_detail(serde_json::to_value(&env).unwrap_or_default()),
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    for k in 0..=3 {
        for _ in 0..5 {
            let a: f64 = rng.random_range(0.1..2.0);
            let c: f64 = rng.random_range(0.1..2.0);
            let b = rng.random_range(-0.9..0.9) * (a * c).sqrt();
            let e: f64 = rng.random_range(0.0..0.5);
            recs.push(verify_correlated_moment_closed_form(k, a, b, c, e, 1e-8)?);
        }
    }
    let cov2 = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 2.0]);
    recs.push(verify_gaussian_conditioning_identity(&cov2, TestFunction::AbsPower(0.5), ConditioningMethod::Quadrature, 1e-6)?);
    let cov3 = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.2, 0.3, 1.5, -0.4, 0.2, -0.4, 2.0]);
    recs.push(verify_gaussian_conditioning_identity(
        &cov3,
        TestFunction::AbsPower(0.5),
        ConditioningMethod::MonteCarlo { samples: s.mc_samples, seed: s.seed, z_max: 3.0 },
        3.0,
    )?);
    let sched: Vec<f64> = (1..=8).map(|k| 10f64.powi(-k)).collect();
    for &(beta, gamma, p) in &[(2.0, 1.0, 1.0), (1.0, 1.0, 1.0), (0.5, 1.0, 1.0), (1.5, 2.0, 1.5)] {
        let r = verify_regularized_power_integral(beta, gamma, p, &sched, 10.0)?;
        recs.push(
            CheckRecord::within("regularized power integral band", json!({"beta": beta, "gamma": gamma, "p": p}), r.band, 10.0)
                .with_detail(serde_json::to_value(&r).unwrap_or_default()),
        );
    }
    for (a, t, h) in [(vec![0.4], 1.0, 0.1), (vec![0.3, 0.5], 1.0, 0.1), (vec![0.4, 0.6, 0.2], 0.5, 0.05)] {
        let r = verify_simplex_power_bound(&a, t, h, 200_000, s.seed)?;
        let resid = (r.estimate.mean - 3.0 * r.estimate.se) / r.bound;
        recs.push(
            CheckRecord::within("simplex power bound", json!({"a": a, "T": t, "h": h}), resid, 1.0)
                .with_detail(serde_json::to_value(&r).unwrap_or_default()),
        );
    }
    Ok(recs)
}

fn bound_records(s: &Settings, kind: &ProcessKind) -> Result<Vec<CheckRecord>, CmdError> {
    let consts = constants(s, kind)?;
    let mut pairs = Vec::new();
    for i in 0..=12 {
        let sv = 10f64.powf(-3.0 + 3.0 * i as f64 / 12.0);
        for j in 0..=16 {
            let r = 10f64.powf(-4.0 + 6.0 * j as f64 / 16.0);
            pairs.push((sv * (1.0 + r), sv));
        }
    }
    let rep = verify_two_time_propositions(kind, &pairs, &[0.0, 1e-4, 1e-2], &consts)?;
    let mut recs: Vec<CheckRecord> = rep
        .bounds
        .iter()
        .map(|b| {
            CheckRecord::within(format!("two-time bound: {}", b.name), json!({"kind": kind.label()}), 1.0 - b.worst_slack, 1e-12)
                .with_detail(serde_json::to_value(b).unwrap_or_default())
        })
        .collect();
    for &(t, sv, g) in &[(0.6, 0.5, 2.0), (1.0, 0.2, 4.0), (0.3, 0.29, 10.0)] {
        let r = verify_increment_cov_bound(kind, t, sv, g)?;
        recs.push(
            CheckRecord::within("increment covariance bound", json!({"t": t, "s": sv, "gamma": g}), r.lhs / r.rhs, 1.0 + 1e-10)
                .with_detail(serde_json::to_value(&r).unwrap_or_default()),
        );
    }
    Ok(recs)
}

fn slnd_records(s: &Settings, kind: &ProcessKind) -> Result<Vec<CheckRecord>, CmdError> {
    let scan = slnd_scan(kind, s.m_max, s.trials, s.seed)?;
    let mut recs = vec![CheckRecord::within(
        "local nondeterminism constant stability",
        json!({"kind": kind.label(), "m_max": s.m_max, "trials": s.trials}),
        scan.rel_change,
        scan.config.stability_tol,
    )
    .with_detail(serde_json::to_value(&scan).unwrap_or_default())];
    let spec = spectral_lower_check(kind, &default_lambda_grid(0.1, 1e3, 20), 1e-12)?;
    let mut rec = CheckRecord::within("spectral lower bound", json!({"kind": kind.label()}), -spec.c_hat, 0.0)
        .with_detail(serde_json::to_value(&spec).unwrap_or_default());
    rec.pass = spec.pass;
    recs.push(rec);
    Ok(recs)
}

fn verify(s: &Settings, out: &mut Out) -> CmdResult {
    let kind = s.process()?;
    let mut recs = Vec::new();
    let suite = match s.suite.as_str() {
        "identities" => "lemmas",
        "bounds" => "propositions",
        other => other,
    };
    if !matches!(suite, "lemmas" | "propositions" | "slnd" | "all") {
        return Err(CmdError::Usage(format!("unknown suite '{suite}' (lemmas | propositions | slnd | all)")));
    }
    if matches!(suite, "lemmas" | "all") {
        recs.extend(identity_records(s)?);
    }
    if matches!(suite, "propositions" | "all") {
        recs.extend(bound_records(s, &kind)?);
    }
    if matches!(suite, "slnd" | "all") {
        recs.extend(slnd_records(s, &kind)?);
    }
    out.json("verify_report.json", &recs)?;
    let failed: Vec<&CheckRecord> = recs.iter().filter(|r| !r.pass).collect();
    if failed.is_empty() {
        Ok(Outcome::Pass)
    } else {
        let first = serde_json::to_string(failed[0]).unwrap_or_default();
        Err(CmdError::Check(format!("{} of {} checks failed; first: {first}", failed.len(), recs.len())))
    }
}
