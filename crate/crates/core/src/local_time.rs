//! Path-based estimates of the regularized local-time derivatives
//! L^(α)_{±,ε}(T, x) = ∫₀^T ∏_ℓ D^{α_ℓ}_± p_ε(X^ℓ_t + x_ℓ) dt,
//! together with Monte Carlo convergence diagnostics in ε and Hölder
//! regressions in time and space.
//!
//! Time integrals use the trapezoidal rule on the simulation grid; a horizon
//! that falls inside a cell is handled by linear interpolation of the path.

use serde::{Deserialize, Serialize};

use crate::error::{domain, precondition, Error, Result};
use crate::fit::{fit_log_log, LinearFit};
use crate::frac_calc::{MultiIndex, ScaledKernel, Sign};
use crate::gp_sim::{PathSource, TimeGrid};
use crate::stats::MeanSe;

/// Name of the quadrature rule recorded with every estimate.
pub const DT_RULE: &str = "trapezoid";

/// Default bound on dt^{min(1,2H)} / √ε for a grid to resolve the kernel.
pub const DEFAULT_RESOLUTION_RATIO: f64 = 0.1;

/// One path's value of L^(α)_{±,ε}(T, x).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LtEstimate {
    pub value: f64,
    pub alpha: MultiIndex,
    pub sign: Sign,
    pub eps: f64,
    pub x: Vec<f64>,
    pub horizon: f64,
    pub path_id: usize,
    pub dt_rule: String,
}

/// ∏_ℓ D^{α_ℓ}_± p_ε(y_ℓ + x_ℓ) with everything that depends only on
/// (α, sign, ε, x) precomputed.
#[derive(Debug, Clone)]
pub struct ProductKernel {
    kernels: Vec<ScaledKernel>,
    shift: Vec<f64>,
    inv_sqrt_eps: f64,
    norm: f64,
}

impl ProductKernel {
    pub fn new(alpha: &MultiIndex, sign: Sign, eps: f64, x: &[f64]) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return domain(format!("ε must be positive, got {eps}"));
        }
        if x.len() != alpha.dim() {
            return domain(format!("x has {} coordinates, α has {}", x.len(), alpha.dim()));
        }
        let kernels: Vec<ScaledKernel> = alpha.alphas().iter().map(|&a| ScaledKernel::new(a, sign)).collect();
        let norm = eps.powf(-0.5 * (alpha.total() + alpha.dim() as f64));
        Ok(Self { kernels, shift: x.to_vec(), inv_sqrt_eps: 1.0 / eps.sqrt(), norm })
    }

    /// Kernel at the state `y` (length d).
    pub fn eval(&self, y: &[f64]) -> f64 {
        let mut prod = self.norm;
        for (l, k) in self.kernels.iter().enumerate() {
            prod *= k.eval_scaled((y[l] + self.shift[l]) * self.inv_sqrt_eps);
        }
        prod
    }
}

/// Running trapezoid integral of the kernel along one path, with values at
/// every grid point so that any horizon can be read off.
#[derive(Debug, Clone)]
pub struct CumulativeLt {
    integrand: Vec<f64>,
    prefix: Vec<f64>,
}

impl CumulativeLt {
    /// `path` is time-major with d components per time.
    pub fn new(path: &[f64], grid: &TimeGrid, kernel: &ProductKernel) -> Result<Self> {
        let d = kernel.kernels.len();
        let n = grid.len();
        if path.len() != n * d {
            return domain(format!("path has {} values, grid × d needs {}", path.len(), n * d));
        }
        if grid.points()[0] != 0.0 {
            return precondition("local-time grids must start at t = 0");
        }
        let integrand: Vec<f64> = (0..n).map(|k| kernel.eval(&path[k * d..(k + 1) * d])).collect();
        let t = grid.points();
        let mut prefix = Vec::with_capacity(n);
        prefix.push(0.0);
        for k in 1..n {
            let cell = 0.5 * (t[k] - t[k - 1]) * (integrand[k] + integrand[k - 1]);
            prefix.push(prefix[k - 1] + cell);
        }
        Ok(Self { integrand, prefix })
    }

    /// ∫₀^T, interpolating the path linearly inside a partial last cell.
    pub fn at(&self, horizon: f64, path: &[f64], grid: &TimeGrid, kernel: &ProductKernel) -> Result<f64> {
        let t = grid.points();
        if horizon < 0.0 || horizon > grid.last() * (1.0 + 1e-12) {
            return domain(format!("horizon {horizon} outside the simulated interval [0, {}]", grid.last()));
        }
        let k = t.partition_point(|&s| s <= horizon).saturating_sub(1);
        if k + 1 >= t.len() || horizon == t[k] {
            return Ok(self.prefix[k]);
        }
        let d = kernel.kernels.len();
        let w = (horizon - t[k]) / (t[k + 1] - t[k]);
        let y: Vec<f64> = (0..d).map(|l| (1.0 - w) * path[k * d + l] + w * path[(k + 1) * d + l]).collect();
        let f_end = kernel.eval(&y);
        Ok(self.prefix[k] + 0.5 * (horizon - t[k]) * (self.integrand[k] + f_end))
    }
}

/// L^(α)_{±,ε}(T, x) on one path.
#[allow(clippy::too_many_arguments)]
pub fn lt_eps(
    path: &[f64],
    grid: &TimeGrid,
    path_id: usize,
    alpha: &MultiIndex,
    sign: Sign,
    eps: f64,
    x: &[f64],
    horizon: f64,
) -> Result<LtEstimate> {
    let kernel = ProductKernel::new(alpha, sign, eps, x)?;
    let cum = CumulativeLt::new(path, grid, &kernel)?;
    let value = cum.at(horizon, path, grid, &kernel)?;
    if !value.is_finite() {
        return Err(Error::Numerical(format!("non-finite local time on path {path_id}")));
    }
    Ok(LtEstimate {
        value,
        alpha: alpha.clone(),
        sign,
        eps,
        x: x.to_vec(),
        horizon,
        path_id,
        dt_rule: DT_RULE.into(),
    })
}

/// Whether the grid resolves the kernel bandwidth: dt^{min(1,2H)} ≤ ratio·√ε.
pub fn resolution_ok(grid: &TimeGrid, hurst: f64, eps: f64, ratio: f64) -> bool {
    grid.max_step().powf((2.0 * hurst).min(1.0)) <= ratio * eps.sqrt()
}

/// Smallest ε the grid resolves under [`resolution_ok`].
pub fn min_resolved_eps(grid: &TimeGrid, hurst: f64, ratio: f64) -> f64 {
    (grid.max_step().powf((2.0 * hurst).min(1.0)) / ratio).powi(2)
}

/// Monte Carlo summary of L over all paths, for several ε at once.
fn per_path_values(
    paths: &dyn PathSource,
    alpha: &MultiIndex,
    sign: Sign,
    x: &[f64],
    horizon: f64,
    eps_list: &[f64],
) -> Result<Vec<Vec<f64>>> {
    if alpha.dim() != paths.dim() {
        return domain(format!("α has {} components, paths have {}", alpha.dim(), paths.dim()));
    }
    let kernels = eps_list.iter().map(|&e| ProductKernel::new(alpha, sign, e, x)).collect::<Result<Vec<_>>>()?;
    let grid = paths.grid();
    let rows: Vec<Result<Vec<f64>>> = crate::par::map_range(paths.n_paths(), |p| {
        let path = paths.path(p);
        kernels
            .iter()
            .map(|k| CumulativeLt::new(&path, grid, k)?.at(horizon, &path, grid, k))
            .collect()
    });
    rows.into_iter().collect()
}

/// MC mean and second moment of L^(α)_{±,ε}(T, x) at one ε.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LtMoments {
    pub eps: f64,
    pub mean: MeanSe,
    pub second_moment: MeanSe,
}

pub fn lt_moments(
    paths: &dyn PathSource,
    alpha: &MultiIndex,
    sign: Sign,
    x: &[f64],
    horizon: f64,
    eps_list: &[f64],
) -> Result<Vec<LtMoments>> {
    let rows = per_path_values(paths, alpha, sign, x, horizon, eps_list)?;
    Ok(eps_list
        .iter()
        .enumerate()
        .map(|(i, &eps)| {
            let v: Vec<f64> = rows.iter().map(|r| r[i]).collect();
            LtMoments { eps, mean: MeanSe::of(&v), second_moment: MeanSe::of_map(&v, |y| y * y) }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stabilizing,
    Diverging,
    Inconclusive,
}

/// Thresholds of the ε-convergence verdict.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VerdictRule {
    /// Stabilizing when the last E|L_ε − L_η|² (+2 SE) is below tol·E|L_ε|²
    pub tol: f64,
    /// Diverging when E|L_ε|² increases strictly and by at least this factor overall
    pub growth: f64,
    pub min_rungs: usize,
}

impl Default for VerdictRule {
    fn default() -> Self {
        Self { tol: 0.05, growth: 1.5, min_rungs: 3 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceDiag {
    pub eps_schedule: Vec<f64>,
    pub mc_mean: Vec<MeanSe>,
    pub mc_second_moment: Vec<MeanSe>,
    /// E|L_{ε_i} − L_{ε_{i+1}}|² for consecutive rungs
    pub pairwise_l2: Vec<MeanSe>,
    /// whether the grid resolves each ε
    pub resolved: Vec<bool>,
    pub verdict: Verdict,
    pub rule: VerdictRule,
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

/// Monte Carlo ε-convergence diagnostic of L^(α)_{±,ε}(T, x).
#[allow(clippy::too_many_arguments)]
pub fn eps_convergence(
    paths: &dyn PathSource,
    alpha: &MultiIndex,
    sign: Sign,
    x: &[f64],
    horizon: f64,
    eps_schedule: &[f64],
    rule: VerdictRule,
) -> Result<ConvergenceDiag> {
    if eps_schedule.is_empty() {
        return domain("ε schedule is empty");
    }
    if !strictly_decreasing(eps_schedule) {
        return domain("ε schedule must be strictly decreasing");
    }
    let rows = per_path_values(paths, alpha, sign, x, horizon, eps_schedule)?;
    let col = |i: usize| -> Vec<f64> { rows.iter().map(|r| r[i]).collect() };
    let n = eps_schedule.len();
    let mc_mean: Vec<MeanSe> = (0..n).map(|i| MeanSe::of(&col(i))).collect();
    let mc_second_moment: Vec<MeanSe> = (0..n).map(|i| MeanSe::of_map(&col(i), |v| v * v)).collect();
    let pairwise_l2: Vec<MeanSe> = (1..n)
        .map(|i| {
            let diffs: Vec<f64> = rows.iter().map(|r| (r[i] - r[i - 1]).powi(2)).collect();
            MeanSe::of(&diffs)
        })
        .collect();
    let hurst = paths.kind().hurst();
    let resolved = eps_schedule
        .iter()
        .map(|&e| resolution_ok(paths.grid(), hurst, e, DEFAULT_RESOLUTION_RATIO))
        .collect();
    let verdict = judge(&mc_second_moment, &pairwise_l2, &rule);
    Ok(ConvergenceDiag {
        eps_schedule: eps_schedule.to_vec(),
        mc_mean,
        mc_second_moment,
        pairwise_l2,
        resolved,
        verdict,
        rule,
    })
}

fn judge(m2: &[MeanSe], pairwise: &[MeanSe], rule: &VerdictRule) -> Verdict {
    let n = m2.len();
    if n < 2 {
        return Verdict::Inconclusive;
    }
    let means: Vec<f64> = m2.iter().map(|m| m.mean).collect();
    if n >= rule.min_rungs
        && means.windows(2).all(|w| w[1] > w[0])
        && means[n - 1] >= rule.growth * means[0]
    {
        return Verdict::Diverging;
    }
    let last = pairwise[pairwise.len() - 1];
    if last.mean + 2.0 * last.se < rule.tol * means[n - 1] {
        return Verdict::Stabilizing;
    }
    Verdict::Inconclusive
}

/// Hölder regression of E|L(a) − L(b)|² against a scale h.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HolderFit {
    pub scales: Vec<f64>,
    pub mean_sq_increment: Vec<MeanSe>,
    pub fit: LinearFit,
    /// slope / 2
    pub theta_hat: f64,
    /// the exponent the theory allows (upper end of the admissible window)
    pub predicted: f64,
    /// scales below the kernel bandwidth, where the regularization dominates
    pub below_resolution: Vec<bool>,
}

/// θ̂₁: slope/2 of log E|L(T+h) − L(T)|² against log h. The prediction is
/// 1 − H(|α| + d).
#[allow(clippy::too_many_arguments)]
pub fn holder_exponent_time(
    paths: &dyn PathSource,
    alpha: &MultiIndex,
    sign: Sign,
    x: &[f64],
    horizon: f64,
    h_list: &[f64],
    eps: f64,
) -> Result<HolderFit> {
    if h_list.len() < 3 {
        return domain("Hölder regression needs at least three scales");
    }
    if h_list.iter().any(|&h| !(h > 0.0)) {
        return domain("time scales must be positive");
    }
    if alpha.dim() != paths.dim() {
        return domain(format!("α has {} components, paths have {}", alpha.dim(), paths.dim()));
    }
    let grid = paths.grid();
    let max_h = h_list.iter().cloned().fold(0.0, f64::max);
    if horizon + max_h > grid.last() * (1.0 + 1e-12) {
        return domain(format!("T + h = {} exceeds the simulated interval", horizon + max_h));
    }
    let kernel = ProductKernel::new(alpha, sign, eps, x)?;
    let rows: Vec<Result<Vec<f64>>> = crate::par::map_range(paths.n_paths(), |p| {
        let path = paths.path(p);
        let cum = CumulativeLt::new(&path, grid, &kernel)?;
        let base = cum.at(horizon, &path, grid, &kernel)?;
        h_list.iter().map(|&h| Ok((cum.at(horizon + h, &path, grid, &kernel)? - base).powi(2))).collect()
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let stats: Vec<MeanSe> =
        (0..h_list.len()).map(|i| MeanSe::of(&rows.iter().map(|r| r[i]).collect::<Vec<_>>())).collect();
    let hurst = paths.kind().hurst();
    let bandwidth_time = eps.powf(0.5 / hurst);
    let fit = fit_log_log(h_list, &stats.iter().map(|m| m.mean).collect::<Vec<_>>())?;
    Ok(HolderFit {
        scales: h_list.to_vec(),
        mean_sq_increment: stats,
        theta_hat: 0.5 * fit.slope,
        fit,
        predicted: 1.0 - hurst * (alpha.total() + alpha.dim() as f64),
        below_resolution: h_list.iter().map(|&h| h < bandwidth_time).collect(),
    })
}

/// θ̂₂: slope/2 of log E|L(T, x₀ + z) − L(T, x₀)|² against log |z|, with
/// the shift z applied along the first coordinate. The prediction is the
/// window cap min(1, ½(1/H − 2|α| − d)).
#[allow(clippy::too_many_arguments)]
pub fn holder_exponent_space(
    paths: &dyn PathSource,
    alpha: &MultiIndex,
    sign: Sign,
    x0: &[f64],
    offsets: &[f64],
    horizon: f64,
    eps: f64,
) -> Result<HolderFit> {
    if offsets.len() < 3 {
        return domain("Hölder regression needs at least three offsets");
    }
    if offsets.iter().any(|&z| z == 0.0 || !z.is_finite()) {
        return domain("offsets must be nonzero and finite");
    }
    let mut eps_x = vec![x0.to_vec()];
    for &z in offsets {
        let mut y = x0.to_vec();
        y[0] += z;
        eps_x.push(y);
    }
    let kernels =
        eps_x.iter().map(|xv| ProductKernel::new(alpha, sign, eps, xv)).collect::<Result<Vec<_>>>()?;
    if alpha.dim() != paths.dim() {
        return domain(format!("α has {} components, paths have {}", alpha.dim(), paths.dim()));
    }
    let grid = paths.grid();
    let rows: Vec<Result<Vec<f64>>> = crate::par::map_range(paths.n_paths(), |p| {
        let path = paths.path(p);
        let vals = kernels
            .iter()
            .map(|k| CumulativeLt::new(&path, grid, k)?.at(horizon, &path, grid, k))
            .collect::<Result<Vec<f64>>>()?;
        Ok(vals[1..].iter().map(|v| (v - vals[0]).powi(2)).collect())
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let stats: Vec<MeanSe> =
        (0..offsets.len()).map(|i| MeanSe::of(&rows.iter().map(|r| r[i]).collect::<Vec<_>>())).collect();
    let abs: Vec<f64> = offsets.iter().map(|z| z.abs()).collect();
    let fit = fit_log_log(&abs, &stats.iter().map(|m| m.mean).collect::<Vec<_>>())?;
    let hurst = paths.kind().hurst();
    let cap = (0.5 * (1.0 / hurst - 2.0 * alpha.total() - alpha.dim() as f64)).min(1.0);
    Ok(HolderFit {
        scales: abs.clone(),
        mean_sq_increment: stats,
        theta_hat: 0.5 * fit.slope,
        fit,
        predicted: cap,
        below_resolution: abs.iter().map(|&z| z < eps.sqrt()).collect(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlphaContinuityEntry {
    pub beta: MultiIndex,
    pub mean_sq_diff: MeanSe,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlphaContinuityReport {
    pub alpha: MultiIndex,
    pub eps: f64,
    pub entries: Vec<AlphaContinuityEntry>,
    /// each E|L^(β) − L^(α)|² lies strictly below the previous one
    pub strictly_decreasing: bool,
    /// and the drops exceed the combined standard errors
    pub decreasing_beyond_error_bars: bool,
}

/// E|L^(β)_ε − L^(α)_ε|² along a sequence β → α, all inside the existence
/// regime H(2|β| + d) < 1.
#[allow(clippy::too_many_arguments)]
pub fn alpha_continuity_check(
    paths: &dyn PathSource,
    alpha: &MultiIndex,
    betas: &[MultiIndex],
    sign: Sign,
    x: &[f64],
    horizon: f64,
    eps: f64,
) -> Result<AlphaContinuityReport> {
    let hurst = paths.kind().hurst();
    for b in std::iter::once(alpha).chain(betas) {
        if b.dim() != paths.dim() {
            return domain("every index must have the path dimension");
        }
        if b.existence_margin(hurst) <= 0.0 {
            return precondition(format!(
                "index {:?} violates the existence condition H(2|β|+d) < 1 (H = {hurst})",
                b.alphas()
            ));
        }
    }
    let base = ProductKernel::new(alpha, sign, eps, x)?;
    let others = betas.iter().map(|b| ProductKernel::new(b, sign, eps, x)).collect::<Result<Vec<_>>>()?;
    let grid = paths.grid();
    let rows: Vec<Result<Vec<f64>>> = crate::par::map_range(paths.n_paths(), |p| {
        let path = paths.path(p);
        let l0 = CumulativeLt::new(&path, grid, &base)?.at(horizon, &path, grid, &base)?;
        others
            .iter()
            .map(|k| Ok((CumulativeLt::new(&path, grid, k)?.at(horizon, &path, grid, k)? - l0).powi(2)))
            .collect()
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let entries: Vec<AlphaContinuityEntry> = betas
        .iter()
        .enumerate()
        .map(|(i, b)| AlphaContinuityEntry {
            beta: b.clone(),
            mean_sq_diff: MeanSe::of(&rows.iter().map(|r| r[i]).collect::<Vec<_>>()),
        })
        .collect();
    let strictly = entries.windows(2).all(|w| w[1].mean_sq_diff.mean < w[0].mean_sq_diff.mean);
    let beyond = entries.windows(2).all(|w| {
        let (a, b) = (w[0].mean_sq_diff, w[1].mean_sq_diff);
        a.mean - b.mean > (a.se * a.se + b.se * b.se).sqrt()
    });
    Ok(AlphaContinuityReport {
        alpha: alpha.clone(),
        eps,
        entries,
        strictly_decreasing: strictly,
        decreasing_beyond_error_bars: beyond,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cov_kernels::ProcessKind;
    use crate::gp_sim::simulate_cholesky;

    #[test]
    fn flat_kernel_gives_horizon_times_density() {
        let kind = ProcessKind::fbm(0.5).unwrap();
        let set = simulate_cholesky(kind, TimeGrid::uniform(1.0, 64).unwrap(), 1, 3, 5).unwrap();
        let a = MultiIndex::new(vec![0.0]).unwrap();
        let eps = 1e6;
        let p = set.path(0);
        let est = lt_eps(&p, &set.grid, 0, &a, Sign::Plus, eps, &[0.3], 1.0).unwrap();
        let want = 1.0 / (2.0 * std::f64::consts::PI * eps).sqrt();
        assert!((est.value / want - 1.0).abs() < 1e-5);
    }

    #[test]
    fn constant_path_grows_linearly() {
        let grid = TimeGrid::uniform(2.0, 40).unwrap();
        let path = vec![0.0; 41];
        let a = MultiIndex::new(vec![0.0]).unwrap();
        let k = ProductKernel::new(&a, Sign::Plus, 0.01, &[0.0]).unwrap();
        let cum = CumulativeLt::new(&path, &grid, &k).unwrap();
        let l1 = cum.at(0.5, &path, &grid, &k).unwrap();
        let l2 = cum.at(1.37, &path, &grid, &k).unwrap();
        assert!((l2 / l1 - 1.37 / 0.5).abs() < 1e-12);
        assert!(cum.at(2.5, &path, &grid, &k).is_err());
    }

    #[test]
    fn single_rung_is_inconclusive() {
        let kind = ProcessKind::fbm(0.5).unwrap();
        let set = simulate_cholesky(kind, TimeGrid::uniform(1.0, 32).unwrap(), 1, 20, 1).unwrap();
        let a = MultiIndex::new(vec![0.0]).unwrap();
        let d = eps_convergence(&set, &a, Sign::Plus, &[0.0], 1.0, &[0.1], VerdictRule::default()).unwrap();
        assert_eq!(d.verdict, Verdict::Inconclusive);
    }
}
