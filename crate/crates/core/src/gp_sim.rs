//! Exact simulation of d-dimensional processes with independent components.
//!
//! Two generators: a Cholesky factor of the covariance on an arbitrary grid
//! (any family), and circulant embedding of fractional Gaussian noise on a
//! uniform grid (fBm only). Every (path, component) pair draws from its own
//! counter-based stream of the master seed, so output never depends on the
//! number of worker threads.
//!
//! Paths can be materialized ([`PathSet`]) or generated on demand
//! ([`PathSampler`]); both implement [`PathSource`].

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::cov_kernels::{Family, ProcessKind};
use crate::error::{domain, precondition, Error, Result};

/// Largest grid accepted by the dense Cholesky generator.
pub const MAX_CHOLESKY_POINTS: usize = 4096;

/// Strictly increasing observation times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    points: Vec<f64>,
    uniform: bool,
    dt: Option<f64>,
}

impl TimeGrid {
    /// Grid from explicit times; marked uniform when the spacing is constant
    /// to 1e-12 relative.
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return domain("time grid needs at least one point");
        }
        if points[0] < 0.0 || points.iter().any(|t| !t.is_finite()) {
            return domain("time grid points must be finite and ≥ 0");
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return domain("time grid must be strictly increasing");
        }
        let (uniform, dt) = if points.len() >= 2 {
            let dt = (points[points.len() - 1] - points[0]) / (points.len() - 1) as f64;
            let ok = points.windows(2).all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-12 * dt);
            (ok, ok.then_some(dt))
        } else {
            (false, None)
        };
        Ok(Self { points, uniform, dt })
    }

    /// {0, T/n, 2T/n, …, T}: n steps, n + 1 points.
    pub fn uniform(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) || n_steps == 0 {
            return domain(format!("uniform grid needs T > 0 and n ≥ 1, got T={horizon}, n={n_steps}"));
        }
        let dt = horizon / n_steps as f64;
        let mut points: Vec<f64> = (0..=n_steps).map(|k| k as f64 * dt).collect();
        points[n_steps] = horizon;
        Ok(Self { points, uniform: true, dt: Some(dt) })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    pub fn dt(&self) -> Option<f64> {
        self.dt
    }

    pub fn last(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Largest spacing between consecutive points (including from 0 when the
    /// grid starts later).
    pub fn max_step(&self) -> f64 {
        let mut m = self.points[0];
        for w in self.points.windows(2) {
            m = m.max(w[1] - w[0]);
        }
        m
    }
}

/// Generator that produced a path set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMethod {
    Cholesky,
    CirculantFgn,
    /// circulant embedding was requested but not nonnegative definite
    CholeskyFallback,
}

/// Anything that can hand out paths one at a time. A path is laid out
/// time-major: `path[k * d + l]` is component l at grid point k.
pub trait PathSource: Sync {
    fn kind(&self) -> &ProcessKind;
    fn grid(&self) -> &TimeGrid;
    fn dim(&self) -> usize;
    fn n_paths(&self) -> usize;
    fn seed(&self) -> u64;
    fn method(&self) -> SimMethod;
    /// Writes path `p` into `out` (length grid.len() · d).
    fn fill_path(&self, p: usize, out: &mut [f64]);

    fn path(&self, p: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.grid().len() * self.dim()];
        self.fill_path(p, &mut v);
        v
    }
}

/// Precomputed generator for one (kind, grid).
#[derive(Clone)]
enum Generator {
    /// packed row-major lower factor of the covariance at the positive times;
    /// `zero` marks a leading t = 0 pinned to 0
    Cholesky { factor: Arc<Vec<f64>>, m: usize, zero: bool },
    Circulant { sqrt_eig: Arc<Vec<f64>>, fft: Arc<dyn Fft<f64>>, n_incr: usize, scale: f64, zero: bool },
}

impl std::fmt::Debug for Generator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Generator::Cholesky { m, zero, .. } => write!(f, "Cholesky {{ m: {m}, zero: {zero} }}"),
            Generator::Circulant { n_incr, .. } => write!(f, "Circulant {{ n_incr: {n_incr} }}"),
        }
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Lower Cholesky factor with the jitter ladder 1e-14·tr/n, ×10, … 1e-8·tr/n.
/// Returns the packed factor and the jitter used.
pub fn cholesky_with_jitter(cov: &DMatrix<f64>, label: &str) -> Result<(Vec<f64>, f64)> {
    let m = cov.nrows();
    let mean_diag = cov.trace() / m as f64;
    let mut jitter = 0.0;
    let mut next = 1e-14 * mean_diag;
    loop {
        let mut a = cov.clone();
        for i in 0..m {
            a[(i, i)] += jitter;
        }
        if let Some(ch) = a.cholesky() {
            let l = ch.l();
            let mut packed = Vec::with_capacity(m * (m + 1) / 2);
            for i in 0..m {
                for j in 0..=i {
                    packed.push(l[(i, j)]);
                }
            }
            return Ok((packed, jitter));
        }
        if next > 1e-8 * mean_diag * 1.0000001 {
            return Err(Error::Numerical(format!(
                "covariance on {label} is not positive definite even with jitter {jitter:e}"
            )));
        }
        jitter = next;
        next *= 10.0;
    }
}

fn covariance_matrix(kind: &ProcessKind, times: &[f64]) -> DMatrix<f64> {
    let m = times.len();
    DMatrix::from_fn(m, m, |i, j| kind.cov(times[i], times[j]))
}

/// Autocovariance of unit-step fractional Gaussian noise at lag k.
pub fn fgn_autocov(hurst: f64, k: usize) -> f64 {
    let h2 = 2.0 * hurst;
    let k = k as f64;
    0.5 * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
}

impl Generator {
    fn cholesky(kind: &ProcessKind, grid: &TimeGrid) -> Result<(Self, f64)> {
        if grid.len() > MAX_CHOLESKY_POINTS {
            return precondition(format!(
                "dense Cholesky limited to {MAX_CHOLESKY_POINTS} grid points, got {}",
                grid.len()
            ));
        }
        let zero = grid.points()[0] == 0.0;
        let times = if zero { &grid.points()[1..] } else { grid.points() };
        let m = times.len();
        if m == 0 {
            return Ok((Generator::Cholesky { factor: Arc::new(Vec::new()), m, zero }, 0.0));
        }
        let cov = covariance_matrix(kind, times);
        let label = format!("{m}-point grid on [{}, {}]", times[0], times[m - 1]);
        let (factor, jitter) = cholesky_with_jitter(&cov, &label)?;
        Ok((Generator::Cholesky { factor: Arc::new(factor), m, zero }, jitter))
    }

    /// Circulant embedding of fGn, or `None` when the embedding has a
    /// genuinely negative eigenvalue.
    fn circulant(hurst: f64, grid: &TimeGrid) -> Result<Option<Self>> {
        let dt = match grid.dt() {
            Some(dt) if grid.is_uniform() => dt,
            _ => return precondition("circulant fGn needs a uniform grid with at least two points"),
        };
        let t0 = grid.points()[0];
        let zero = t0 == 0.0;
        if !zero && (t0 - dt).abs() > 1e-12 * dt {
            return precondition("circulant fGn needs a grid of the form {0 or dt, …, n·dt}");
        }
        let n_incr = if zero { grid.len() - 1 } else { grid.len() };
        let big_m = 2 * n_incr;
        let mut c: Vec<Complex64> = (0..big_m)
            .map(|j| {
                let lag = if j <= n_incr { j } else { big_m - j };
                Complex64::new(fgn_autocov(hurst, lag), 0.0)
            })
            .collect();
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_forward(big_m);
        fft.process(&mut c);
        let max_eig = c.iter().fold(0.0f64, |m, z| m.max(z.re));
        if c.iter().any(|z| z.re < -1e-10 * max_eig) {
            return Ok(None);
        }
        let sqrt_eig: Vec<f64> = c.iter().map(|z| (z.re.max(0.0) / big_m as f64).sqrt()).collect();
        Ok(Some(Generator::Circulant {
            sqrt_eig: Arc::new(sqrt_eig),
            fft,
            n_incr,
            scale: dt.powf(hurst),
            zero,
        }))
    }

    /// One component path (length = grid size) from the given stream.
    fn component(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        match self {
            Generator::Cholesky { factor, m, zero } => {
                let off = usize::from(*zero);
                if *zero {
                    out[0] = 0.0;
                }
                let xi: Vec<f64> = (0..*m).map(|_| StandardNormal.sample(rng)).collect();
                let mut row = 0;
                for i in 0..*m {
                    let mut acc = 0.0;
                    for j in 0..=i {
                        acc += factor[row + j] * xi[j];
                    }
                    row += i + 1;
                    out[off + i] = acc;
                }
            }
            Generator::Circulant { sqrt_eig, fft, n_incr, scale, zero } => {
                let mut w: Vec<Complex64> = sqrt_eig
                    .iter()
                    .map(|&s| {
                        let re: f64 = StandardNormal.sample(rng);
                        let im: f64 = StandardNormal.sample(rng);
                        Complex64::new(s * re, s * im)
                    })
                    .collect();
                fft.process(&mut w);
                let off = usize::from(*zero);
                if *zero {
                    out[0] = 0.0;
                }
                let mut acc = 0.0;
                for k in 0..*n_incr {
                    acc += w[k].re * scale;
                    out[off + k] = acc;
                }
            }
        }
    }
}

/// Lazily generated paths: nothing is stored beyond the generator.
#[derive(Debug, Clone)]
pub struct PathSampler {
    kind: ProcessKind,
    grid: TimeGrid,
    d: usize,
    n_paths: usize,
    seed: u64,
    method: SimMethod,
    jitter: f64,
    generator: Generator,
}

impl PathSampler {
    /// Exact sampler through the dense Cholesky factor.
    pub fn cholesky(kind: ProcessKind, grid: TimeGrid, d: usize, n_paths: usize, seed: u64) -> Result<Self> {
        check_shape(d, n_paths)?;
        let (generator, jitter) = Generator::cholesky(&kind, &grid)?;
        Ok(Self { kind, grid, d, n_paths, seed, method: SimMethod::Cholesky, jitter, generator })
    }

    /// Circulant-embedding fGn sampler (fBm only, uniform grid); falls back
    /// to Cholesky when the embedding fails.
    pub fn circulant(hurst: f64, grid: TimeGrid, d: usize, n_paths: usize, seed: u64) -> Result<Self> {
        check_shape(d, n_paths)?;
        let kind = ProcessKind::fbm(hurst)?;
        match Generator::circulant(hurst, &grid)? {
            Some(generator) => {
                Ok(Self { kind, grid, d, n_paths, seed, method: SimMethod::CirculantFgn, jitter: 0.0, generator })
            }
            None => {
                let (generator, jitter) = Generator::cholesky(&kind, &grid)?;
                Ok(Self { kind, grid, d, n_paths, seed, method: SimMethod::CholeskyFallback, jitter, generator })
            }
        }
    }

    /// Circulant for fBm on uniform grids, Cholesky otherwise.
    pub fn auto(kind: ProcessKind, grid: TimeGrid, d: usize, n_paths: usize, seed: u64) -> Result<Self> {
        let circulant_ok = kind.family() == Family::Fbm
            && grid.is_uniform()
            && grid.dt().is_some_and(|dt| grid.points()[0] == 0.0 || (grid.points()[0] - dt).abs() <= 1e-12 * dt);
        if circulant_ok {
            Self::circulant(kind.hurst(), grid, d, n_paths, seed)
        } else {
            Self::cholesky(kind, grid, d, n_paths, seed)
        }
    }

    /// Diagonal jitter that was needed for the factorization.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Materializes all paths.
    pub fn collect(&self) -> PathSet {
        let n = self.grid.len();
        let d = self.d;
        let chunks = crate::par::map_range(self.n_paths, |p| self.path(p));
        let mut values = Vec::with_capacity(self.n_paths * n * d);
        for c in chunks {
            values.extend_from_slice(&c);
        }
        PathSet {
            kind: self.kind,
            grid: self.grid.clone(),
            d,
            n_paths: self.n_paths,
            values,
            seed: self.seed,
            method: self.method,
        }
    }
}

fn check_shape(d: usize, n_paths: usize) -> Result<()> {
    if d == 0 {
        return domain("dimension must be ≥ 1");
    }
    if n_paths == 0 {
        return domain("need at least one path");
    }
    Ok(())
}

impl PathSource for PathSampler {
    fn kind(&self) -> &ProcessKind {
        &self.kind
    }
    fn grid(&self) -> &TimeGrid {
        &self.grid
    }
    fn dim(&self) -> usize {
        self.d
    }
    fn n_paths(&self) -> usize {
        self.n_paths
    }
    fn seed(&self) -> u64 {
        self.seed
    }
    fn method(&self) -> SimMethod {
        self.method
    }
    fn fill_path(&self, p: usize, out: &mut [f64]) {
        let n = self.grid.len();
        let mut comp = vec![0.0; n];
        for l in 0..self.d {
            let mut rng = stream_rng(self.seed, (p * self.d + l) as u64);
            self.generator.component(&mut rng, &mut comp);
            for k in 0..n {
                out[k * self.d + l] = comp[k];
            }
        }
    }
}

/// Materialized paths, `values[(p·n + k)·d + l]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathSet {
    pub kind: ProcessKind,
    pub grid: TimeGrid,
    pub d: usize,
    pub n_paths: usize,
    pub values: Vec<f64>,
    pub seed: u64,
    pub method: SimMethod,
}

impl PathSource for PathSet {
    fn kind(&self) -> &ProcessKind {
        &self.kind
    }
    fn grid(&self) -> &TimeGrid {
        &self.grid
    }
    fn dim(&self) -> usize {
        self.d
    }
    fn n_paths(&self) -> usize {
        self.n_paths
    }
    fn seed(&self) -> u64 {
        self.seed
    }
    fn method(&self) -> SimMethod {
        self.method
    }
    fn fill_path(&self, p: usize, out: &mut [f64]) {
        let len = self.grid.len() * self.d;
        out.copy_from_slice(&self.values[p * len..(p + 1) * len]);
    }
}

/// Exact simulation on any grid (≤ 4096 points).
pub fn simulate_cholesky(kind: ProcessKind, grid: TimeGrid, d: usize, n_paths: usize, seed: u64) -> Result<PathSet> {
    Ok(PathSampler::cholesky(kind, grid, d, n_paths, seed)?.collect())
}

/// fBm by circulant embedding of its increments on a uniform grid.
pub fn simulate_fgn_circulant(hurst: f64, grid: TimeGrid, d: usize, n_paths: usize, seed: u64) -> Result<PathSet> {
    Ok(PathSampler::circulant(hurst, grid, d, n_paths, seed)?.collect())
}

impl PathSet {
    pub fn value(&self, p: usize, k: usize, l: usize) -> f64 {
        self.values[(p * self.grid.len() + k) * self.d + l]
    }

    /// Writes the values column-major (path index fastest, then time, then
    /// component) as little-endian f64 to `<stem>.bin`, with a JSON sidecar
    /// `<stem>.json` describing the layout.
    pub fn write_binary(&self, stem: &Path) -> Result<()> {
        let n = self.grid.len();
        let mut w = BufWriter::new(File::create(stem.with_extension("bin"))?);
        for l in 0..self.d {
            for k in 0..n {
                for p in 0..self.n_paths {
                    w.write_all(&self.value(p, k, l).to_le_bytes())?;
                }
            }
        }
        w.flush()?;
        let side = Sidecar {
            schema: 1,
            kind: self.kind,
            grid: self.grid.clone(),
            d: self.d,
            n_paths: self.n_paths,
            seed: self.seed,
            method: self.method,
            shape: [self.n_paths, n, self.d],
            order: "column-major f64 little-endian".into(),
        };
        serde_json::to_writer_pretty(File::create(stem.with_extension("json"))?, &side)?;
        Ok(())
    }

    /// Reads back a set written by [`PathSet::write_binary`].
    pub fn read_binary(stem: &Path) -> Result<Self> {
        let side: Sidecar = serde_json::from_reader(File::open(stem.with_extension("json"))?)?;
        let [n_paths, n, d] = side.shape;
        if n != side.grid.len() || d != side.d || n_paths != side.n_paths {
            return precondition("sidecar shape disagrees with its grid");
        }
        let mut bytes = Vec::new();
        File::open(stem.with_extension("bin"))?.read_to_end(&mut bytes)?;
        if bytes.len() != 8 * n_paths * n * d {
            return precondition(format!("binary has {} bytes, expected {}", bytes.len(), 8 * n_paths * n * d));
        }
        let mut values = vec![0.0; n_paths * n * d];
        let mut it = bytes.chunks_exact(8);
        for l in 0..d {
            for k in 0..n {
                for p in 0..n_paths {
                    let b: [u8; 8] = it.next().expect("length checked").try_into().expect("8 bytes");
                    values[(p * n + k) * d + l] = f64::from_le_bytes(b);
                }
            }
        }
        Ok(Self { kind: side.kind, grid: side.grid, d, n_paths, values, seed: side.seed, method: side.method })
    }

    /// CSV with a `# schema=1` comment line and columns path,t,x1..xd.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "# schema=1 kind={} seed={} method={:?}", self.kind, self.seed, self.method)?;
        let cols: Vec<String> = (1..=self.d).map(|l| format!("x{l}")).collect();
        writeln!(w, "path,t,{}", cols.join(","))?;
        for p in 0..self.n_paths {
            for (k, t) in self.grid.points().iter().enumerate() {
                let xs: Vec<String> = (0..self.d).map(|l| format!("{:e}", self.value(p, k, l))).collect();
                writeln!(w, "{p},{t:e},{}", xs.join(","))?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Parses the values block of a CSV written by [`PathSet::write_csv`]
    /// into (path, t, x) rows.
    pub fn read_csv_rows(path: &Path) -> Result<Vec<(usize, f64, Vec<f64>)>> {
        let r = BufReader::new(File::open(path)?);
        let mut rows = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if i == 0 {
                if !line.starts_with("# schema=1") {
                    return precondition("missing '# schema=1' header");
                }
                continue;
            }
            if i == 1 {
                continue;
            }
            let mut it = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64> {
                s.and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::Precondition(format!("bad CSV line {}", i + 1)))
            };
            let p = parse(it.next())? as usize;
            let t = parse(it.next())?;
            let xs = it.map(|v| parse(Some(v))).collect::<Result<Vec<f64>>>()?;
            rows.push((p, t, xs));
        }
        Ok(rows)
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    schema: u32,
    kind: ProcessKind,
    grid: TimeGrid,
    d: usize,
    n_paths: usize,
    seed: u64,
    method: SimMethod,
    shape: [usize; 3],
    order: String,
}

/// z-score of one sample covariance entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovEntry {
    pub i: usize,
    pub j: usize,
    pub component: usize,
    pub sample: f64,
    pub analytic: f64,
    pub z: f64,
    pub flagged: bool,
}

/// Per-pair z-scores of the sample covariance against the analytic one.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovCheckReport {
    pub entries: Vec<CovEntry>,
    pub n_flagged: usize,
    pub fraction_within: f64,
}

const Z_FLAG: f64 = 5.0;

fn summarize(entries: Vec<CovEntry>) -> CovCheckReport {
    let n_flagged = entries.iter().filter(|e| e.flagged).count();
    let fraction_within = if entries.is_empty() { 1.0 } else { 1.0 - n_flagged as f64 / entries.len() as f64 };
    CovCheckReport { entries, n_flagged, fraction_within }
}

/// Sample second moments E[X_{t_i}X_{t_j}] (zero mean known) versus the
/// analytic covariance of `kind`, per component. The standard error uses the
/// Gaussian fourth moment: Var(X_iX_j) = C_ii C_jj + C_ij².
pub fn empirical_cov_check_against(
    paths: &dyn PathSource,
    kind: &ProcessKind,
    pairs: &[(usize, usize)],
) -> Result<CovCheckReport> {
    let n = paths.grid().len();
    if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i >= n || j >= n) {
        return domain(format!("pair ({i}, {j}) outside the {n}-point grid"));
    }
    let d = paths.dim();
    let np = paths.n_paths();
    let sums = crate::par::map_range(np, |p| {
        let path = paths.path(p);
        let mut v = Vec::with_capacity(pairs.len() * d);
        for &(i, j) in pairs {
            for l in 0..d {
                v.push(path[i * d + l] * path[j * d + l]);
            }
        }
        v
    });
    let t = paths.grid().points();
    let mut entries = Vec::with_capacity(pairs.len() * d);
    for (q, &(i, j)) in pairs.iter().enumerate() {
        for l in 0..d {
            let col: Vec<f64> = sums.iter().map(|v| v[q * d + l]).collect();
            let sample = crate::stats::pairwise_sum(&col) / np as f64;
            let analytic = kind.cov(t[i], t[j]);
            let var = kind.cov(t[i], t[i]) * kind.cov(t[j], t[j]) + analytic * analytic;
            let se = (var / np as f64).sqrt();
            let z = if se > 0.0 { (sample - analytic) / se } else if sample == analytic { 0.0 } else { f64::INFINITY };
            entries.push(CovEntry { i, j, component: l, sample, analytic, z, flagged: z.abs() > Z_FLAG });
        }
    }
    Ok(summarize(entries))
}

/// [`empirical_cov_check_against`] the kind the paths were simulated from.
pub fn empirical_cov_check(paths: &dyn PathSource, pairs: &[(usize, usize)]) -> Result<CovCheckReport> {
    if paths.n_paths() < 1000 {
        return precondition(format!("covariance check needs ≥ 1000 paths, got {}", paths.n_paths()));
    }
    let kind = *paths.kind();
    empirical_cov_check_against(paths, &kind, pairs)
}

/// Sample cross-moments between distinct components, which should vanish.
/// `component` in each entry encodes the pair as l·d + m.
pub fn cross_component_check(paths: &dyn PathSource, pairs: &[(usize, usize)]) -> Result<CovCheckReport> {
    let d = paths.dim();
    if d < 2 {
        return precondition("cross-component check needs d ≥ 2");
    }
    let np = paths.n_paths();
    let comps: Vec<(usize, usize)> = (0..d).flat_map(|l| (l + 1..d).map(move |m| (l, m))).collect();
    let prods = crate::par::map_range(np, |p| {
        let path = paths.path(p);
        let mut v = Vec::with_capacity(pairs.len() * comps.len());
        for &(i, j) in pairs {
            for &(l, m) in &comps {
                v.push(path[i * d + l] * path[j * d + m]);
            }
        }
        v
    });
    let kind = paths.kind();
    let t = paths.grid().points();
    let mut entries = Vec::new();
    for (q, &(i, j)) in pairs.iter().enumerate() {
        for (c, &(l, m)) in comps.iter().enumerate() {
            let col: Vec<f64> = prods.iter().map(|v| v[q * comps.len() + c]).collect();
            let sample = crate::stats::pairwise_sum(&col) / np as f64;
            let se = (kind.cov(t[i], t[i]) * kind.cov(t[j], t[j]) / np as f64).sqrt();
            let z = if se > 0.0 { sample / se } else { 0.0 };
            entries.push(CovEntry {
                i,
                j,
                component: l * d + m,
                sample,
                analytic: 0.0,
                z,
                flagged: z.abs() > Z_FLAG,
            });
        }
    }
    Ok(summarize(entries))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_shape() {
        let g = TimeGrid::uniform(2.0, 8).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g.points()[0], 0.0);
        assert_eq!(g.last(), 2.0);
        assert!(g.is_uniform());
        assert_eq!(g.dt(), Some(0.25));
        assert!(TimeGrid::new(vec![0.0, 0.5, 0.5]).is_err());
        assert!(!TimeGrid::new(vec![0.1, 0.2, 0.5]).unwrap().is_uniform());
    }

    #[test]
    fn same_seed_same_path() {
        let k = ProcessKind::bifbm(0.6, 0.7).unwrap();
        let g = TimeGrid::uniform(1.0, 16).unwrap();
        let a = simulate_cholesky(k, g.clone(), 2, 1, 42).unwrap();
        let b = simulate_cholesky(k, g, 2, 1, 42).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn zero_time_is_pinned() {
        let k = ProcessKind::subfbm(0.3).unwrap();
        let s = simulate_cholesky(k, TimeGrid::uniform(1.0, 10).unwrap(), 3, 5, 1).unwrap();
        for p in 0..5 {
            for l in 0..3 {
                assert_eq!(s.value(p, 0, l), 0.0);
            }
        }
    }

    #[test]
    fn brownian_circulant_increments_have_variance_dt() {
        let s = simulate_fgn_circulant(0.5, TimeGrid::uniform(1.0, 64).unwrap(), 1, 4000, 9).unwrap();
        assert_eq!(s.method, SimMethod::CirculantFgn);
        let dt = 1.0 / 64.0;
        let incr: Vec<f64> = (0..4000).map(|p| s.value(p, 10, 0) - s.value(p, 9, 0)).collect();
        let var = incr.iter().map(|x| x * x).sum::<f64>() / 4000.0;
        // Var of the sample variance is 2dt²/N
        assert!((var - dt).abs() < 5.0 * dt * (2.0f64 / 4000.0).sqrt());
    }

    #[test]
    fn circulant_rejects_nonuniform_grid() {
        let g = TimeGrid::new(vec![0.0, 0.1, 0.3]).unwrap();
        assert!(matches!(simulate_fgn_circulant(0.7, g, 1, 1, 0), Err(Error::Precondition(_))));
    }
}
