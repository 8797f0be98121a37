//! Resolved run settings: defaults, overridden by a TOML config file,
//! overridden by command-line flags. The fully resolved tree is what the
//! manifest records, so omitted keys cannot drift between runs.

use std::path::Path;

use fraclt::cov_kernels::ProcessKind;
use fraclt::frac_calc::{MultiIndex, Sign};
use serde::{Deserialize, Serialize};

use crate::UsageError;

/// Geometric ε ladder start·factor^k, k < count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ladder {
    pub start: f64,
    pub factor: f64,
    pub count: usize,
}

impl Ladder {
    pub fn values(&self) -> Result<Vec<f64>, UsageError> {
        fraclt::moment_engine::geometric_ladder(self.start, self.factor, self.count)
            .map_err(|e| UsageError(format!("eps ladder: {e}")))
    }
}

impl std::str::FromStr for Ladder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("expected start:factor:count, got '{s}'"));
        }
        let num = |p: &str| p.trim().parse::<f64>().map_err(|e| format!("'{p}': {e}"));
        Ok(Self {
            start: num(parts[0])?,
            factor: num(parts[1])?,
            count: parts[2].trim().parse().map_err(|e| format!("'{}': {e}", parts[2]))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// fbm | bifbm | subfbm
    pub kind: String,
    #[serde(alias = "H")]
    pub hurst: Option<f64>,
    #[serde(alias = "H0")]
    pub h0: Option<f64>,
    #[serde(alias = "K0")]
    pub k0: Option<f64>,
    pub d: usize,
    /// one order per coordinate (a single value is broadcast)
    pub alpha: Vec<f64>,
    /// one shift per coordinate (a single value is broadcast)
    pub x: Vec<f64>,
    pub sign: Sign,
    #[serde(alias = "T")]
    pub horizon: f64,
    pub eps_ladder: Ladder,
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
    /// worker threads; absent means the default pool
    pub workers: Option<usize>,
    /// auto | cholesky | circulant
    pub method: String,
    /// part1 | part2 | part3 (or their descriptive names)
    pub regime: String,
    /// full | hat | tilde
    pub variant: String,
    /// closed_form | generic
    pub route: String,
    pub check_accuracy: bool,
    /// time scales of the Hölder regression
    pub h_list: Vec<f64>,
    /// spatial offsets of the Hölder regression (empty: skip)
    pub offsets: Vec<f64>,
    /// orders β approaching α for the continuity check (empty: skip)
    pub betas: Vec<Vec<f64>>,
    pub m_max: usize,
    pub trials: usize,
    /// lemmas (alias identities) | propositions (alias bounds) | slnd | all
    pub suite: String,
    pub kappa: Option<f64>,
    pub big_k: Option<f64>,
    pub allow_unresolved: bool,
    /// also evaluate the full second moment next to Ĩ in the off-origin fit
    pub with_correction: bool,
    pub mc_samples: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            kind: "fbm".into(),
            hurst: Some(0.5),
            h0: None,
            k0: None,
            d: 1,
            alpha: vec![0.0],
            x: vec![0.0],
            sign: Sign::Plus,
            horizon: 1.0,
            eps_ladder: Ladder { start: 1e-2, factor: 10f64.powf(-0.5), count: 7 },
            paths: 1000,
            steps: 1024,
            seed: 1,
            workers: None,
            method: "auto".into(),
            regime: "part1".into(),
            variant: "full".into(),
            route: "closed_form".into(),
            check_accuracy: false,
            h_list: vec![1.0 / 64.0, 1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0],
            offsets: Vec::new(),
            betas: Vec::new(),
            m_max: 8,
            trials: 1000,
            suite: "all".into(),
            kappa: None,
            big_k: None,
            allow_unresolved: false,
            with_correction: false,
            mc_samples: 1_000_000,
        }
    }
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Self, UsageError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| UsageError(format!("malformed config {}: {e}", path.display())))
    }

    pub fn process(&self) -> Result<ProcessKind, UsageError> {
        let need = |v: Option<f64>, name: &str| v.ok_or_else(|| UsageError(format!("--{name} is required for {}", self.kind)));
        let r = match self.kind.as_str() {
            "fbm" => ProcessKind::fbm(need(self.hurst, "H")?),
            "subfbm" => ProcessKind::subfbm(need(self.hurst, "H")?),
            "bifbm" => ProcessKind::bifbm(need(self.h0, "H0")?, need(self.k0, "K0")?),
            other => return Err(UsageError(format!("unknown kind '{other}' (fbm | bifbm | subfbm)"))),
        };
        r.map_err(|e| UsageError(e.to_string()))
    }

    fn broadcast(&self, v: &[f64], name: &str) -> Result<Vec<f64>, UsageError> {
        match v.len() {
            1 => Ok(vec![v[0]; self.d]),
            n if n == self.d => Ok(v.to_vec()),
            n => Err(UsageError(format!("--{name} has {n} entries but d = {}", self.d))),
        }
    }

    pub fn alpha(&self) -> Result<MultiIndex, UsageError> {
        MultiIndex::new(self.broadcast(&self.alpha, "alpha")?).map_err(|e| UsageError(e.to_string()))
    }

    pub fn shift(&self) -> Result<Vec<f64>, UsageError> {
        self.broadcast(&self.x, "x")
    }

    /// The bi-fBm fields are kept only for the bifbm kind (and vice versa),
    /// so the recorded tree has no unused parameters.
    pub fn normalize(&mut self) {
        if self.kind == "bifbm" {
            self.hurst = None;
        } else {
            self.h0 = None;
            self.k0 = None;
        }
    }
}
