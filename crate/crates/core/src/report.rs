//! Uniform pass/fail records emitted by the verifiers.

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// One numerical check: what was compared, at which parameters, how far apart
/// the two sides were and whether that is within tolerance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckRecord {
    pub check: String,
    pub params: Value,
    pub residual: f64,
    pub tol: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub detail: Value,
}

impl CheckRecord {
    /// Record that passes when `residual ≤ tol`.
    pub fn within(check: impl Into<String>, params: Value, residual: f64, tol: f64) -> Self {
        Self { check: check.into(), params, residual, tol, pass: residual <= tol, detail: Value::Null }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }
}
