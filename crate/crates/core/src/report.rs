//! Machine-readable check records shared by all reports.

use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub worst_point: Option<Vec<f64>>,
    pub worst_value: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, worst_value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            pass,
            worst_point: None,
            worst_value: finite_or_max(worst_value),
            tolerance,
        }
    }

    pub fn at(mut self, p: Vec<f64>) -> Self {
        if !p.is_empty() {
            self.worst_point = Some(p);
        }
        self
    }
}

/// JSON has no infinities; clamp them to the largest finite value.
pub fn finite_or_max(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(f64::MIN, f64::MAX)
    }
}

pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass)
}
