//! Pass/fail bookkeeping and the summary.json layout.

use std::collections::BTreeMap;

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Relation {
    /// value < tolerance
    #[serde(rename = "<")]
    Below,
    /// value > tolerance
    #[serde(rename = ">")]
    Above,
    /// |value − target| ≤ tolerance
    #[serde(rename = "near")]
    Near,
    /// boolean outcome: value 1 passes, tolerance is 1
    #[serde(rename = "flag")]
    Flag,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub value: f64,
    pub tolerance: f64,
    pub relation: Relation,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    pub pass: bool,
}

impl Check {
    pub fn below(value: f64, tolerance: f64) -> Self {
        Check { value, tolerance, relation: Relation::Below, target: None, pass: value < tolerance }
    }

    pub fn above(value: f64, tolerance: f64) -> Self {
        Check { value, tolerance, relation: Relation::Above, target: None, pass: value > tolerance }
    }

    pub fn near(value: f64, target: f64, tolerance: f64) -> Self {
        Check {
            value,
            tolerance,
            relation: Relation::Near,
            target: Some(target),
            pass: (value - target).abs() <= tolerance,
        }
    }

    pub fn flag(ok: bool) -> Self {
        Check { value: if ok { 1.0 } else { 0.0 }, tolerance: 1.0, relation: Relation::Flag, target: None, pass: ok }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Stage {
    pub name: String,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Deterministic summary: ordered maps, no timings or timestamps.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub dim: usize,
    pub seed: u64,
    pub values: BTreeMap<String, f64>,
    pub checks: BTreeMap<String, Check>,
    /// labels with no pass/fail weight
    pub notes: BTreeMap<String, String>,
    pub stages: Vec<Stage>,
    pub pass: bool,
}

impl Summary {
    pub fn new(scenario: &str, dim: usize, seed: u64) -> Self {
        Summary { scenario: scenario.into(), dim, seed, pass: true, ..Default::default() }
    }

    pub fn value(&mut self, key: &str, v: f64) {
        self.values.insert(key.into(), v);
    }

    pub fn check(&mut self, key: &str, c: Check) {
        self.checks.insert(key.into(), c);
        self.refresh();
    }

    pub fn note(&mut self, key: &str, v: impl Into<String>) {
        self.notes.insert(key.into(), v.into());
    }

    pub fn stage(&mut self, name: &str, res: crate::Result<()>) {
        let (ok, error) = match res {
            Ok(()) => (true, None),
            Err(e) => (false, Some(e.to_string())),
        };
        self.stages.push(Stage { name: name.into(), ok, error });
        self.refresh();
    }

    fn refresh(&mut self) {
        self.pass = self.checks.values().all(|c| c.pass) && self.stages.iter().all(|s| s.ok);
    }

    pub fn failed_checks(&self) -> Vec<&str> {
        self.checks.iter().filter(|(_, c)| !c.pass).map(|(k, _)| k.as_str()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}
