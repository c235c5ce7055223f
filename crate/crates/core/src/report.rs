//! Structured check outcomes shared by the analysis modules.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::signal::Signal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Pass,
    Fail,
    Inconclusive,
}

/// A battery input that exhibits a violation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    /// Index into the battery, absent for hand-built inputs.
    pub member: Option<usize>,
    /// Value of the violated quantity.
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(skip)]
    pub input: Option<Signal>,
}

impl Witness {
    pub fn new(member: usize, value: f64, input: &Signal) -> Self {
        Witness { member: Some(member), value, file: None, input: Some(input.clone()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerdictReport {
    pub check: String,
    pub outcome: Outcome,
    pub margins: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl VerdictReport {
    pub fn new(check: impl Into<String>, outcome: Outcome) -> Self {
        VerdictReport {
            check: check.into(),
            outcome,
            margins: BTreeMap::new(),
            witness: None,
            notes: Vec::new(),
            flags: Vec::new(),
        }
    }

    pub fn from_bool(check: impl Into<String>, ok: bool) -> Self {
        VerdictReport::new(check, if ok { Outcome::Pass } else { Outcome::Fail })
    }

    pub fn margin(mut self, key: &str, value: f64) -> Self {
        self.margins.insert(key.to_string(), value);
        self
    }

    pub fn note(mut self, text: impl Into<String>) -> Self {
        self.notes.push(text.into());
        self
    }

    pub fn flag(mut self, text: impl Into<String>) -> Self {
        self.flags.push(text.into());
        self
    }

    pub fn with_witness(mut self, w: Option<Witness>) -> Self {
        self.witness = w;
        self
    }

    pub fn passed(&self) -> bool {
        self.outcome == Outcome::Pass
    }
}
