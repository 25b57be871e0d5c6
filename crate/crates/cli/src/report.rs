//! JSON reports written by `check`.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

/// One measured check. `pass` holds exactly when `max_defect <= tolerance`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Record {
    pub name: String,
    /// The identity or criterion the check measures.
    pub anchor: String,
    pub max_defect: f64,
    pub tolerance: f64,
    pub samples: usize,
    pub pass: bool,
}

impl Record {
    pub fn new(name: &str, anchor: &str, max_defect: f64, tolerance: f64, samples: usize) -> Record {
        Record {
            name: name.to_string(),
            anchor: anchor.to_string(),
            max_defect,
            tolerance,
            samples,
            pass: max_defect <= tolerance,
        }
    }
}

/// A fiber sample outside the regular set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct OmegaSample {
    pub fiber_param: Vec<f64>,
    pub fiber_value: Vec<f64>,
    pub margin: f64,
    pub min_singular_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ConstructionReport {
    pub name: String,
    pub kind: String,
    pub pass: bool,
    /// Set when the construction could not be built or measured.
    pub error: Option<String>,
    pub outside_omega: Vec<OmegaSample>,
    pub records: Vec<Record>,
}

impl ConstructionReport {
    pub fn finish(mut self) -> ConstructionReport {
        self.pass = self.error.is_none() && self.outside_omega.is_empty() && self.records.iter().all(|r| r.pass);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Report {
    pub seed: u64,
    pub pass: bool,
    pub constructions: Vec<ConstructionReport>,
}

impl Report {
    pub fn new(seed: u64, constructions: Vec<ConstructionReport>) -> Report {
        Report {
            seed,
            pass: constructions.iter().all(|c| c.pass),
            constructions,
        }
    }
}
