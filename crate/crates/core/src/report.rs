//! Itemised check results shared by the check suites.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub name: String,
    /// Property being verified, in words.
    pub anchor: String,
    pub status: Status,
    pub residual: f64,
    pub detail: String,
}

impl CheckRecord {
    pub fn new(
        name: impl Into<String>,
        anchor: impl Into<String>,
        passed: bool,
        residual: f64,
        detail: impl Into<String>,
    ) -> Self {
        Self {
            name: name.into(),
            anchor: anchor.into(),
            status: if passed { Status::Pass } else { Status::Fail },
            residual,
            detail: detail.into(),
        }
    }

    pub fn not_applicable(
        name: impl Into<String>,
        anchor: impl Into<String>,
        detail: impl Into<String>,
    ) -> Self {
        Self {
            name: name.into(),
            anchor: anchor.into(),
            status: Status::NotApplicable,
            residual: f64::NAN,
            detail: detail.into(),
        }
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

/// True when no record failed.
pub fn all_pass(records: &[CheckRecord]) -> bool {
    records.iter().all(|r| r.status != Status::Fail)
}
