//! Structured outcomes of the condition checkers.
//!
//! Every checker reports one verdict per condition it evaluated; a failing
//! verdict always carries a witness (offending exponent, span rank, or
//! magnitude) so results can be audited rather than trusted.

use serde::{Deserialize, Serialize};

/// Evidence attached to a failing (or informative passing) verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Witness {
    /// An offending exponent tuple.
    Exponent { exp: Vec<i64> },
    /// A pair of exponent tuples.
    ExponentPair { first: Vec<i64>, second: Vec<i64> },
    /// A span rank.
    Rank { rank: usize },
    /// An inner-product or coefficient magnitude.
    Magnitude { value: f64 },
    /// Free-form evidence.
    Note { text: String },
}

/// One condition checked, with outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionVerdict {
    pub id: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
}

/// Outcome of a checker: per-condition verdicts plus an overall summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    /// Which checker produced the report.
    pub subject: String,
    pub verdicts: Vec<ConditionVerdict>,
    /// Checker-level conclusion, e.g. "not-implementable" or "inconclusive".
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overall: Option<String>,
}

impl DiagnosticReport {
    pub fn new(subject: impl Into<String>) -> Self {
        Self {
            subject: subject.into(),
            verdicts: Vec::new(),
            overall: None,
        }
    }

    pub fn pass(&mut self, id: impl Into<String>) {
        self.verdicts.push(ConditionVerdict {
            id: id.into(),
            passed: true,
            witness: None,
        });
    }

    pub fn pass_with(&mut self, id: impl Into<String>, witness: Witness) {
        self.verdicts.push(ConditionVerdict {
            id: id.into(),
            passed: true,
            witness: Some(witness),
        });
    }

    /// Failing verdicts always carry a witness.
    pub fn fail(&mut self, id: impl Into<String>, witness: Witness) {
        self.verdicts.push(ConditionVerdict {
            id: id.into(),
            passed: false,
            witness: Some(witness),
        });
    }

    pub fn all_passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn verdict(&self, id: &str) -> Option<&ConditionVerdict> {
        self.verdicts.iter().find(|v| v.id == id)
    }

    pub fn passed(&self, id: &str) -> bool {
        self.verdict(id).map_or(false, |v| v.passed)
    }
}
