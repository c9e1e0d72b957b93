use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    Fail,
    Uncertain,
}

/// One named check with its numeric evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// The model or optimality condition the check is evidence for.
    pub condition: String,
    pub verdict: Verdict,
    /// Worst residual or deciding value.
    #[serde(with = "crate::serde_real")]
    pub residual: f64,
    /// Location of the worst case, when meaningful.
    #[serde(with = "crate::serde_real::vec")]
    pub location: Vec<f64>,
    pub grid: String,
    pub note: String,
}

impl Check {
    pub fn new(name: &str, condition: &str, verdict: Verdict, residual: f64) -> Self {
        Self {
            name: name.to_string(),
            condition: condition.to_string(),
            verdict,
            residual,
            location: Vec::new(),
            grid: String::new(),
            note: String::new(),
        }
    }

    pub fn at(mut self, location: &[f64]) -> Self {
        self.location = location.to_vec();
        self
    }

    pub fn grid(mut self, grid: impl Into<String>) -> Self {
        self.grid = grid.into();
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }
}

/// A list of checks. Used both for model/cost condition reports and for
/// optimality verification reports.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub checks: Vec<Check>,
}

pub type ConditionReport = Report;
pub type VerificationReport = Report;

impl Report {
    pub fn push(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn extend(&mut self, other: Report) {
        self.checks.extend(other.checks);
    }

    pub fn any_fail(&self) -> bool {
        self.checks.iter().any(|c| c.verdict == Verdict::Fail)
    }

    pub fn any_uncertain(&self) -> bool {
        self.checks.iter().any(|c| c.verdict == Verdict::Uncertain)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.verdict == Verdict::Pass)
    }

    /// Overall verdict: any failure dominates, then any uncertainty.
    pub fn verdict(&self) -> Verdict {
        if self.any_fail() {
            Verdict::Fail
        } else if self.any_uncertain() {
            Verdict::Uncertain
        } else {
            Verdict::Pass
        }
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}
