//! Pass/fail reports produced by the verification routines.

use serde::{Deserialize, Serialize};

/// One named check inside a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub id: String,
    pub passed: bool,
    /// Largest violation magnitude seen (0 when nothing was violated). For
    /// checks that measure slack, this is the slack shortfall.
    pub worst_violation: f64,
    pub location: Option<String>,
    pub note: Option<String>,
}

impl Check {
    pub fn new(id: impl Into<String>, passed: bool, worst_violation: f64) -> Self {
        Check {
            id: id.into(),
            passed,
            worst_violation,
            location: None,
            note: None,
        }
    }

    /// A check that does not apply to the instance; it counts as passed.
    pub fn not_applicable(id: impl Into<String>, why: impl Into<String>) -> Self {
        Check::new(id, true, 0.0).note(format!("not applicable ({})", why.into()))
    }

    pub fn at(mut self, location: impl Into<String>) -> Self {
        self.location = Some(location.into());
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub suite: String,
    pub checks: Vec<Check>,
}

impl VerificationReport {
    pub fn new(suite: impl Into<String>) -> Self {
        VerificationReport {
            suite: suite.into(),
            checks: Vec::new(),
        }
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn extend(&mut self, other: VerificationReport) {
        self.checks.extend(other.checks);
    }

    /// True iff every check passed.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, id: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.id == id)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            suite: &'a str,
            passed: bool,
            checks: &'a [Check],
        }
        serde_json::to_string_pretty(&Out {
            suite: &self.suite,
            passed: self.passed(),
            checks: &self.checks,
        })
        .expect("report serialization cannot fail")
    }
}

impl std::fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "suite {}: {}",
            self.suite,
            if self.passed() { "PASS" } else { "FAIL" }
        )?;
        for c in &self.checks {
            write!(
                f,
                "  [{}] {} (worst {:e})",
                if c.passed { "ok" } else { "FAIL" },
                c.id,
                c.worst_violation
            )?;
            if let Some(loc) = &c.location {
                write!(f, " at {loc}")?;
            }
            if let Some(note) = &c.note {
                write!(f, " -- {note}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overall_pass_requires_every_check() {
        let mut r = VerificationReport::new("demo");
        assert!(r.passed());
        r.push(Check::new("a", true, 0.0));
        r.push(Check::not_applicable("b", "corner"));
        assert!(r.passed());
        r.push(Check::new("c", false, 0.3).at("u=1"));
        assert!(!r.passed());
        assert_eq!(r.failures().count(), 1);
        assert!(r.to_json().contains("\"passed\": false"));
    }
}
