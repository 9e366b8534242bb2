//! Outcomes of numerical inequality checks.

use serde::Serialize;

/// Slack settings shared by all inequality checks. Every inequality checked
/// here is non-strict; slack only absorbs floating-point error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    /// Relative slack, scaled by the natural magnitude of each check.
    pub rel: f64,
    /// Absolute floor used when the scale is (near) zero.
    pub abs: f64,
    /// Additive slack for coefficient inequalities (`ρ_k <= ρ_1^k`, ...).
    pub coef: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rel: 1e-9,
            abs: 1e-12,
            coef: 1e-9,
        }
    }
}

impl Tolerances {
    pub fn with_rel(rel: f64) -> Self {
        Self {
            rel,
            ..Self::default()
        }
    }

    /// `max(rel * |scale|, abs)`. A negative `rel` turns the slack into a
    /// required room of `|rel| * |scale|` (no absolute floor), which makes
    /// tight inequalities fail on purpose.
    pub fn slack(&self, scale: f64) -> f64 {
        if self.rel < 0.0 {
            self.rel * scale.abs()
        } else {
            (self.rel * scale.abs()).max(self.abs)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

impl CheckStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::Skipped => "skipped",
        }
    }
}

/// `lhs <= rhs` with `margin = rhs - lhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub status: CheckStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckOutcome {
    pub fn leq(name: impl Into<String>, lhs: f64, rhs: f64, slack: f64) -> Self {
        let ok = lhs <= rhs + slack && lhs.is_finite() && !rhs.is_nan();
        Self {
            name: name.into(),
            lhs,
            rhs,
            margin: rhs - lhs,
            status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
            note: None,
        }
    }

    /// `|lhs - rhs| <= slack`, margin is the signed difference `rhs - lhs`.
    pub fn close(name: impl Into<String>, lhs: f64, rhs: f64, slack: f64) -> Self {
        let ok = (lhs - rhs).abs() <= slack;
        Self {
            name: name.into(),
            lhs,
            rhs,
            margin: rhs - lhs,
            status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
            note: None,
        }
    }

    pub fn skipped(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            lhs: f64::NAN,
            rhs: f64::NAN,
            margin: f64::NAN,
            status: CheckStatus::Skipped,
            note: Some(reason.into()),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }

    pub fn failed(&self) -> bool {
        self.status == CheckStatus::Fail
    }
}

pub fn any_failed<'a>(checks: impl IntoIterator<Item = &'a CheckOutcome>) -> bool {
    checks.into_iter().any(CheckOutcome::failed)
}

/// Formats a float with 17 significant digits (round-trip safe).
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// CSV rows `check_name,lhs,rhs,margin,status`.
pub fn checks_csv(checks: &[CheckOutcome]) -> String {
    let mut out = String::from("check_name,lhs,rhs,margin,status\n");
    for c in checks {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            c.name,
            fmt17(c.lhs),
            fmt17(c.rhs),
            fmt17(c.margin),
            c.status.as_str()
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leq_uses_slack() {
        assert!(CheckOutcome::leq("a", 1.0 + 1e-10, 1.0, 1e-9).passed());
        assert!(CheckOutcome::leq("a", 1.0 + 1e-8, 1.0, 1e-9).failed());
        assert!(CheckOutcome::leq("a", f64::NAN, 1.0, 1e-9).failed());
    }

    #[test]
    fn negative_rel_demands_room() {
        let t = Tolerances::with_rel(-1e-6);
        assert!(CheckOutcome::leq("a", 1.0, 1.0, t.slack(1.0)).failed());
        assert!(CheckOutcome::leq("a", 1.0, 1.1, t.slack(1.0)).passed());
    }

    #[test]
    fn fmt17_round_trips() {
        for x in [0.1, 1.0 / 3.0, 5.5, -2.0e-300, 123456789.123456789] {
            assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt17(f64::INFINITY), "inf");
    }
}
