//! Paired-ads skew measure and the two-proportion Z-test.
//!
//! For each ad the share of group A among its A+B recipients is computed;
//! the skew is `D = s2_a − s1_a`. Significance is judged by a pooled
//! two-proportion Z statistic against a one-sided standard-normal critical
//! value.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("significance level must lie in (0, 0.5], got {0}")]
    InvalidAlpha(f64),
    #[error("count {name} = {value} must be finite and non-negative")]
    InvalidCount { name: &'static str, value: f64 },
    #[error("ad {0} has no A or B recipients; its group share is undefined")]
    UndefinedProportion(u8),
    #[error("standard error is zero while the skew is {0}; the test is degenerate")]
    DegenerateTest(f64),
}

/// Direction of the one-sided alternative hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alternative {
    /// `D > 0`: ad 1 under-delivers to group A.
    #[default]
    Greater,
    /// `D < 0`: ad 1 over-delivers to group A.
    Less,
}

impl std::str::FromStr for Alternative {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "greater" => Ok(Self::Greater),
            "less" => Ok(Self::Less),
            other => Err(format!("unknown alternative {other:?} (expected greater or less)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditResult {
    pub s1_a: f64,
    pub s2_a: f64,
    pub skew_d: f64,
    pub pooled_share: f64,
    pub std_error: f64,
    pub z_stat: f64,
    pub alpha: f64,
    /// Upper-tail critical value; always non-negative.
    pub z_critical: f64,
    pub alternative: Alternative,
    pub significant: bool,
}

impl AuditResult {
    pub fn verdict(&self) -> &'static str {
        if self.significant {
            "significant"
        } else {
            "not significant"
        }
    }
}

impl std::fmt::Display for AuditResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let cmp = match (self.alternative, self.significant) {
            (Alternative::Greater, true) => ">",
            (Alternative::Greater, false) => "<=",
            (Alternative::Less, true) => "<",
            (Alternative::Less, false) => ">=",
        };
        let crit = match self.alternative {
            Alternative::Greater => self.z_critical,
            Alternative::Less => -self.z_critical,
        };
        write!(
            f,
            "{}: Z = {:.4} ({cmp} {:.4}), D = {:.4}, s1_a = {:.4}, s2_a = {:.4}, SE = {:.6}, alpha = {}",
            self.verdict(),
            self.z_stat,
            crit,
            self.skew_d,
            self.s1_a,
            self.s2_a,
            self.std_error,
            self.alpha
        )
    }
}

fn check_alpha(alpha: f64) -> Result<(), StatsError> {
    if alpha.is_finite() && alpha > 0.0 && alpha <= 0.5 {
        Ok(())
    } else {
        Err(StatsError::InvalidAlpha(alpha))
    }
}

/// Upper-tail standard normal quantile `z` with `P(Z > z) = alpha`.
pub fn critical_value(alpha: f64) -> Result<f64, StatsError> {
    check_alpha(alpha)?;
    if alpha == 0.5 {
        return Ok(0.0);
    }
    let normal = Normal::standard();
    Ok(normal.inverse_cdf(1.0 - alpha))
}

/// One-sided test of `D > 0` at level `alpha`.
pub fn ztest(n1_a: f64, n1_b: f64, n2_a: f64, n2_b: f64, alpha: f64) -> Result<AuditResult, StatsError> {
    ztest_directed(n1_a, n1_b, n2_a, n2_b, alpha, Alternative::Greater)
}

pub fn ztest_directed(
    n1_a: f64,
    n1_b: f64,
    n2_a: f64,
    n2_b: f64,
    alpha: f64,
    alternative: Alternative,
) -> Result<AuditResult, StatsError> {
    let z_critical = critical_value(alpha)?;
    for (name, value) in [("n1_a", n1_a), ("n1_b", n1_b), ("n2_a", n2_a), ("n2_b", n2_b)] {
        if !value.is_finite() || value < 0.0 {
            return Err(StatsError::InvalidCount { name, value });
        }
    }
    let n1 = n1_a + n1_b;
    let n2 = n2_a + n2_b;
    if n1 <= 0.0 {
        return Err(StatsError::UndefinedProportion(1));
    }
    if n2 <= 0.0 {
        return Err(StatsError::UndefinedProportion(2));
    }
    let s1_a = n1_a / n1;
    let s2_a = n2_a / n2;
    let skew_d = s2_a - s1_a;
    let pooled_share = (n1_a + n2_a) / (n1 + n2);
    let std_error = (pooled_share * (1.0 - pooled_share) * (1.0 / n1 + 1.0 / n2)).sqrt();
    let z_stat = if std_error > 0.0 {
        skew_d / std_error
    } else if skew_d == 0.0 {
        0.0
    } else {
        return Err(StatsError::DegenerateTest(skew_d));
    };
    let significant = match alternative {
        Alternative::Greater => z_stat > z_critical,
        Alternative::Less => z_stat < -z_critical,
    };
    Ok(AuditResult { s1_a, s2_a, skew_d, pooled_share, std_error, z_stat, alpha, z_critical, alternative, significant })
}
