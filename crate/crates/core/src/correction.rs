//! Inference-aware correction of aggregate delivery counts.
//!
//! Given only what a black-box platform reports (recipients of each ad by
//! *inferred* group) and the known inference error rates, the pipeline
//!
//! 1. recovers the delivery rate `R` and skew `S` in closed form
//!    ([`solve_rs`]),
//! 2. propagates the targeted-audience error rates into each ad's delivery
//!    audience ([`propagate_fdr`]),
//! 3. re-attributes the reported counts to true groups ([`correct_counts`]),
//! 4. runs the usual Z-test on the corrected counts.
//!
//! [`omniscient_correct`] computes the same corrected counts directly from
//! ground truth and is used to validate the practical route.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::delivery_sim::{
    simulate_inferred_targeted, Basis, DeliveryCounts, DeliveryError, DeliveryParams, OthersTreatment,
};
use crate::demographics::{compose_audience, AudienceComposition, DemographicsError, FdrMatrix};
use crate::skew_stats::{ztest_directed, Alternative, AuditResult, StatsError, DEFAULT_ALPHA};

/// Relative tolerance for the residuals of the two rate/skew equations.
pub const RESIDUAL_TOLERANCE: f64 = 1e-9;
/// Determinants below this multiple of `|U|²` are treated as singular.
pub const SINGULAR_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorrectionError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("rate/skew system is singular (determinant {determinant:e}); FDR_*,a + FDR_a,b is too close to 1")]
    Singular { determinant: f64 },
    #[error("recovered R = {rate_r}, S = {skew_s} fall outside the valid ranges R in (0, 1], S in (0, 2)")]
    Inconsistent { rate_r: f64, skew_s: f64 },
    #[error("recovered parameters leave residual {residual:e} in equation {equation}")]
    Residual { equation: u8, residual: f64 },
    #[error("ad {ad} has zero recipients inferred as {group}; its delivery error rate is undefined")]
    UndefinedRate { ad: u8, group: char },
    #[error("propagated rate {name} = {value} is outside [0, 1]")]
    RateOutOfRange { name: &'static str, value: f64 },
    #[error("corrected count {name} = {value} is negative; FDRs are inconsistent with the observed counts")]
    NegativeCount { name: &'static str, value: f64 },
    #[error(transparent)]
    Demographics(#[from] DemographicsError),
    #[error(transparent)]
    Delivery(#[from] DeliveryError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Closed-form solution of
/// `M·R·S + N·R − X = 0` and `P·R·S + Q·R − Y = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolvedParams {
    pub rate_r: f64,
    pub skew_s: f64,
    pub m: f64,
    pub n: f64,
    pub x: f64,
    pub p: f64,
    pub q: f64,
    pub y: f64,
    pub others_treatment: OthersTreatment,
}

impl SolvedParams {
    /// Relative residuals of the two equations.
    pub fn residuals(&self) -> (f64, f64) {
        let rel = |lhs: [f64; 2], rhs: f64| {
            let scale = lhs[0].abs().max(lhs[1].abs()).max(rhs.abs()).max(f64::MIN_POSITIVE);
            (lhs[0] + lhs[1] - rhs) / scale
        };
        let rs = self.rate_r * self.skew_s;
        (rel([self.m * rs, self.n * self.rate_r], self.x), rel([self.p * rs, self.q * self.rate_r], self.y))
    }

    pub fn delivery_params(&self) -> Result<DeliveryParams, DeliveryError> {
        DeliveryParams::new(self.rate_r, self.skew_s, self.others_treatment)
    }
}

/// Recovers `(R, S)` from the ad-1 counts by inferred group, assuming Others
/// are delivered like group B.
pub fn solve_rs(n1_a_i: f64, n1_b_i: f64, size_u: u64, fdr: &FdrMatrix) -> Result<SolvedParams, CorrectionError> {
    solve_rs_with_treatment(n1_a_i, n1_b_i, size_u, fdr, OthersTreatment::Advantaged)
}

/// Like [`solve_rs`], for either treatment of Others. Under the
/// disadvantaged treatment the Others of each inferred half move to the
/// `R·S` side of the equations.
pub fn solve_rs_with_treatment(
    n1_a_i: f64,
    n1_b_i: f64,
    size_u: u64,
    fdr: &FdrMatrix,
    others_treatment: OthersTreatment,
) -> Result<SolvedParams, CorrectionError> {
    if size_u == 0 {
        return Err(CorrectionError::InvalidInput("audience size must be positive".into()));
    }
    fdr.validate()?;
    for (name, v) in [("n1_a_i", n1_a_i), ("n1_b_i", n1_b_i)] {
        if !v.is_finite() || v <= 0.0 {
            return Err(CorrectionError::InvalidInput(format!("{name} = {v} must be positive")));
        }
    }
    // Shares of each inferred half that receive the R·(2−S) rate (p) or the
    // R·S rate (q) on ad 1.
    let (p_share, q_share) = match others_treatment {
        OthersTreatment::Advantaged => (fdr.star_a(), fdr.fdr_a_given_b),
        OthersTreatment::Disadvantaged => (fdr.fdr_b_given_a, fdr.star_b()),
    };
    let u = size_u as f64;
    let m = u / 2.0 - u * p_share;
    let n = u * p_share;
    let x = n1_a_i;
    let p = u * q_share - u / 2.0;
    let q = u - u * q_share;
    let y = n1_b_i;

    let rate_den = n * p - m * q;
    let skew_den = m * y - x * p;
    let floor = SINGULAR_TOLERANCE * u * u;
    if rate_den.abs() < floor {
        return Err(CorrectionError::Singular { determinant: rate_den });
    }
    if skew_den.abs() < floor {
        return Err(CorrectionError::Singular { determinant: skew_den });
    }
    let rate_r = (x * p - m * y) / rate_den;
    let skew_s = (x * q - n * y) / skew_den;
    if !(rate_r.is_finite() && rate_r > 0.0 && rate_r <= 1.0 && skew_s.is_finite() && skew_s > 0.0 && skew_s < 2.0) {
        return Err(CorrectionError::Inconsistent { rate_r, skew_s });
    }
    let solved = SolvedParams { rate_r, skew_s, m, n, x, p, q, y, others_treatment };
    let (r1, r2) = solved.residuals();
    if r1.abs() > RESIDUAL_TOLERANCE {
        return Err(CorrectionError::Residual { equation: 1, residual: r1 });
    }
    if r2.abs() > RESIDUAL_TOLERANCE {
        return Err(CorrectionError::Residual { equation: 2, residual: r2 });
    }
    Ok(solved)
}

/// Error rates within the delivery audience of one ad.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeliveryFdr {
    pub fdr_b_given_a: f64,
    pub fdr_o_given_a: f64,
    pub fdr_a_given_b: f64,
    pub fdr_o_given_b: f64,
}

impl DeliveryFdr {
    pub fn zero() -> Self {
        Self { fdr_b_given_a: 0.0, fdr_o_given_a: 0.0, fdr_a_given_b: 0.0, fdr_o_given_b: 0.0 }
    }

    pub fn star_a(&self) -> f64 {
        self.fdr_b_given_a + self.fdr_o_given_a
    }

    pub fn star_b(&self) -> f64 {
        self.fdr_a_given_b + self.fdr_o_given_b
    }

    fn validate(&self) -> Result<(), CorrectionError> {
        for (name, value) in [
            ("fdr_b_given_a", self.fdr_b_given_a),
            ("fdr_o_given_a", self.fdr_o_given_a),
            ("fdr_a_given_b", self.fdr_a_given_b),
            ("fdr_o_given_b", self.fdr_o_given_b),
            ("fdr_star_a", self.star_a()),
            ("fdr_star_b", self.star_b()),
        ] {
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return Err(CorrectionError::RateOutOfRange { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagatedFdr {
    pub ad1: DeliveryFdr,
    pub ad2: DeliveryFdr,
}

impl PropagatedFdr {
    pub fn zero() -> Self {
        Self { ad1: DeliveryFdr::zero(), ad2: DeliveryFdr::zero() }
    }
}

fn propagate_one(
    comp: &AudienceComposition,
    rate_r: f64,
    (ma, mb, mo): (f64, f64, f64),
    n_a: f64,
    n_b: f64,
    ad: u8,
) -> Result<DeliveryFdr, CorrectionError> {
    if !(n_a.is_finite() && n_a > 0.0) {
        return Err(CorrectionError::UndefinedRate { ad, group: 'A' });
    }
    if !(n_b.is_finite() && n_b > 0.0) {
        return Err(CorrectionError::UndefinedRate { ad, group: 'B' });
    }
    let rates = DeliveryFdr {
        fdr_b_given_a: comp.inferred_a.b * rate_r * mb / n_a,
        fdr_o_given_a: comp.inferred_a.o * rate_r * mo / n_a,
        fdr_a_given_b: comp.inferred_b.a * rate_r * ma / n_b,
        fdr_o_given_b: comp.inferred_b.o * rate_r * mo / n_b,
    };
    rates.validate()?;
    Ok(rates)
}

/// Expected error rates among the recipients of each ad. Ad 2 is unskewed,
/// so its rates use multiplier 1 for every group.
pub fn propagate_fdr(
    comp: &AudienceComposition,
    solved: &SolvedParams,
    inferred_counts: &DeliveryCounts,
) -> Result<PropagatedFdr, CorrectionError> {
    let params = solved.delivery_params()?;
    let ad1 =
        propagate_one(comp, params.rate_r, params.ad1_multipliers(), inferred_counts.n1_a, inferred_counts.n1_b, 1)?;
    let ad2 = propagate_one(comp, params.rate_r, (1.0, 1.0, 1.0), inferred_counts.n2_a, inferred_counts.n2_b, 2)?;
    Ok(PropagatedFdr { ad1, ad2 })
}

/// Re-attributes inferred-group counts to true groups. The `o` entries hold
/// the expected number of true Others among each ad's recipients.
pub fn correct_counts(inferred: &DeliveryCounts, prop: &PropagatedFdr) -> Result<DeliveryCounts, CorrectionError> {
    let fix = |n_a: f64, n_b: f64, r: &DeliveryFdr| {
        (
            n_a * (1.0 - r.star_a()) + n_b * r.fdr_a_given_b,
            n_a * r.fdr_b_given_a + n_b * (1.0 - r.star_b()),
            n_a * r.fdr_o_given_a + n_b * r.fdr_o_given_b,
        )
    };
    let (n1_a, n1_b, n1_o) = fix(inferred.n1_a, inferred.n1_b, &prop.ad1);
    let (n2_a, n2_b, n2_o) = fix(inferred.n2_a, inferred.n2_b, &prop.ad2);
    let corrected = DeliveryCounts { basis: Basis::Corrected, n1_a, n1_b, n1_o, n2_a, n2_b, n2_o };
    for (name, value) in
        [("n1_a", n1_a), ("n1_b", n1_b), ("n1_o", n1_o), ("n2_a", n2_a), ("n2_b", n2_b), ("n2_o", n2_o)]
    {
        if !value.is_finite() || value < 0.0 {
            return Err(CorrectionError::NegativeCount { name, value });
        }
    }
    Ok(corrected)
}

/// Corrected counts computed from ground truth: expected deliveries
/// regrouped by true label across both inferred halves.
pub fn omniscient_correct(
    comp: &AudienceComposition,
    params: &DeliveryParams,
) -> Result<DeliveryCounts, CorrectionError> {
    Ok(simulate_inferred_targeted(comp, params)?.omniscient)
}

/// Knobs for [`inference_aware_audit_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditSettings {
    pub alpha: f64,
    pub alternative: Alternative,
    pub others_treatment: OthersTreatment,
}

impl Default for AuditSettings {
    fn default() -> Self {
        Self { alpha: DEFAULT_ALPHA, alternative: Alternative::Greater, others_treatment: OthersTreatment::Advantaged }
    }
}

impl AuditSettings {
    pub fn with_alpha(alpha: f64) -> Self {
        Self { alpha, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    ComposeAudience,
    SolveRs,
    PropagateFdr,
    CorrectCounts,
    ZTest,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::ComposeAudience => "compose_audience",
            Stage::SolveRs => "solve_rs",
            Stage::PropagateFdr => "propagate_fdr",
            Stage::CorrectCounts => "correct_counts",
            Stage::ZTest => "ztest",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{stage}: {source}")]
pub struct AuditError {
    pub stage: Stage,
    #[source]
    pub source: CorrectionError,
}

impl AuditError {
    fn at(stage: Stage) -> impl FnOnce(CorrectionError) -> Self {
        move |source| Self { stage, source }
    }
}

/// Every intermediate of the corrected audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceAwareAudit {
    pub composition: AudienceComposition,
    pub solved: SolvedParams,
    pub propagated: PropagatedFdr,
    pub corrected: DeliveryCounts,
    pub result: AuditResult,
}

/// Corrected audit (`Z_f`) from inferred-group counts at level `alpha`.
pub fn inference_aware_audit(
    size_u: u64,
    fdr: &FdrMatrix,
    inferred: &DeliveryCounts,
    alpha: f64,
) -> Result<InferenceAwareAudit, AuditError> {
    inference_aware_audit_with(size_u, fdr, inferred, &AuditSettings::with_alpha(alpha))
}

pub fn inference_aware_audit_with(
    size_u: u64,
    fdr: &FdrMatrix,
    inferred: &DeliveryCounts,
    settings: &AuditSettings,
) -> Result<InferenceAwareAudit, AuditError> {
    let composition =
        compose_audience(size_u, fdr).map_err(CorrectionError::from).map_err(AuditError::at(Stage::ComposeAudience))?;
    let solved = solve_rs_with_treatment(inferred.n1_a, inferred.n1_b, size_u, fdr, settings.others_treatment)
        .map_err(AuditError::at(Stage::SolveRs))?;
    let propagated = propagate_fdr(&composition, &solved, inferred).map_err(AuditError::at(Stage::PropagateFdr))?;
    let corrected = correct_counts(inferred, &propagated).map_err(AuditError::at(Stage::CorrectCounts))?;
    let [a1, b1, a2, b2] = corrected.audited();
    let result = ztest_directed(a1, b1, a2, b2, settings.alpha, settings.alternative)
        .map_err(CorrectionError::from)
        .map_err(AuditError::at(Stage::ZTest))?;
    Ok(InferenceAwareAudit { composition, solved, propagated, corrected, result })
}
