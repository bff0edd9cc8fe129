//! Crate-level error with a stable exit code and machine-readable form for
//! each failure kind.

use serde::Serialize;
use thiserror::Error;

use crate::cli_io::InputError;
use crate::correction::{AuditError, CorrectionError};
use crate::delivery_sim::DeliveryError;
use crate::demographics::DemographicsError;
use crate::skew_stats::StatsError;
use crate::sweep::{ExperimentError, PointFailure, SweepError};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Demographics(#[from] DemographicsError),
    #[error(transparent)]
    Delivery(#[from] DeliveryError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Correction(#[from] CorrectionError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error(transparent)]
    Input(#[from] InputError),
}

impl From<ExperimentError> for Error {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Point(p) => p.into(),
            ExperimentError::Audience(d) => d.into(),
        }
    }
}

impl From<PointFailure> for Error {
    fn from(e: PointFailure) -> Self {
        match e {
            PointFailure::Delivery(d) => d.into(),
            PointFailure::Stats(s) => s.into(),
            PointFailure::Audit(a) => a.into(),
        }
    }
}

/// Serialized to stderr by the binary on failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ErrorObject {
    pub kind: &'static str,
    pub code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<u64>,
    pub message: String,
}

fn demographics_kind(e: &DemographicsError) -> (&'static str, i32) {
    match e {
        DemographicsError::InvalidRecord(_) => ("invalid_record", 10),
        DemographicsError::InvalidThreshold(_) => ("invalid_threshold", 11),
        DemographicsError::EmptyInferredGroup(..) => ("empty_inferred_group", 12),
        DemographicsError::InvalidFdr(_) => ("invalid_fdr", 13),
        DemographicsError::InvalidAudienceSize(_) => ("invalid_audience_size", 14),
    }
}

fn delivery_kind(e: &DeliveryError) -> (&'static str, i32) {
    match e {
        DeliveryError::InvalidParams(_) => ("invalid_delivery_params", 20),
        DeliveryError::Audience(d) => demographics_kind(d),
    }
}

fn stats_kind(e: &StatsError) -> (&'static str, i32) {
    match e {
        StatsError::InvalidAlpha(_) => ("invalid_alpha", 30),
        StatsError::InvalidCount { .. } => ("invalid_count", 31),
        StatsError::UndefinedProportion(_) => ("undefined_proportion", 32),
        StatsError::DegenerateTest(_) => ("degenerate_test", 33),
    }
}

fn correction_kind(e: &CorrectionError) -> (&'static str, i32) {
    match e {
        CorrectionError::InvalidInput(_) => ("invalid_correction_input", 40),
        CorrectionError::Singular { .. } => ("singular_system", 41),
        CorrectionError::Inconsistent { .. } => ("inconsistent_inputs", 42),
        CorrectionError::Residual { .. } => ("residual_check_failed", 43),
        CorrectionError::UndefinedRate { .. } => ("undefined_rate", 44),
        CorrectionError::RateOutOfRange { .. } => ("rate_out_of_range", 45),
        CorrectionError::NegativeCount { .. } => ("invalid_correction", 46),
        CorrectionError::Demographics(d) => demographics_kind(d),
        CorrectionError::Delivery(d) => delivery_kind(d),
        CorrectionError::Stats(s) => stats_kind(s),
    }
}

impl Error {
    fn kind_and_code(&self) -> (&'static str, i32) {
        match self {
            Error::Demographics(e) => demographics_kind(e),
            Error::Delivery(e) => delivery_kind(e),
            Error::Stats(e) => stats_kind(e),
            Error::Correction(e) => correction_kind(e),
            Error::Audit(e) => correction_kind(&e.source),
            Error::Sweep(SweepError::InvalidConfig(_)) => ("invalid_sweep_config", 50),
            Error::Sweep(SweepError::AtGridPoint { .. }) => ("sweep_point_failed", 51),
            Error::Input(e) => match e {
                InputError::Io { .. } => ("io", 60),
                InputError::Csv { .. } => ("csv_parse", 61),
                InputError::RecordAt { source, .. } => demographics_kind(source),
                InputError::Json { .. } => ("json_parse", 62),
                InputError::InvalidArgument(_) => ("invalid_argument", 63),
            },
        }
    }

    /// Process exit status for this error; never 0.
    pub fn exit_code(&self) -> i32 {
        self.kind_and_code().1
    }

    pub fn to_object(&self) -> ErrorObject {
        let (kind, code) = self.kind_and_code();
        let stage = match self {
            Error::Audit(e) => Some(e.stage.to_string()),
            _ => None,
        };
        let line = match self {
            Error::Input(InputError::Csv { line, .. }) | Error::Input(InputError::RecordAt { line, .. }) => Some(*line),
            _ => None,
        };
        ErrorObject { kind, code, stage, line, message: self.to_string() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correction::Stage;
    use crate::demographics::GroupLabel;

    #[test]
    fn codes_are_distinct_per_kind() {
        let errors: Vec<Error> = vec![
            DemographicsError::InvalidRecord("x".into()).into(),
            DemographicsError::InvalidThreshold(2.0).into(),
            DemographicsError::EmptyInferredGroup(GroupLabel::GroupA, 0.5).into(),
            DemographicsError::InvalidFdr("x".into()).into(),
            DemographicsError::InvalidAudienceSize(3).into(),
            DeliveryError::InvalidParams("x".into()).into(),
            StatsError::InvalidAlpha(0.0).into(),
            StatsError::InvalidCount { name: "n1_a", value: -1.0 }.into(),
            StatsError::UndefinedProportion(1).into(),
            StatsError::DegenerateTest(0.1).into(),
            CorrectionError::InvalidInput("x".into()).into(),
            CorrectionError::Singular { determinant: 0.0 }.into(),
            CorrectionError::Inconsistent { rate_r: 2.0, skew_s: 3.0 }.into(),
            CorrectionError::Residual { equation: 1, residual: 1.0 }.into(),
            CorrectionError::UndefinedRate { ad: 1, group: 'A' }.into(),
            CorrectionError::RateOutOfRange { name: "x", value: 2.0 }.into(),
            CorrectionError::NegativeCount { name: "n1_a", value: -1.0 }.into(),
            SweepError::InvalidConfig("x".into()).into(),
            InputError::Io { path: "p".into(), message: "m".into() }.into(),
            InputError::Csv { line: 3, message: "m".into() }.into(),
            InputError::Json { path: "p".into(), message: "m".into() }.into(),
            InputError::InvalidArgument("x".into()).into(),
        ];
        let mut codes: Vec<i32> = errors.iter().map(Error::exit_code).collect();
        assert!(codes.iter().all(|&c| c != 0));
        codes.sort_unstable();
        let before = codes.len();
        codes.dedup();
        assert_eq!(codes.len(), before);
    }

    #[test]
    fn audit_errors_carry_stage() {
        let e: Error =
            AuditError { stage: Stage::SolveRs, source: CorrectionError::Singular { determinant: 0.0 } }.into();
        let obj = e.to_object();
        assert_eq!(obj.kind, "singular_system");
        assert_eq!(obj.stage.as_deref(), Some("solve_rs"));
    }
}
