//! Parameter sweeps over the skew `S`, the audience size and the inference
//! threshold, plus detection of regions where inference error hides skew.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correction::{inference_aware_audit_with, AuditError, AuditSettings, InferenceAwareAudit};
use crate::delivery_sim::{
    simulate_inferred_targeted, simulate_true_targeted, DeliveryCounts, DeliveryError, DeliveryParams,
    InferredDelivery, OthersTreatment,
};
use crate::demographics::{compose_audience, AudienceComposition, FdrMatrix};
use crate::skew_stats::{critical_value, ztest, ztest_directed, Alternative, AuditResult, StatsError, DEFAULT_ALPHA};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweepError {
    #[error("invalid sweep configuration: {0}")]
    InvalidConfig(String),
    #[error("at S = {s}: {source}")]
    AtGridPoint {
        s: f64,
        #[source]
        source: PointFailure,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PointFailure {
    #[error(transparent)]
    Delivery(#[from] DeliveryError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Audit(#[from] AuditError),
}

/// Evenly spaced skew values from `start` to `stop` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkewGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for SkewGrid {
    fn default() -> Self {
        Self { start: 0.01, stop: 1.99, step: 0.01 }
    }
}

impl SkewGrid {
    pub fn validate(&self) -> Result<(), SweepError> {
        let Self { start, stop, step } = *self;
        if !(step.is_finite() && step > 0.0) {
            return Err(SweepError::InvalidConfig(format!("grid step {step} must be positive")));
        }
        if !(start > 0.0 && start <= stop && stop < 2.0) {
            return Err(SweepError::InvalidConfig(format!(
                "grid [{start}, {stop}] must satisfy 0 < start <= stop < 2"
            )));
        }
        Ok(())
    }

    /// Grid values, snapped to 12 decimals so that e.g. `1.0` lands exactly.
    pub fn points(&self) -> Vec<f64> {
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| ((self.start + i as f64 * self.step) * 1e12).round() / 1e12).collect()
    }
}

/// Which side of `S = 1` is searched for missed skew.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SkewSide {
    /// `S < 1`, tested with the `D > 0` alternative.
    #[default]
    Below,
    /// `S > 1`, tested with the `D < 0` alternative.
    Above,
}

impl std::str::FromStr for SkewSide {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "below" => Ok(Self::Below),
            "above" => Ok(Self::Above),
            other => Err(format!("unknown skew side {other:?}")),
        }
    }
}

impl SkewSide {
    pub fn alternative(self) -> Alternative {
        match self {
            SkewSide::Below => Alternative::Greater,
            SkewSide::Above => Alternative::Less,
        }
    }

    fn contains(self, s: f64) -> bool {
        match self {
            SkewSide::Below => s < 1.0,
            SkewSide::Above => s > 1.0,
        }
    }

    /// Z oriented so that larger means stronger evidence on this side.
    fn oriented(self, z: f64) -> f64 {
        match self {
            SkewSide::Below => z,
            SkewSide::Above => -z,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub s_grid: SkewGrid,
    pub sizes: Vec<u64>,
    pub rate_r: f64,
    /// Error matrices keyed by inference-threshold label.
    pub fdrs: BTreeMap<String, FdrMatrix>,
    pub alpha: f64,
    pub others_treatment: OthersTreatment,
    pub side: SkewSide,
}

/// Default audience sizes of the region grid.
pub const REFERENCE_SIZES: [u64; 6] = [10_000, 30_000, 60_000, 90_000, 120_000, 150_000];
pub const REFERENCE_RATE: f64 = 0.065;

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            s_grid: SkewGrid::default(),
            sizes: REFERENCE_SIZES.to_vec(),
            rate_r: REFERENCE_RATE,
            fdrs: BTreeMap::from([("0.5".to_string(), FdrMatrix::reference_threshold_050())]),
            alpha: DEFAULT_ALPHA,
            others_treatment: OthersTreatment::Advantaged,
            side: SkewSide::Below,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), SweepError> {
        self.s_grid.validate()?;
        if self.sizes.is_empty() {
            return Err(SweepError::InvalidConfig("no audience sizes given".into()));
        }
        if let Some(bad) = self.sizes.iter().find(|&&u| u == 0 || u % 2 != 0) {
            return Err(SweepError::InvalidConfig(format!("audience size {bad} must be even and positive")));
        }
        if !(self.rate_r > 0.0 && self.rate_r <= 1.0) {
            return Err(SweepError::InvalidConfig(format!("rate R = {} is outside (0, 1]", self.rate_r)));
        }
        if self.fdrs.is_empty() {
            return Err(SweepError::InvalidConfig("no FDR matrices given".into()));
        }
        for (label, fdr) in &self.fdrs {
            fdr.validate().map_err(|e| SweepError::InvalidConfig(format!("FDR matrix {label:?}: {e}")))?;
        }
        critical_value(self.alpha).map_err(|e| SweepError::InvalidConfig(e.to_string()))?;
        Ok(())
    }

    pub fn z_critical(&self) -> Result<f64, SweepError> {
        critical_value(self.alpha).map_err(|e| SweepError::InvalidConfig(e.to_string()))
    }

    fn settings(&self) -> AuditSettings {
        AuditSettings {
            alpha: self.alpha,
            alternative: self.side.alternative(),
            others_treatment: self.others_treatment,
        }
    }
}

/// The three statistics at one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub s: f64,
    pub z_true: f64,
    pub z_inferred: f64,
    pub z_corrected: f64,
    pub sig_true: bool,
    pub sig_inferred: bool,
    pub sig_corrected: bool,
}

fn evaluate_point(
    config: &SweepConfig,
    size_u: u64,
    fdr: &FdrMatrix,
    comp: &AudienceComposition,
    s: f64,
) -> Result<SweepRow, PointFailure> {
    let params = DeliveryParams::new(config.rate_r, s, config.others_treatment)?;
    let alternative = config.side.alternative();
    let truth = simulate_true_targeted(size_u, &params)?;
    let [a1, b1, a2, b2] = truth.audited();
    let z_true = ztest_directed(a1, b1, a2, b2, config.alpha, alternative)?;
    let inferred = simulate_inferred_targeted(comp, &params)?.inferred;
    let [a1, b1, a2, b2] = inferred.audited();
    let z_inferred = ztest_directed(a1, b1, a2, b2, config.alpha, alternative)?;
    let z_corrected = inference_aware_audit_with(size_u, fdr, &inferred, &config.settings())?.result;
    Ok(SweepRow {
        s,
        z_true: z_true.z_stat,
        z_inferred: z_inferred.z_stat,
        z_corrected: z_corrected.z_stat,
        sig_true: z_true.significant,
        sig_inferred: z_inferred.significant,
        sig_corrected: z_corrected.significant,
    })
}

/// Evaluates every grid value of `S` for one audience size and error matrix.
pub fn sweep_s(config: &SweepConfig, size_u: u64, fdr: &FdrMatrix) -> Result<Vec<SweepRow>, SweepError> {
    config.s_grid.validate()?;
    let comp = compose_audience(size_u, fdr).map_err(|e| SweepError::InvalidConfig(e.to_string()))?;
    config
        .s_grid
        .points()
        .into_iter()
        .map(|s| evaluate_point(config, size_u, fdr, &comp, s).map_err(|source| SweepError::AtGridPoint { s, source }))
        .collect()
}

/// A contiguous band of skew values where the true-attribute audit detects
/// skew but the uncorrected inferred-attribute audit does not.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MissedSkewRegion {
    pub s_low: f64,
    pub s_high: f64,
    pub width: f64,
    /// The corrected audit is significant at every point of the region.
    pub corrected_recovers: bool,
    pub points: usize,
    /// Number of separate qualifying runs on the grid; only the longest is
    /// reported, so anything above 1 means the region was fragmented.
    pub runs: usize,
}

impl MissedSkewRegion {
    pub fn is_fragmented(&self) -> bool {
        self.runs > 1
    }
}

/// Longest run of `S < 1` grid points where skew is missed.
pub fn detect_missed_region(rows: &[SweepRow], z_critical: f64) -> Option<MissedSkewRegion> {
    detect_missed_region_on(rows, z_critical, SkewSide::Below)
}

/// `rows` must be sorted by `s` and carry statistics computed for `side`.
pub fn detect_missed_region_on(rows: &[SweepRow], z_critical: f64, side: SkewSide) -> Option<MissedSkewRegion> {
    let qualifies = |r: &SweepRow| {
        side.contains(r.s) && side.oriented(r.z_true) > z_critical && side.oriented(r.z_inferred) <= z_critical
    };
    let mut runs: Vec<&[SweepRow]> = Vec::new();
    let mut start = None;
    for (i, row) in rows.iter().enumerate() {
        match (qualifies(row), start) {
            (true, None) => start = Some(i),
            (false, Some(st)) => {
                runs.push(&rows[st..i]);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(st) = start {
        runs.push(&rows[st..]);
    }
    let count = runs.len();
    // first of the longest runs
    let best = runs.into_iter().rev().max_by_key(|run| run.len())?;
    let (s_low, s_high) = (best[0].s, best[best.len() - 1].s);
    Some(MissedSkewRegion {
        s_low,
        s_high,
        width: ((s_high - s_low) * 1e12).round() / 1e12,
        corrected_recovers: best.iter().all(|r| side.oriented(r.z_corrected) > z_critical),
        points: best.len(),
        runs: count,
    })
}

/// Result for one (audience size, threshold) cell of a grid sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub size_u: u64,
    pub threshold_label: String,
    pub region: Option<MissedSkewRegion>,
    /// Set when the cell could not be evaluated; other cells still run.
    pub error: Option<String>,
    #[serde(skip)]
    pub rows: Vec<SweepRow>,
}

/// Sweeps every (size, threshold) cell. Cells are evaluated in parallel and
/// returned ordered by size, then threshold label.
pub fn sweep_grid(config: &SweepConfig) -> Result<Vec<GridCell>, SweepError> {
    config.validate()?;
    let z_critical = config.z_critical()?;
    let jobs: Vec<(u64, &String, &FdrMatrix)> =
        config.sizes.iter().flat_map(|&u| config.fdrs.iter().map(move |(label, fdr)| (u, label, fdr))).collect();
    let cells = jobs
        .into_par_iter()
        .map(|(size_u, label, fdr)| match sweep_s(config, size_u, fdr) {
            Ok(rows) => GridCell {
                size_u,
                threshold_label: label.clone(),
                region: detect_missed_region_on(&rows, z_critical, config.side),
                error: None,
                rows,
            },
            Err(e) => GridCell {
                size_u,
                threshold_label: label.clone(),
                region: None,
                error: Some(e.to_string()),
                rows: Vec::new(),
            },
        })
        .collect();
    Ok(cells)
}

/// One worked example: the same campaign audited three ways.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThoughtExperiment {
    pub size_u: u64,
    pub params: DeliveryParams,
    pub fdr: FdrMatrix,
    pub composition: AudienceComposition,
    pub true_delivery: DeliveryCounts,
    pub inferred_delivery: InferredDelivery,
    pub audit_true: AuditResult,
    pub audit_inferred: AuditResult,
    pub audit_omniscient: AuditResult,
    pub practical: InferenceAwareAudit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThoughtExperiments {
    pub baseline: ThoughtExperiment,
    pub skewed: ThoughtExperiment,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error(transparent)]
    Point(#[from] PointFailure),
    #[error(transparent)]
    Audience(#[from] crate::demographics::DemographicsError),
}

pub fn thought_experiment(
    size_u: u64,
    params: DeliveryParams,
    fdr: FdrMatrix,
    alpha: f64,
) -> Result<ThoughtExperiment, ExperimentError> {
    let composition = compose_audience(size_u, &fdr)?;
    let true_delivery = simulate_true_targeted(size_u, &params).map_err(PointFailure::from)?;
    let inferred_delivery = simulate_inferred_targeted(&composition, &params).map_err(PointFailure::from)?;
    let test = |c: &DeliveryCounts| {
        let [a1, b1, a2, b2] = c.audited();
        ztest(a1, b1, a2, b2, alpha).map_err(PointFailure::from)
    };
    let settings = AuditSettings { alpha, others_treatment: params.others_treatment, ..AuditSettings::default() };
    let practical =
        inference_aware_audit_with(size_u, &fdr, &inferred_delivery.inferred, &settings).map_err(PointFailure::from)?;
    Ok(ThoughtExperiment {
        size_u,
        params,
        fdr,
        composition,
        true_delivery,
        inferred_delivery,
        audit_true: test(&true_delivery)?,
        audit_inferred: test(&inferred_delivery.inferred)?,
        audit_omniscient: test(&inferred_delivery.omniscient)?,
        practical,
    })
}

/// The no-skew baseline and the `S = 0.87` example, at `|U| = 30,000`,
/// `R = 0.065` and the threshold-0.5 reference error rates.
pub fn repro_thought_experiments() -> ThoughtExperiments {
    let fdr = FdrMatrix::reference_threshold_050();
    let run = |s: f64| {
        let params = DeliveryParams::with_rate_and_skew(REFERENCE_RATE, s).expect("built-in parameters are valid");
        thought_experiment(30_000, params, fdr, DEFAULT_ALPHA).expect("built-in parameters are valid")
    };
    ThoughtExperiments { baseline: run(1.0), skewed: run(0.87) }
}
