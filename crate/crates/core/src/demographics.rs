//! Demographic groups, thresholded attribute inference, and the inference
//! error (false discovery rate) matrix.
//!
//! An auditor builds a targeted audience from *inferred* labels. The
//! [`FdrMatrix`] captures, for each inferred label, which fraction of the
//! people carrying it actually belong to another group. From it,
//! [`compose_audience`] derives the expected true make-up of an audience that
//! was built to be half inferred-A and half inferred-B.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on `prob_a + prob_b + prob_o == 1`.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DemographicsError {
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("threshold must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("no records were assigned inferred label {0} at threshold {1}")]
    EmptyInferredGroup(GroupLabel, f64),
    #[error("invalid FDR matrix: {0}")]
    InvalidFdr(String),
    #[error("audience size must be even and positive, got {0}")]
    InvalidAudienceSize(u64),
}

/// The audited pair of groups plus a residual category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GroupLabel {
    /// The disadvantaged group.
    #[serde(rename = "A")]
    GroupA,
    /// The advantaged group.
    #[serde(rename = "B")]
    GroupB,
    #[serde(rename = "O")]
    Other,
}

impl GroupLabel {
    pub const ALL: [GroupLabel; 3] = [GroupLabel::GroupA, GroupLabel::GroupB, GroupLabel::Other];

    pub fn code(self) -> &'static str {
        match self {
            GroupLabel::GroupA => "A",
            GroupLabel::GroupB => "B",
            GroupLabel::Other => "O",
        }
    }

    fn index(self) -> usize {
        match self {
            GroupLabel::GroupA => 0,
            GroupLabel::GroupB => 1,
            GroupLabel::Other => 2,
        }
    }
}

impl std::fmt::Display for GroupLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

impl std::str::FromStr for GroupLabel {
    type Err = DemographicsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "A" => Ok(GroupLabel::GroupA),
            "B" => Ok(GroupLabel::GroupB),
            "O" => Ok(GroupLabel::Other),
            other => {
                Err(DemographicsError::InvalidRecord(format!("unknown group label {other:?} (expected A, B or O)")))
            }
        }
    }
}

/// A person from a labeled reference sample: their true group together with
/// the inference method's per-group probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub true_group: GroupLabel,
    pub prob_a: f64,
    pub prob_b: f64,
    pub prob_o: f64,
}

impl LabeledRecord {
    pub fn new(true_group: GroupLabel, prob_a: f64, prob_b: f64, prob_o: f64) -> Result<Self, DemographicsError> {
        let record = Self { true_group, prob_a, prob_b, prob_o };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<(), DemographicsError> {
        for (name, p) in [("prob_a", self.prob_a), ("prob_b", self.prob_b), ("prob_o", self.prob_o)] {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(DemographicsError::InvalidRecord(format!("{name} = {p} is outside [0, 1]")));
            }
        }
        let sum = self.prob_a + self.prob_b + self.prob_o;
        if (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
            return Err(DemographicsError::InvalidRecord(format!("probabilities sum to {sum}, expected 1")));
        }
        Ok(())
    }

    fn probabilities(&self) -> [f64; 3] {
        [self.prob_a, self.prob_b, self.prob_o]
    }
}

fn check_threshold(threshold: f64) -> Result<(), DemographicsError> {
    if threshold.is_finite() && threshold > 0.0 && threshold <= 1.0 {
        Ok(())
    } else {
        Err(DemographicsError::InvalidThreshold(threshold))
    }
}

/// Assigns the most probable label when its probability reaches `threshold`
/// (inclusive). Ties resolve in the order A, B, Other. Returns `None` when
/// the record is too uncertain to be labeled.
pub fn assign_inferred_label(record: &LabeledRecord, threshold: f64) -> Result<Option<GroupLabel>, DemographicsError> {
    check_threshold(threshold)?;
    record.validate()?;
    let (label, p) = argmax_label(record);
    Ok((p >= threshold).then_some(label))
}

fn argmax_label(record: &LabeledRecord) -> (GroupLabel, f64) {
    let probs = record.probabilities();
    let mut best = (GroupLabel::GroupA, probs[0]);
    for label in [GroupLabel::GroupB, GroupLabel::Other] {
        let p = probs[label.index()];
        // strict: earlier labels win ties
        if p > best.1 {
            best = (label, p);
        }
    }
    best
}

/// Inference error rates of the targeted audience.
///
/// `fdr_x_given_y` is the fraction of people inferred as `y` whose true
/// group is `x`. The aggregates (`star_*`) are always computed from the
/// components, so they equal the component sums exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFdrMatrix")]
pub struct FdrMatrix {
    pub fdr_b_given_a: f64,
    pub fdr_o_given_a: f64,
    pub fdr_a_given_b: f64,
    pub fdr_o_given_b: f64,
    pub fdr_a_given_o: f64,
    pub fdr_b_given_o: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFdrMatrix {
    fdr_b_given_a: f64,
    fdr_o_given_a: f64,
    fdr_a_given_b: f64,
    fdr_o_given_b: f64,
    #[serde(default)]
    fdr_a_given_o: f64,
    #[serde(default)]
    fdr_b_given_o: f64,
}

impl TryFrom<RawFdrMatrix> for FdrMatrix {
    type Error = DemographicsError;

    fn try_from(raw: RawFdrMatrix) -> Result<Self, Self::Error> {
        FdrMatrix::new(
            raw.fdr_b_given_a,
            raw.fdr_o_given_a,
            raw.fdr_a_given_b,
            raw.fdr_o_given_b,
            raw.fdr_a_given_o,
            raw.fdr_b_given_o,
        )
    }
}

impl FdrMatrix {
    pub fn new(
        fdr_b_given_a: f64,
        fdr_o_given_a: f64,
        fdr_a_given_b: f64,
        fdr_o_given_b: f64,
        fdr_a_given_o: f64,
        fdr_b_given_o: f64,
    ) -> Result<Self, DemographicsError> {
        let m = Self { fdr_b_given_a, fdr_o_given_a, fdr_a_given_b, fdr_o_given_b, fdr_a_given_o, fdr_b_given_o };
        m.validate()?;
        Ok(m)
    }

    /// Matrix with only the four rates that feed the audit; the inferred-Other
    /// row is zero.
    pub fn from_audited_rates(
        fdr_b_given_a: f64,
        fdr_o_given_a: f64,
        fdr_a_given_b: f64,
        fdr_o_given_b: f64,
    ) -> Result<Self, DemographicsError> {
        Self::new(fdr_b_given_a, fdr_o_given_a, fdr_a_given_b, fdr_o_given_b, 0.0, 0.0)
    }

    /// No inference error at all.
    pub fn zero() -> Self {
        Self {
            fdr_b_given_a: 0.0,
            fdr_o_given_a: 0.0,
            fdr_a_given_b: 0.0,
            fdr_o_given_b: 0.0,
            fdr_a_given_o: 0.0,
            fdr_b_given_o: 0.0,
        }
    }

    /// Reference rates for a surname-geocoding classifier at threshold 0.5;
    /// the default matrix for the worked examples and the audience-size sweep.
    pub fn reference_threshold_050() -> Self {
        Self {
            fdr_b_given_a: 0.4727,
            fdr_o_given_a: 0.030,
            fdr_a_given_b: 0.144,
            fdr_o_given_b: 0.032,
            fdr_a_given_o: 0.0,
            fdr_b_given_o: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), DemographicsError> {
        let parts = [
            ("fdr_b_given_a", self.fdr_b_given_a),
            ("fdr_o_given_a", self.fdr_o_given_a),
            ("fdr_a_given_b", self.fdr_a_given_b),
            ("fdr_o_given_b", self.fdr_o_given_b),
            ("fdr_a_given_o", self.fdr_a_given_o),
            ("fdr_b_given_o", self.fdr_b_given_o),
        ];
        for (name, v) in parts {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(DemographicsError::InvalidFdr(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        for (name, v) in [("fdr_star_a", self.star_a()), ("fdr_star_b", self.star_b()), ("fdr_star_o", self.star_o())] {
            if v > 1.0 {
                return Err(DemographicsError::InvalidFdr(format!("{name} = {v} exceeds 1")));
            }
        }
        Ok(())
    }

    /// Share of inferred-A people who are not in group A.
    pub fn star_a(&self) -> f64 {
        self.fdr_b_given_a + self.fdr_o_given_a
    }

    /// Share of inferred-B people who are not in group B.
    pub fn star_b(&self) -> f64 {
        self.fdr_a_given_b + self.fdr_o_given_b
    }

    pub fn star_o(&self) -> f64 {
        self.fdr_a_given_o + self.fdr_b_given_o
    }

    pub fn is_zero(&self) -> bool {
        [
            self.fdr_b_given_a,
            self.fdr_o_given_a,
            self.fdr_a_given_b,
            self.fdr_o_given_b,
            self.fdr_a_given_o,
            self.fdr_b_given_o,
        ]
        .iter()
        .all(|&v| v == 0.0)
    }
}

/// Per-label tallies from thresholded inference over a labeled sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignedCounts {
    pub inferred_a: u64,
    pub inferred_b: u64,
    pub inferred_o: u64,
    /// Records whose top probability fell below the threshold.
    pub excluded: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdrEstimate {
    pub threshold: f64,
    pub matrix: FdrMatrix,
    pub counts: AssignedCounts,
}

/// Estimates the FDR matrix by thresholded inference over `records`.
///
/// Records below the threshold are dropped. If nobody is labeled Other the
/// inferred-Other row is reported as zero; an empty inferred-A or inferred-B
/// group is an error.
pub fn estimate_fdr(records: &[LabeledRecord], threshold: f64) -> Result<FdrEstimate, DemographicsError> {
    check_threshold(threshold)?;
    // confusion[true][inferred]
    let mut confusion = [[0u64; 3]; 3];
    let mut excluded = 0u64;
    for record in records {
        match assign_inferred_label(record, threshold)? {
            Some(label) => confusion[record.true_group.index()][label.index()] += 1,
            None => excluded += 1,
        }
    }
    let column = |y: usize| confusion.iter().map(|row| row[y]).sum::<u64>();
    let (total_a, total_b, total_o) = (column(0), column(1), column(2));
    if total_a == 0 {
        return Err(DemographicsError::EmptyInferredGroup(GroupLabel::GroupA, threshold));
    }
    if total_b == 0 {
        return Err(DemographicsError::EmptyInferredGroup(GroupLabel::GroupB, threshold));
    }
    let rate = |x: usize, y: usize, total: u64| {
        if total == 0 {
            0.0
        } else {
            confusion[x][y] as f64 / total as f64
        }
    };
    let matrix = FdrMatrix::new(
        rate(1, 0, total_a),
        rate(2, 0, total_a),
        rate(0, 1, total_b),
        rate(2, 1, total_b),
        rate(0, 2, total_o),
        rate(1, 2, total_o),
    )?;
    Ok(FdrEstimate {
        threshold,
        matrix,
        counts: AssignedCounts { inferred_a: total_a, inferred_b: total_b, inferred_o: total_o, excluded },
    })
}

/// Expected true-group counts within one inferred half of the audience.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueBreakdown {
    pub a: f64,
    pub b: f64,
    pub o: f64,
}

impl TrueBreakdown {
    pub fn total(&self) -> f64 {
        self.a + self.b + self.o
    }

    pub fn rounded(&self) -> Self {
        Self { a: self.a.round(), b: self.b.round(), o: self.o.round() }
    }
}

/// True make-up of an audience built as `|U|/2` inferred-A plus `|U|/2`
/// inferred-B. Counts are real-valued expectations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AudienceComposition {
    pub size_u: u64,
    pub inferred_a: TrueBreakdown,
    pub inferred_b: TrueBreakdown,
}

impl AudienceComposition {
    pub fn half(&self) -> f64 {
        self.size_u as f64 / 2.0
    }

    /// Composition of an audience targeted by true attributes.
    pub fn error_free(size_u: u64) -> Result<Self, DemographicsError> {
        compose_audience(size_u, &FdrMatrix::zero())
    }

    pub fn true_a(&self) -> f64 {
        self.inferred_a.a + self.inferred_b.a
    }

    pub fn true_b(&self) -> f64 {
        self.inferred_a.b + self.inferred_b.b
    }

    pub fn true_o(&self) -> f64 {
        self.inferred_a.o + self.inferred_b.o
    }

    pub fn total(&self) -> f64 {
        self.inferred_a.total() + self.inferred_b.total()
    }

    /// Display copy, rounded half away from zero.
    pub fn rounded(&self) -> Self {
        Self { size_u: self.size_u, inferred_a: self.inferred_a.rounded(), inferred_b: self.inferred_b.rounded() }
    }
}

pub fn check_audience_size(size_u: u64) -> Result<(), DemographicsError> {
    if size_u == 0 || !size_u.is_multiple_of(2) {
        Err(DemographicsError::InvalidAudienceSize(size_u))
    } else {
        Ok(())
    }
}

/// Expected true-group make-up of the targeted audience.
pub fn compose_audience(size_u: u64, fdr: &FdrMatrix) -> Result<AudienceComposition, DemographicsError> {
    check_audience_size(size_u)?;
    fdr.validate()?;
    let half = size_u as f64 / 2.0;
    Ok(AudienceComposition {
        size_u,
        inferred_a: TrueBreakdown {
            a: half * (1.0 - fdr.star_a()),
            b: half * fdr.fdr_b_given_a,
            o: half * fdr.fdr_o_given_a,
        },
        inferred_b: TrueBreakdown {
            a: half * fdr.fdr_a_given_b,
            b: half * (1.0 - fdr.star_b()),
            o: half * fdr.fdr_o_given_b,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn rec(g: GroupLabel, a: f64, b: f64, o: f64) -> LabeledRecord {
        LabeledRecord::new(g, a, b, o).unwrap()
    }

    #[test]
    fn dominant_label_above_threshold() {
        let r = rec(GroupLabel::GroupA, 0.9, 0.05, 0.05);
        assert_eq!(assign_inferred_label(&r, 0.5).unwrap(), Some(GroupLabel::GroupA));
    }

    #[test]
    fn no_label_when_nothing_reaches_threshold() {
        let r = rec(GroupLabel::GroupB, 0.45, 0.45, 0.10);
        assert_eq!(assign_inferred_label(&r, 0.5).unwrap(), None);
        let r = rec(GroupLabel::GroupA, 0.6, 0.3, 0.1);
        assert_eq!(assign_inferred_label(&r, 0.9).unwrap(), None);
    }

    #[test]
    fn threshold_is_inclusive_and_ties_prefer_a_then_b() {
        let r = rec(GroupLabel::GroupB, 0.5, 0.5, 0.0);
        assert_eq!(assign_inferred_label(&r, 0.5).unwrap(), Some(GroupLabel::GroupA));
        let r = rec(GroupLabel::GroupB, 0.0, 0.5, 0.5);
        assert_eq!(assign_inferred_label(&r, 0.5).unwrap(), Some(GroupLabel::GroupB));
        let r = rec(GroupLabel::Other, 0.1, 0.2, 0.7);
        assert_eq!(assign_inferred_label(&r, 0.7).unwrap(), Some(GroupLabel::Other));
    }

    #[test]
    fn malformed_records_and_thresholds_rejected() {
        assert!(LabeledRecord::new(GroupLabel::GroupA, 0.5, 0.2, 0.1).is_err());
        assert!(LabeledRecord::new(GroupLabel::GroupA, 1.2, -0.2, 0.0).is_err());
        let bad = LabeledRecord { true_group: GroupLabel::GroupA, prob_a: 0.5, prob_b: 0.2, prob_o: 0.1 };
        assert!(matches!(assign_inferred_label(&bad, 0.5), Err(DemographicsError::InvalidRecord(_))));
        let ok = rec(GroupLabel::GroupA, 1.0, 0.0, 0.0);
        assert!(matches!(assign_inferred_label(&ok, 0.0), Err(DemographicsError::InvalidThreshold(_))));
        assert!(matches!(assign_inferred_label(&ok, 1.01), Err(DemographicsError::InvalidThreshold(_))));
        assert_eq!(assign_inferred_label(&ok, 1.0).unwrap(), Some(GroupLabel::GroupA));
    }

    #[test]
    fn perfect_classifier_has_zero_fdr() {
        let records: Vec<_> = (0..30)
            .map(|i| match i % 3 {
                0 => rec(GroupLabel::GroupA, 1.0, 0.0, 0.0),
                1 => rec(GroupLabel::GroupB, 0.0, 1.0, 0.0),
                _ => rec(GroupLabel::Other, 0.0, 0.0, 1.0),
            })
            .collect();
        let est = estimate_fdr(&records, 0.5).unwrap();
        assert!(est.matrix.is_zero());
        assert_eq!(est.counts, AssignedCounts { inferred_a: 10, inferred_b: 10, inferred_o: 10, excluded: 0 });
    }

    #[test]
    fn estimate_counts_by_hand() {
        let records = vec![
            rec(GroupLabel::GroupA, 0.8, 0.1, 0.1),
            rec(GroupLabel::GroupB, 0.6, 0.3, 0.1),
            rec(GroupLabel::Other, 0.7, 0.2, 0.1),
            rec(GroupLabel::GroupA, 0.7, 0.3, 0.0),
            rec(GroupLabel::GroupB, 0.1, 0.9, 0.0),
            rec(GroupLabel::GroupA, 0.2, 0.7, 0.1),
            rec(GroupLabel::GroupB, 0.4, 0.4, 0.2),
        ];
        let est = estimate_fdr(&records, 0.5).unwrap();
        assert_abs_diff_eq!(est.matrix.fdr_b_given_a, 0.25);
        assert_abs_diff_eq!(est.matrix.fdr_o_given_a, 0.25);
        assert_abs_diff_eq!(est.matrix.fdr_a_given_b, 0.5);
        assert_abs_diff_eq!(est.matrix.fdr_o_given_b, 0.0);
        assert_eq!(est.counts.excluded, 1);
        assert_eq!(est.counts.inferred_o, 0);
        assert_eq!(est.matrix.star_a(), est.matrix.fdr_b_given_a + est.matrix.fdr_o_given_a);
    }

    #[test]
    fn empty_inferred_group_is_reported_per_label() {
        let only_a = vec![rec(GroupLabel::GroupA, 0.9, 0.1, 0.0)];
        assert_eq!(estimate_fdr(&only_a, 0.5), Err(DemographicsError::EmptyInferredGroup(GroupLabel::GroupB, 0.5)));
        let only_b = vec![rec(GroupLabel::GroupA, 0.1, 0.9, 0.0)];
        assert_eq!(estimate_fdr(&only_b, 0.5), Err(DemographicsError::EmptyInferredGroup(GroupLabel::GroupA, 0.5)));
    }

    #[test]
    fn compose_reference_audience() {
        let comp = compose_audience(30_000, &FdrMatrix::reference_threshold_050()).unwrap();
        let expect_a = [7_466.0, 7_090.0, 444.0];
        let expect_b = [2_156.0, 12_369.0, 476.0];
        for (got, want) in [comp.inferred_a.a, comp.inferred_a.b, comp.inferred_a.o].iter().zip(expect_a) {
            assert!((got - want).abs() <= 10.0, "{got} vs {want}");
        }
        for (got, want) in [comp.inferred_b.a, comp.inferred_b.b, comp.inferred_b.o].iter().zip(expect_b) {
            assert!((got - want).abs() <= 10.0, "{got} vs {want}");
        }
    }

    #[test]
    fn compose_zero_error_and_hand_product() {
        let comp = compose_audience(1_000, &FdrMatrix::zero()).unwrap();
        assert_eq!(comp.inferred_a, TrueBreakdown { a: 500.0, b: 0.0, o: 0.0 });
        assert_eq!(comp.inferred_b, TrueBreakdown { a: 0.0, b: 500.0, o: 0.0 });
        let fdr = FdrMatrix::from_audited_rates(0.2, 0.0, 0.0, 0.0).unwrap();
        let comp = compose_audience(1_000, &fdr).unwrap();
        assert_eq!(comp.inferred_a, TrueBreakdown { a: 400.0, b: 100.0, o: 0.0 });
    }

    #[test]
    fn compose_rejects_odd_or_zero_sizes() {
        let fdr = FdrMatrix::zero();
        assert_eq!(compose_audience(0, &fdr), Err(DemographicsError::InvalidAudienceSize(0)));
        assert_eq!(compose_audience(1_001, &fdr), Err(DemographicsError::InvalidAudienceSize(1_001)));
    }

    #[test]
    fn fdr_matrix_validation() {
        assert!(FdrMatrix::from_audited_rates(0.7, 0.4, 0.0, 0.0).is_err());
        assert!(FdrMatrix::from_audited_rates(-0.1, 0.0, 0.0, 0.0).is_err());
        assert!(FdrMatrix::from_audited_rates(f64::NAN, 0.0, 0.0, 0.0).is_err());
        let json = r#"{"fdr_b_given_a":0.9,"fdr_o_given_a":0.2,"fdr_a_given_b":0,"fdr_o_given_b":0}"#;
        assert!(serde_json::from_str::<FdrMatrix>(json).is_err());
        let json = r#"{"fdr_b_given_a":0.4727,"fdr_o_given_a":0.03,"fdr_a_given_b":0.144,"fdr_o_given_b":0.032}"#;
        assert_eq!(serde_json::from_str::<FdrMatrix>(json).unwrap(), FdrMatrix::reference_threshold_050());
    }

    fn arb_record() -> impl Strategy<Value = LabeledRecord> {
        (0usize..3, 0.0f64..1.0, 0.0f64..1.0).prop_map(|(g, u, v)| {
            let (lo, hi) = if u < v { (u, v) } else { (v, u) };
            LabeledRecord { true_group: GroupLabel::ALL[g], prob_a: lo, prob_b: hi - lo, prob_o: 1.0 - hi }
        })
    }

    fn arb_fdr() -> impl Strategy<Value = FdrMatrix> {
        (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0)
            .prop_map(|(a, b, c, d)| FdrMatrix::from_audited_rates(a, (1.0 - a) * b, c, (1.0 - c) * d).unwrap())
    }

    proptest! {
        #[test]
        fn estimate_is_permutation_invariant(
            mut records in proptest::collection::vec(arb_record(), 1..200),
            seed in any::<u64>(),
            threshold in 0.34f64..0.9,
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let first = estimate_fdr(&records, threshold);
            records.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(first, estimate_fdr(&records, threshold));
        }

        #[test]
        fn estimated_aggregates_equal_component_sums(
            records in proptest::collection::vec(arb_record(), 1..200),
        ) {
            if let Ok(est) = estimate_fdr(&records, 0.4) {
                let m = est.matrix;
                prop_assert_eq!(m.star_a(), m.fdr_b_given_a + m.fdr_o_given_a);
                prop_assert_eq!(m.star_b(), m.fdr_a_given_b + m.fdr_o_given_b);
                prop_assert!(m.star_a() <= 1.0 && m.star_b() <= 1.0 && m.star_o() <= 1.0);
                let c = est.counts;
                prop_assert_eq!(c.inferred_a + c.inferred_b + c.inferred_o + c.excluded, records.len() as u64);
            }
        }

        #[test]
        fn composition_conserves_mass(half in 1u64..500_000, fdr in arb_fdr()) {
            let comp = compose_audience(half * 2, &fdr).unwrap();
            let u = (half * 2) as f64;
            prop_assert!((comp.total() - u).abs() <= 1e-9 * u);
            prop_assert!((comp.inferred_a.total() - u / 2.0).abs() <= 1e-9 * u);
            prop_assert!((comp.inferred_b.total() - u / 2.0).abs() <= 1e-9 * u);
            for v in [comp.inferred_a.a, comp.inferred_a.b, comp.inferred_a.o,
                      comp.inferred_b.a, comp.inferred_b.b, comp.inferred_b.o] {
                prop_assert!(v >= 0.0);
            }
        }
    }
}
