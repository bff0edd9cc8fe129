//! Paired-ad delivery under a base rate `R` and a skew parameter `S`.
//!
//! Ad 1 reaches true group A members with probability `R·S` and true group B
//! members with probability `R·(2−S)`. Ad 2 is unskewed and reaches everyone
//! with probability `R`. Where true Others land is set by
//! [`OthersTreatment`].
//!
//! The deterministic routines return expected counts as reals. Rounding only
//! happens for display, via [`DeliveryCounts::rounded`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demographics::{check_audience_size, AudienceComposition, DemographicsError, TrueBreakdown};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeliveryError {
    #[error("invalid delivery parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Audience(#[from] DemographicsError),
}

/// Which skewed delivery rate the residual "Other" category receives on ad 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OthersTreatment {
    /// Others are delivered like group B, at `R·(2−S)`.
    #[default]
    Advantaged,
    /// Others are delivered like group A, at `R·S`.
    Disadvantaged,
}

impl std::str::FromStr for OthersTreatment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "advantaged" => Ok(Self::Advantaged),
            "disadvantaged" => Ok(Self::Disadvantaged),
            other => Err(format!("unknown others treatment {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeliveryParams {
    pub rate_r: f64,
    pub skew_s: f64,
    #[serde(default)]
    pub others_treatment: OthersTreatment,
}

impl DeliveryParams {
    pub fn new(rate_r: f64, skew_s: f64, others_treatment: OthersTreatment) -> Result<Self, DeliveryError> {
        let params = Self { rate_r, skew_s, others_treatment };
        params.validate()?;
        Ok(params)
    }

    /// Parameters with the default treatment of Others.
    pub fn with_rate_and_skew(rate_r: f64, skew_s: f64) -> Result<Self, DeliveryError> {
        Self::new(rate_r, skew_s, OthersTreatment::default())
    }

    /// `R` may be zero (nobody is reached); every group's delivery
    /// probability must stay within `[0, 1]`.
    pub fn validate(&self) -> Result<(), DeliveryError> {
        let (r, s) = (self.rate_r, self.skew_s);
        if !r.is_finite() || !(0.0..=1.0).contains(&r) {
            return Err(DeliveryError::InvalidParams(format!("rate R = {r} is outside [0, 1]")));
        }
        if !s.is_finite() || s <= 0.0 || s >= 2.0 {
            return Err(DeliveryError::InvalidParams(format!("skew S = {s} is outside (0, 2)")));
        }
        if r * s > 1.0 || r * (2.0 - s) > 1.0 {
            return Err(DeliveryError::InvalidParams(format!(
                "R·S = {} and R·(2−S) = {} must both be at most 1",
                r * s,
                r * (2.0 - s)
            )));
        }
        Ok(())
    }

    /// Ad 1 multipliers relative to `R` for (true A, true B, true Other).
    pub fn ad1_multipliers(&self) -> (f64, f64, f64) {
        let (a, b) = (self.skew_s, 2.0 - self.skew_s);
        let o = match self.others_treatment {
            OthersTreatment::Advantaged => b,
            OthersTreatment::Disadvantaged => a,
        };
        (a, b, o)
    }
}

/// Which labels the counts are grouped by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    /// Audience targeted and reported by true attributes.
    True,
    /// Counts reported by inferred label, as a platform would show them.
    Inferred,
    /// Counts attributed to true group A and B (omniscient or estimated).
    Corrected,
}

impl Basis {
    pub fn as_str(self) -> &'static str {
        match self {
            Basis::True => "true",
            Basis::Inferred => "inferred",
            Basis::Corrected => "corrected",
        }
    }
}

/// Recipients of each ad by group.
///
/// Under the inferred basis, Others are folded into whichever inferred half
/// they were targeted in, so `n*_o` is zero. Under the corrected basis,
/// `n*_o` holds delivered true Others, which are left out of the totals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeliveryCounts {
    pub basis: Basis,
    pub n1_a: f64,
    pub n1_b: f64,
    pub n1_o: f64,
    pub n2_a: f64,
    pub n2_b: f64,
    pub n2_o: f64,
}

impl DeliveryCounts {
    /// Counts as seen by the skew test; `o` entries are zero.
    pub fn from_audited(basis: Basis, n1_a: f64, n1_b: f64, n2_a: f64, n2_b: f64) -> Self {
        Self { basis, n1_a, n1_b, n1_o: 0.0, n2_a, n2_b, n2_o: 0.0 }
    }

    /// Audience of ad 1 that enters the skew test (A + B).
    pub fn n1(&self) -> f64 {
        self.n1_a + self.n1_b
    }

    pub fn n2(&self) -> f64 {
        self.n2_a + self.n2_b
    }

    pub fn audited(&self) -> [f64; 4] {
        [self.n1_a, self.n1_b, self.n2_a, self.n2_b]
    }

    pub fn all(&self) -> [f64; 6] {
        [self.n1_a, self.n1_b, self.n1_o, self.n2_a, self.n2_b, self.n2_o]
    }

    /// Display copy, rounded half away from zero.
    pub fn rounded(&self) -> Self {
        Self {
            basis: self.basis,
            n1_a: self.n1_a.round(),
            n1_b: self.n1_b.round(),
            n1_o: self.n1_o.round(),
            n2_a: self.n2_a.round(),
            n2_b: self.n2_b.round(),
            n2_o: self.n2_o.round(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            basis: self.basis,
            n1_a: self.n1_a * factor,
            n1_b: self.n1_b * factor,
            n1_o: self.n1_o * factor,
            n2_a: self.n2_a * factor,
            n2_b: self.n2_b * factor,
            n2_o: self.n2_o * factor,
        }
    }
}

/// Deliveries of an inferred-targeted campaign, seen two ways.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferredDelivery {
    /// What the platform reports, grouped by inferred label.
    pub inferred: DeliveryCounts,
    /// The same deliveries regrouped by true label (A and B only in totals).
    pub omniscient: DeliveryCounts,
    /// Expected recipients of ad 1 within each inferred half, by true group.
    pub ad1_by_half: [TrueBreakdown; 2],
    pub ad2_by_half: [TrueBreakdown; 2],
}

/// Expected counts when the audience is targeted with true attributes.
pub fn simulate_true_targeted(size_u: u64, params: &DeliveryParams) -> Result<DeliveryCounts, DeliveryError> {
    check_audience_size(size_u)?;
    params.validate()?;
    let half = size_u as f64 / 2.0;
    let r = params.rate_r;
    Ok(DeliveryCounts {
        basis: Basis::True,
        n1_a: half * r * params.skew_s,
        n1_b: half * r * (2.0 - params.skew_s),
        n1_o: 0.0,
        n2_a: half * r,
        n2_b: half * r,
        n2_o: 0.0,
    })
}

fn deliver(half: &TrueBreakdown, rate: f64, (ma, mb, mo): (f64, f64, f64)) -> TrueBreakdown {
    TrueBreakdown { a: half.a * rate * ma, b: half.b * rate * mb, o: half.o * rate * mo }
}

/// Expected counts when the audience was targeted by inferred attributes.
pub fn simulate_inferred_targeted(
    comp: &AudienceComposition,
    params: &DeliveryParams,
) -> Result<InferredDelivery, DeliveryError> {
    check_audience_size(comp.size_u)?;
    params.validate()?;
    let r = params.rate_r;
    let m1 = params.ad1_multipliers();
    let flat = (1.0, 1.0, 1.0);
    let ad1 = [deliver(&comp.inferred_a, r, m1), deliver(&comp.inferred_b, r, m1)];
    let ad2 = [deliver(&comp.inferred_a, r, flat), deliver(&comp.inferred_b, r, flat)];
    Ok(InferredDelivery {
        inferred: DeliveryCounts::from_audited(
            Basis::Inferred,
            ad1[0].total(),
            ad1[1].total(),
            ad2[0].total(),
            ad2[1].total(),
        ),
        omniscient: regroup_by_true_label(&ad1, &ad2),
        ad1_by_half: ad1,
        ad2_by_half: ad2,
    })
}

fn regroup_by_true_label(ad1: &[TrueBreakdown; 2], ad2: &[TrueBreakdown; 2]) -> DeliveryCounts {
    DeliveryCounts {
        basis: Basis::Corrected,
        n1_a: ad1[0].a + ad1[1].a,
        n1_b: ad1[0].b + ad1[1].b,
        n1_o: ad1[0].o + ad1[1].o,
        n2_a: ad2[0].a + ad2[1].a,
        n2_b: ad2[0].b + ad2[1].b,
        n2_o: ad2[0].o + ad2[1].o,
    }
}

/// Integer counts drawn by letting each individual see each ad independently.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StochasticDelivery {
    pub seed: u64,
    pub inferred: DeliveryCounts,
    pub omniscient: DeliveryCounts,
}

/// Draws one realisation of the campaign. Composition cells are rounded to
/// whole people first; the result depends only on the inputs and `seed`.
pub fn simulate_stochastic(
    comp: &AudienceComposition,
    params: &DeliveryParams,
    seed: u64,
) -> Result<StochasticDelivery, DeliveryError> {
    check_audience_size(comp.size_u)?;
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = params.rate_r;
    let (ma, mb, mo) = params.ad1_multipliers();

    let mut ad1 = [TrueBreakdown { a: 0.0, b: 0.0, o: 0.0 }; 2];
    let mut ad2 = ad1;
    for (idx, half) in [comp.inferred_a, comp.inferred_b].iter().enumerate() {
        let cells = [(half.a, r * ma), (half.b, r * mb), (half.o, r * mo)];
        let mut seen1 = [0u64; 3];
        let mut seen2 = [0u64; 3];
        for (g, &(people, p1)) in cells.iter().enumerate() {
            let people = people.round() as u64;
            for _ in 0..people {
                if rng.gen_bool(p1) {
                    seen1[g] += 1;
                }
                if rng.gen_bool(r) {
                    seen2[g] += 1;
                }
            }
        }
        ad1[idx] = TrueBreakdown { a: seen1[0] as f64, b: seen1[1] as f64, o: seen1[2] as f64 };
        ad2[idx] = TrueBreakdown { a: seen2[0] as f64, b: seen2[1] as f64, o: seen2[2] as f64 };
    }
    Ok(StochasticDelivery {
        seed,
        inferred: DeliveryCounts::from_audited(
            Basis::Inferred,
            ad1[0].total(),
            ad1[1].total(),
            ad2[0].total(),
            ad2[1].total(),
        ),
        omniscient: regroup_by_true_label(&ad1, &ad2),
    })
}
