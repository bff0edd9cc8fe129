//! Black-box auditing of paired-ad delivery for demographic skew when group
//! membership has to be inferred.
//!
//! * [`demographics`]: group labels, thresholded inference, error matrices
//!   and targeted-audience composition.
//! * [`delivery_sim`]: expected and stochastic paired-ad delivery.
//! * [`skew_stats`]: the skew measure `D` and the two-proportion Z-test.
//! * [`correction`]: recovery of `R` and `S`, error propagation and the
//!   inference-aware corrected audit.
//! * [`sweep`]: parameter sweeps and missed-skew region detection.
//! * [`cli_io`]: file formats, synthetic data and report emission used by the
//!   `skewaudit` binary.

pub mod cli_io;
pub mod correction;
pub mod delivery_sim;
pub mod demographics;
pub mod error;
pub mod skew_stats;
pub mod sweep;

pub use correction::{
    correct_counts, inference_aware_audit, inference_aware_audit_with, omniscient_correct, propagate_fdr, solve_rs,
    solve_rs_with_treatment, AuditSettings, InferenceAwareAudit, PropagatedFdr, SolvedParams,
};
pub use delivery_sim::{
    simulate_inferred_targeted, simulate_stochastic, simulate_true_targeted, Basis, DeliveryCounts, DeliveryParams,
    OthersTreatment,
};
pub use demographics::{
    assign_inferred_label, compose_audience, estimate_fdr, AudienceComposition, FdrMatrix, GroupLabel, LabeledRecord,
};
pub use error::Error;
pub use skew_stats::{critical_value, ztest, ztest_directed, Alternative, AuditResult};
