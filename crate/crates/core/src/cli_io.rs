//! Record ingestion, synthetic data, report assembly and file emission for
//! the command-line front end.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::correction::{
    inference_aware_audit_with, solve_rs_with_treatment, AuditSettings, InferenceAwareAudit, SolvedParams,
};
use crate::delivery_sim::{
    simulate_inferred_targeted, simulate_stochastic, simulate_true_targeted, Basis, DeliveryCounts, DeliveryParams,
    InferredDelivery, StochasticDelivery,
};
use crate::demographics::{
    compose_audience, estimate_fdr, AudienceComposition, DemographicsError, FdrEstimate, FdrMatrix, GroupLabel,
    LabeledRecord, TrueBreakdown,
};
use crate::error::Error;
use crate::skew_stats::{ztest_directed, AuditResult};
use crate::sweep::{
    repro_thought_experiments, sweep_grid, GridCell, SweepConfig, SweepRow, ThoughtExperiment, ThoughtExperiments,
};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "SKEWAUDIT_OUTPUT_DIR";
pub const RECORD_HEADER: [&str; 4] = ["true_group", "prob_a", "prob_b", "prob_o"];
/// Significant digits for every number in emitted JSON.
pub const SIGNIFICANT_DIGITS: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InputError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("CSV line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("CSV line {line}: {source}")]
    RecordAt {
        line: u64,
        #[source]
        source: DemographicsError,
    },
    #[error("{path}: invalid JSON: {message}")]
    Json { path: String, message: String },
    #[error("{0}")]
    InvalidArgument(String),
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> InputError {
    InputError::Io { path: path.display().to_string(), message: e.to_string() }
}

// ---------------------------------------------------------------------------
// Labeled records
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct RawRecord {
    true_group: String,
    prob_a: f64,
    prob_b: f64,
    prob_o: f64,
}

pub fn read_records<R: Read>(reader: R) -> Result<Vec<LabeledRecord>, InputError> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = csv.headers().map_err(|e| InputError::Csv { line: 1, message: e.to_string() })?;
    if headers.iter().collect::<Vec<_>>() != RECORD_HEADER {
        return Err(InputError::Csv {
            line: 1,
            message: format!(
                "expected header {:?}, found {:?}",
                RECORD_HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut records = Vec::new();
    for row in csv.records() {
        let row =
            row.map_err(|e| InputError::Csv { line: e.position().map_or(0, |p| p.line()), message: e.to_string() })?;
        let line = row.position().map_or(0, |p| p.line());
        let raw: RawRecord = row.deserialize(None).map_err(|e| InputError::Csv { line, message: e.to_string() })?;
        let group: GroupLabel = raw.true_group.parse().map_err(|source| InputError::RecordAt { line, source })?;
        let record = LabeledRecord::new(group, raw.prob_a, raw.prob_b, raw.prob_o)
            .map_err(|source| InputError::RecordAt { line, source })?;
        records.push(record);
    }
    Ok(records)
}

pub fn read_records_csv(path: &Path) -> Result<Vec<LabeledRecord>, InputError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    read_records(BufReader::new(file))
}

pub fn write_records<W: Write>(writer: W, records: &[LabeledRecord]) -> Result<(), InputError> {
    let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    let wrap = |e: csv::Error| InputError::Io { path: "<records>".into(), message: e.to_string() };
    csv.write_record(RECORD_HEADER).map_err(wrap)?;
    for r in records {
        csv.serialize(r).map_err(wrap)?;
    }
    csv.flush().map_err(|e| InputError::Io { path: "<records>".into(), message: e.to_string() })
}

// ---------------------------------------------------------------------------
// Synthetic labeled populations
// ---------------------------------------------------------------------------

/// Confusion planted into a synthetic population.
///
/// Every generated record's top probability is at least 0.51, so at any
/// threshold up to 0.5 all records are labeled and the empirical FDRs
/// converge to `rates`. Misclassified records are less confident
/// (top probability in `[0.51, 0.8)`) than correct ones (`[0.6, 1.0)`), so
/// raising the threshold sheds errors faster than correct labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedConfusion {
    pub rates: FdrMatrix,
    /// Share of records carrying inferred label A, B and Other.
    pub label_mix: [f64; 3],
}

impl Default for PlantedConfusion {
    fn default() -> Self {
        Self {
            rates: FdrMatrix::new(0.47, 0.03, 0.14, 0.03, 0.2, 0.2).expect("valid default rates"),
            label_mix: [0.45, 0.45, 0.10],
        }
    }
}

impl PlantedConfusion {
    pub fn validate(&self) -> Result<(), Error> {
        self.rates.validate()?;
        let sum: f64 = self.label_mix.iter().sum();
        if self.label_mix.iter().any(|&p| !p.is_finite() || p < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(InputError::InvalidArgument(format!(
                "label mix {:?} must be non-negative and sum to 1",
                self.label_mix
            ))
            .into());
        }
        Ok(())
    }

    /// Distribution of the true group given inferred label `y`, in A, B, O order.
    fn true_given(&self, y: GroupLabel) -> [f64; 3] {
        let r = &self.rates;
        match y {
            GroupLabel::GroupA => [1.0 - r.star_a(), r.fdr_b_given_a, r.fdr_o_given_a],
            GroupLabel::GroupB => [r.fdr_a_given_b, 1.0 - r.star_b(), r.fdr_o_given_b],
            GroupLabel::Other => [r.fdr_a_given_o, r.fdr_b_given_o, 1.0 - r.star_o()],
        }
    }
}

fn draw_label(rng: &mut ChaCha8Rng, weights: &[f64; 3]) -> GroupLabel {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (label, w) in GroupLabel::ALL.iter().zip(weights) {
        acc += w;
        if u < acc {
            return *label;
        }
    }
    // rounding slack: fall back to the last label with positive weight
    *GroupLabel::ALL.iter().zip(weights).rev().find(|(_, &w)| w > 0.0).expect("weights sum to 1").0
}

pub fn generate_synthetic(n: usize, planted: &PlantedConfusion, seed: u64) -> Result<Vec<LabeledRecord>, Error> {
    planted.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        let inferred = draw_label(&mut rng, &planted.label_mix);
        let truth = draw_label(&mut rng, &planted.true_given(inferred));
        let mut probs = [0.0f64; 3];
        let idx = |g: GroupLabel| GroupLabel::ALL.iter().position(|&x| x == g).unwrap();
        let top = idx(inferred);
        if inferred == truth {
            let conf: f64 = rng.gen_range(0.6..1.0);
            let split: f64 = rng.gen();
            let rest = 1.0 - conf;
            let others: Vec<usize> = (0..3).filter(|&i| i != top).collect();
            probs[top] = conf;
            probs[others[0]] = rest * split;
            probs[others[1]] = rest - rest * split;
        } else {
            let conf: f64 = rng.gen_range(0.51..0.8);
            let share: f64 = rng.gen_range(0.5..1.0);
            let rest = 1.0 - conf;
            let t = idx(truth);
            let third = 3 - top - t;
            probs[top] = conf;
            probs[t] = rest * share;
            probs[third] = rest - rest * share;
        }
        records.push(LabeledRecord::new(truth, probs[0], probs[1], probs[2])?);
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
// JSON emission and ingestion
// ---------------------------------------------------------------------------

fn round_significant(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(num) = n.as_f64().and_then(|x| serde_json::Number::from_f64(round_significant(x))) {
                *n = num;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON with every float rounded to [`SIGNIFICANT_DIGITS`].
pub fn to_report_json<T: Serialize>(value: &T) -> Result<String, Error> {
    let mut v = serde_json::to_value(value)
        .map_err(|e| InputError::InvalidArgument(format!("cannot serialize report: {e}")))?;
    round_value(&mut v);
    Ok(serde_json::to_string_pretty(&v).expect("values serialize"))
}

fn read_json_value(path: &Path) -> Result<Value, InputError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| InputError::Json { path: path.display().to_string(), message: e.to_string() })
}

/// Loads an FDR matrix from either a bare matrix object or a report that
/// embeds one under `"matrix"` (as written by `estimate-fdr`).
pub fn load_fdr(path: &Path) -> Result<FdrMatrix, InputError> {
    let value = read_json_value(path)?;
    let inner = match value.get("matrix") {
        Some(m) => m.clone(),
        None => value,
    };
    serde_json::from_value(inner)
        .map_err(|e| InputError::Json { path: path.display().to_string(), message: e.to_string() })
}

pub fn load_sweep_config(path: &Path) -> Result<SweepConfig, InputError> {
    let value = read_json_value(path)?;
    serde_json::from_value(value)
        .map_err(|e| InputError::Json { path: path.display().to_string(), message: e.to_string() })
}

pub fn write_text(path: &Path, contents: &str) -> Result<(), InputError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

/// `--out-dir`, then the environment variable, then the working directory.
pub fn resolve_output_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("."))
}

// ---------------------------------------------------------------------------
// Display rounding
// ---------------------------------------------------------------------------

fn round_breakdown(b: &TrueBreakdown) -> TrueBreakdown {
    b.rounded()
}

pub fn round_inferred_delivery(d: &InferredDelivery) -> InferredDelivery {
    InferredDelivery {
        inferred: d.inferred.rounded(),
        omniscient: d.omniscient.rounded(),
        ad1_by_half: [round_breakdown(&d.ad1_by_half[0]), round_breakdown(&d.ad1_by_half[1])],
        ad2_by_half: [round_breakdown(&d.ad2_by_half[0]), round_breakdown(&d.ad2_by_half[1])],
    }
}

/// Display copy with every count rounded to a whole person.
/// Statistics are left untouched.
pub fn round_experiment(t: &ThoughtExperiment) -> ThoughtExperiment {
    let mut out = *t;
    out.composition = t.composition.rounded();
    out.true_delivery = t.true_delivery.rounded();
    out.inferred_delivery = round_inferred_delivery(&t.inferred_delivery);
    out.practical.composition = t.practical.composition.rounded();
    out.practical.corrected = t.practical.corrected.rounded();
    out
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

pub fn cmd_estimate_fdr(path: &Path, threshold: f64) -> Result<FdrEstimate, Error> {
    let records = read_records_csv(path)?;
    Ok(estimate_fdr(&records, threshold)?)
}

pub fn cmd_generate_synthetic<W: Write>(n: usize, planted: &PlantedConfusion, seed: u64, out: W) -> Result<(), Error> {
    let records = generate_synthetic(n, planted, seed)?;
    write_records(BufWriter::new(out), &records)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub size_u: u64,
    pub params: DeliveryParams,
    pub fdr: Option<FdrMatrix>,
    pub true_targeted: DeliveryCounts,
    pub composition: Option<AudienceComposition>,
    pub inferred_targeted: Option<InferredDelivery>,
    pub stochastic: Option<StochasticDelivery>,
}

pub fn cmd_simulate(
    size_u: u64,
    params: DeliveryParams,
    fdr: Option<FdrMatrix>,
    seed: Option<u64>,
) -> Result<SimulationReport, Error> {
    let true_targeted = simulate_true_targeted(size_u, &params)?;
    let composition = fdr.map(|f| compose_audience(size_u, &f)).transpose()?;
    let inferred_targeted = composition.as_ref().map(|c| simulate_inferred_targeted(c, &params)).transpose()?;
    let stochastic = match seed {
        Some(seed) => {
            let comp = match composition {
                Some(c) => c,
                None => AudienceComposition::error_free(size_u)?,
            };
            Some(simulate_stochastic(&comp, &params, seed)?)
        }
        None => None,
    };
    Ok(SimulationReport { size_u, params, fdr, true_targeted, composition, inferred_targeted, stochastic })
}

impl SimulationReport {
    pub fn rounded(&self) -> Self {
        Self {
            true_targeted: self.true_targeted.rounded(),
            composition: self.composition.map(|c| c.rounded()),
            inferred_targeted: self.inferred_targeted.as_ref().map(round_inferred_delivery),
            ..*self
        }
    }

    /// Flat CSV rows (basis, six counts, parameters), one per count set.
    pub fn to_csv(&self) -> String {
        let mut sets = vec![("true_targeted", self.true_targeted)];
        if let Some(d) = &self.inferred_targeted {
            sets.push(("inferred_targeted", d.inferred));
            sets.push(("omniscient", d.omniscient));
        }
        if let Some(d) = &self.stochastic {
            sets.push(("stochastic_inferred", d.inferred));
            sets.push(("stochastic_omniscient", d.omniscient));
        }
        let mut out = String::new();
        out.push_str(DELIVERY_CSV_HEADER);
        out.push('\n');
        for (source, counts) in sets {
            out.push_str(&delivery_csv_row(source, &counts, self.size_u, &self.params));
            out.push('\n');
        }
        out
    }
}

pub const DELIVERY_CSV_HEADER: &str =
    "source,basis,n1_a,n1_b,n1_o,n2_a,n2_b,n2_o,size_u,rate_r,skew_s,others_treatment";

pub fn delivery_csv_row(source: &str, c: &DeliveryCounts, size_u: u64, params: &DeliveryParams) -> String {
    let treatment = match params.others_treatment {
        crate::delivery_sim::OthersTreatment::Advantaged => "advantaged",
        crate::delivery_sim::OthersTreatment::Disadvantaged => "disadvantaged",
    };
    let nums: Vec<String> = c.all().iter().map(|&v| round_significant(v).to_string()).collect();
    format!(
        "{source},{},{},{size_u},{},{},{treatment}",
        c.basis.as_str(),
        nums.join(","),
        round_significant(params.rate_r),
        round_significant(params.skew_s)
    )
}

/// Uncorrected (`Z_i`), corrected (`Z_f`) and, when ground truth is
/// supplied, omniscient (`Z_c`) verdicts for one set of reported counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub size_u: u64,
    pub fdr: FdrMatrix,
    pub inferred: DeliveryCounts,
    pub uncorrected: AuditResult,
    pub corrected: InferenceAwareAudit,
    pub omniscient: Option<AuditResult>,
}

pub fn cmd_audit(
    counts: [f64; 4],
    size_u: u64,
    fdr: &FdrMatrix,
    settings: &AuditSettings,
    omniscient: Option<[f64; 4]>,
) -> Result<AuditReport, Error> {
    let [a1, b1, a2, b2] = counts;
    let inferred = DeliveryCounts::from_audited(Basis::Inferred, a1, b1, a2, b2);
    let uncorrected = ztest_directed(a1, b1, a2, b2, settings.alpha, settings.alternative)?;
    let corrected = inference_aware_audit_with(size_u, fdr, &inferred, settings)?;
    let omniscient = omniscient
        .map(|[a1, b1, a2, b2]| ztest_directed(a1, b1, a2, b2, settings.alpha, settings.alternative))
        .transpose()?;
    Ok(AuditReport { size_u, fdr: *fdr, inferred, uncorrected, corrected, omniscient })
}

impl AuditReport {
    pub fn rounded(&self) -> Self {
        let mut out = *self;
        out.corrected.composition = self.corrected.composition.rounded();
        out.corrected.corrected = self.corrected.corrected.rounded();
        out
    }
}

pub fn cmd_solve_rs(
    n1_a_i: f64,
    n1_b_i: f64,
    size_u: u64,
    fdr: &FdrMatrix,
    settings: &AuditSettings,
) -> Result<SolvedParams, Error> {
    Ok(solve_rs_with_treatment(n1_a_i, n1_b_i, size_u, fdr, settings.others_treatment)?)
}

pub const SWEEP_CSV_HEADER: &str = "size_u,threshold_label,s,z_true,z_inferred,z_corrected";
pub const REGION_CSV_HEADER: &str = "size_u,threshold_label,s_low,s_high,width,corrected_recovers";

fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

pub fn sweep_csv(cells: &[GridCell]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for cell in cells {
        for row in &cell.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                cell.size_u,
                csv_escape(&cell.threshold_label),
                round_significant(row.s),
                round_significant(row.z_true),
                round_significant(row.z_inferred),
                round_significant(row.z_corrected)
            ));
        }
    }
    out
}

/// Cells without a region leave the interval columns empty.
pub fn regions_csv(cells: &[GridCell]) -> String {
    let mut out = String::from(REGION_CSV_HEADER);
    out.push('\n');
    for cell in cells {
        let label = csv_escape(&cell.threshold_label);
        match &cell.region {
            Some(r) => out.push_str(&format!(
                "{},{label},{},{},{},{}\n",
                cell.size_u,
                round_significant(r.s_low),
                round_significant(r.s_high),
                round_significant(r.width),
                r.corrected_recovers
            )),
            None => out.push_str(&format!("{},{label},,,,\n", cell.size_u)),
        }
    }
    out
}

#[derive(Serialize)]
struct SweepSeries<'a> {
    size_u: u64,
    threshold_label: &'a str,
    rows: &'a [SweepRow],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutputs {
    pub cells: Vec<GridCell>,
    pub files: Vec<PathBuf>,
}

/// Runs the grid and writes `sweep.csv`, `regions.csv`, their JSON mirrors
/// and the effective configuration into `out_dir`.
pub fn cmd_sweep(config: &SweepConfig, out_dir: &Path) -> Result<SweepOutputs, Error> {
    let cells = sweep_grid(config)?;
    let series: Vec<SweepSeries> = cells
        .iter()
        .map(|c| SweepSeries { size_u: c.size_u, threshold_label: &c.threshold_label, rows: &c.rows })
        .collect();
    let outputs = [
        ("sweep.csv", sweep_csv(&cells)),
        ("regions.csv", regions_csv(&cells)),
        ("sweep.json", to_report_json(&series)?),
        ("regions.json", to_report_json(&cells)?),
        ("sweep_config.json", to_report_json(config)?),
    ];
    let mut files = Vec::new();
    for (name, contents) in outputs {
        let path = out_dir.join(name);
        write_text(&path, &contents)?;
        files.push(path);
    }
    Ok(SweepOutputs { cells, files })
}

pub fn cmd_repro(rounded: bool) -> ThoughtExperiments {
    let t = repro_thought_experiments();
    if rounded {
        ThoughtExperiments { baseline: round_experiment(&t.baseline), skewed: round_experiment(&t.skewed) }
    } else {
        t
    }
}
