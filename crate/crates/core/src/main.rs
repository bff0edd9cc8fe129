use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use skewaudit::cli_io::{self, InputError, PlantedConfusion};
use skewaudit::sweep::{SkewGrid, SkewSide, SweepConfig};
use skewaudit::{Alternative, AuditSettings, DeliveryParams, Error, FdrMatrix, OthersTreatment};

const USAGE_EXIT: u8 = 2;

#[derive(Parser)]
#[command(name = "skewaudit", version, about = "Paired-ad delivery skew audits under demographic-inference error")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the inference error matrix of a labeled CSV at a threshold.
    EstimateFdr(EstimateFdrArgs),
    /// Generate a seeded synthetic labeled population as CSV.
    Generate(GenerateArgs),
    /// Simulate paired-ad delivery counts.
    Simulate(SimulateArgs),
    /// Run the uncorrected and inference-aware audits on reported counts.
    Audit(AuditArgs),
    /// Recover the delivery rate and skew from ad-1 inferred counts.
    SolveRs(SolveRsArgs),
    /// Sweep the skew parameter and detect missed-skew regions.
    Sweep(SweepArgs),
    /// Emit the built-in baseline and skewed thought experiments.
    Repro(ReproArgs),
}

#[derive(Args)]
struct OutputArgs {
    /// Write to this file instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateFdrArgs {
    /// CSV with columns true_group,prob_a,prob_b,prob_o.
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, short)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON file with a planted confusion (`rates`, `label_mix`).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    fdr_b_given_a: Option<f64>,
    #[arg(long)]
    fdr_o_given_a: Option<f64>,
    #[arg(long)]
    fdr_a_given_b: Option<f64>,
    #[arg(long)]
    fdr_o_given_b: Option<f64>,
    #[arg(long)]
    fdr_a_given_o: Option<f64>,
    #[arg(long)]
    fdr_b_given_o: Option<f64>,
    /// Inferred-label shares for A, B and Other.
    #[arg(long, num_args = 3, value_names = ["A", "B", "O"])]
    label_mix: Option<Vec<f64>>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct SimulateArgs {
    /// Targeted audience size.
    #[arg(long)]
    u: u64,
    #[arg(long)]
    r: f64,
    #[arg(long)]
    s: f64,
    #[arg(long, default_value = "advantaged")]
    others: OthersTreatment,
    /// Error matrix JSON; adds the inferred-attribute targeted delivery.
    #[arg(long)]
    fdr: Option<PathBuf>,
    /// Also draw stochastic delivery with this seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Round counts to whole people for display.
    #[arg(long)]
    rounded: bool,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct AuditArgs {
    /// Ad-1 inferred A, ad-1 inferred B, ad-2 inferred A, ad-2 inferred B.
    #[arg(num_args = 4, value_names = ["N1_A", "N1_B", "N2_A", "N2_B"], allow_negative_numbers = true)]
    counts: Vec<f64>,
    #[arg(long)]
    u: u64,
    #[arg(long)]
    fdr: PathBuf,
    #[arg(long, default_value_t = skewaudit::skew_stats::DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value = "greater")]
    alternative: Alternative,
    #[arg(long, default_value = "advantaged")]
    others: OthersTreatment,
    /// Ground-truth counts for an omniscient comparison.
    #[arg(long, num_args = 4, value_names = ["N1_A", "N1_B", "N2_A", "N2_B"])]
    omniscient: Option<Vec<f64>>,
    #[arg(long)]
    rounded: bool,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct SolveRsArgs {
    #[arg(value_names = ["N1_A", "N1_B"], num_args = 2, allow_negative_numbers = true)]
    counts: Vec<f64>,
    #[arg(long)]
    u: u64,
    #[arg(long)]
    fdr: PathBuf,
    #[arg(long, default_value = "advantaged")]
    others: OthersTreatment,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON sweep configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    sizes: Option<Vec<u64>>,
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long)]
    s_start: Option<f64>,
    #[arg(long)]
    s_stop: Option<f64>,
    #[arg(long)]
    s_step: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    others: Option<OthersTreatment>,
    #[arg(long)]
    side: Option<SkewSide>,
    /// `LABEL=PATH` error matrices; replaces the configured set.
    #[arg(long = "fdr", value_name = "LABEL=PATH")]
    fdrs: Vec<String>,
    /// Defaults to $SKEWAUDIT_OUTPUT_DIR, then the working directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ReproArgs {
    #[arg(long)]
    rounded: bool,
    #[command(flatten)]
    out: OutputArgs,
}

fn emit(out: &OutputArgs, text: &str) -> Result<(), Error> {
    match &out.output {
        Some(path) => cli_io::write_text(path, &format!("{text}\n"))?,
        None => {
            let mut stdout = io::stdout().lock();
            match writeln!(stdout, "{text}") {
                Err(e) if e.kind() != io::ErrorKind::BrokenPipe => {
                    return Err(InputError::Io { path: "<stdout>".into(), message: e.to_string() }.into());
                }
                _ => {}
            }
        }
    }
    Ok(())
}

fn emit_json<T: Serialize>(out: &OutputArgs, value: &T) -> Result<(), Error> {
    emit(out, &cli_io::to_report_json(value)?)
}

fn parse_fdr_arg(arg: &str) -> Result<(String, FdrMatrix), Error> {
    let (label, path) = arg
        .split_once('=')
        .ok_or_else(|| InputError::InvalidArgument(format!("--fdr expects LABEL=PATH, got {arg:?}")))?;
    Ok((label.to_string(), cli_io::load_fdr(Path::new(path))?))
}

fn run_generate(args: GenerateArgs) -> Result<(), Error> {
    let mut planted = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| InputError::Io { path: path.display().to_string(), message: e.to_string() })?;
            serde_json::from_str::<PlantedConfusion>(&text)
                .map_err(|e| InputError::Json { path: path.display().to_string(), message: e.to_string() })?
        }
        None => PlantedConfusion::default(),
    };
    let r = &mut planted.rates;
    for (flag, slot) in [
        (args.fdr_b_given_a, &mut r.fdr_b_given_a),
        (args.fdr_o_given_a, &mut r.fdr_o_given_a),
        (args.fdr_a_given_b, &mut r.fdr_a_given_b),
        (args.fdr_o_given_b, &mut r.fdr_o_given_b),
        (args.fdr_a_given_o, &mut r.fdr_a_given_o),
        (args.fdr_b_given_o, &mut r.fdr_b_given_o),
    ] {
        if let Some(v) = flag {
            *slot = v;
        }
    }
    if let Some(mix) = &args.label_mix {
        planted.label_mix = [mix[0], mix[1], mix[2]];
    }
    match &args.out.output {
        Some(path) => {
            let file = File::create(path)
                .map_err(|e| InputError::Io { path: path.display().to_string(), message: e.to_string() })?;
            cli_io::cmd_generate_synthetic(args.n, &planted, args.seed, file)
        }
        None => cli_io::cmd_generate_synthetic(args.n, &planted, args.seed, io::stdout().lock()),
    }
}

fn run_sweep(args: SweepArgs) -> Result<(), Error> {
    let mut config = match &args.config {
        Some(path) => cli_io::load_sweep_config(path)?,
        None => SweepConfig::default(),
    };
    if let Some(sizes) = args.sizes {
        config.sizes = sizes;
    }
    if let Some(r) = args.rate {
        config.rate_r = r;
    }
    let SkewGrid { start, stop, step } = config.s_grid;
    config.s_grid = SkewGrid {
        start: args.s_start.unwrap_or(start),
        stop: args.s_stop.unwrap_or(stop),
        step: args.s_step.unwrap_or(step),
    };
    if let Some(a) = args.alpha {
        config.alpha = a;
    }
    if let Some(o) = args.others {
        config.others_treatment = o;
    }
    if let Some(side) = args.side {
        config.side = side;
    }
    if !args.fdrs.is_empty() {
        config.fdrs = args.fdrs.iter().map(|a| parse_fdr_arg(a)).collect::<Result<_, _>>()?;
    }
    let out_dir = cli_io::resolve_output_dir(args.out_dir);
    let outputs = cli_io::cmd_sweep(&config, &out_dir)?;
    for cell in &outputs.cells {
        match (&cell.region, &cell.error) {
            (Some(r), _) if r.is_fragmented() => eprintln!(
                "warning: missed-skew region for size {} threshold {} is fragmented into {} runs; reporting [{}, {}]",
                cell.size_u, cell.threshold_label, r.runs, r.s_low, r.s_high
            ),
            (_, Some(e)) => eprintln!("warning: size {} threshold {}: {e}", cell.size_u, cell.threshold_label),
            _ => {}
        }
    }
    for f in &outputs.files {
        println!("{}", f.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::EstimateFdr(a) => emit_json(&a.out, &cli_io::cmd_estimate_fdr(&a.input, a.threshold)?),
        Command::Generate(a) => run_generate(a),
        Command::Simulate(a) => {
            let params = DeliveryParams::new(a.r, a.s, a.others)?;
            let fdr = a.fdr.as_deref().map(cli_io::load_fdr).transpose()?;
            let mut report = cli_io::cmd_simulate(a.u, params, fdr, a.seed)?;
            if a.rounded {
                report = report.rounded();
            }
            match a.format {
                Format::Json => emit_json(&a.out, &report),
                Format::Csv => emit(&a.out, report.to_csv().trim_end()),
            }
        }
        Command::Audit(a) => {
            let fdr = cli_io::load_fdr(&a.fdr)?;
            let settings = AuditSettings { alpha: a.alpha, alternative: a.alternative, others_treatment: a.others };
            let counts = [a.counts[0], a.counts[1], a.counts[2], a.counts[3]];
            let omni = a.omniscient.map(|o| [o[0], o[1], o[2], o[3]]);
            let mut report = cli_io::cmd_audit(counts, a.u, &fdr, &settings, omni)?;
            if a.rounded {
                report = report.rounded();
            }
            emit_json(&a.out, &report)
        }
        Command::SolveRs(a) => {
            let fdr = cli_io::load_fdr(&a.fdr)?;
            let settings = AuditSettings { others_treatment: a.others, ..AuditSettings::default() };
            emit_json(&a.out, &cli_io::cmd_solve_rs(a.counts[0], a.counts[1], a.u, &fdr, &settings)?)
        }
        Command::Sweep(a) => run_sweep(a),
        Command::Repro(a) => emit_json(&a.out, &cli_io::cmd_repro(a.rounded)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let obj = serde_json::json!({ "kind": "usage", "code": USAGE_EXIT, "message": e.kind().to_string() });
            eprintln!("{obj}");
            return ExitCode::from(USAGE_EXIT);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let obj = e.to_object();
            eprintln!("{}", serde_json::to_string(&obj).expect("error object serializes"));
            ExitCode::from(u8::try_from(obj.code).unwrap_or(1))
        }
    }
}
