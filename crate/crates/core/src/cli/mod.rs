//! `deltamean` command line.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | input could not be read, parsed or validated (file:line:column in the message) |
//! | 2 | schema mismatch: missing columns, misaligned predictors, unmatched ids |
//! | 3 | numerical failure: rank-deficient design, zero mean fitness, stopped simulation |
//! | 4 | an identity check failed |
//!
//! Diagnostics always go to standard error.

pub mod dataset;
pub mod report;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::algebra::ValueVector;
use crate::decomposition::{decompose_mean_change, ContextData, Convention, DecompositionReport};
use crate::error::Error;
use crate::fisher::{simulate, SimulationConfig, SimulationRun, SimulationStatus};
use crate::price::{price_covariance_form, price_partition, PairedPopulation, PricePartition};
use crate::regression::{DesignMatrix, INTERCEPT};
use crate::tolerance;
use crate::verify::{self, VerifyOptions, VerifyReport};
use dataset::{Dataset, FREQ_COLUMN, ID_COLUMN};
use report::{render_table, sig6, to_machine_string, InputDigest, ReportDocument};

pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const INPUT: i32 = 1;
    pub const SCHEMA: i32 = 2;
    pub const NUMERICAL: i32 = 3;
    pub const CHECK_FAILED: i32 = 4;
}

pub const FORMAT_ENV: &str = "DELTAMEAN_FORMAT";

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self::new(exit::INPUT, message)
    }

    fn from_lib(err: Error, context: &str) -> Self {
        let code = match &err {
            Error::SchemaMismatch(_) => exit::SCHEMA,
            Error::RankDeficient { .. }
            | Error::InsufficientRows { .. }
            | Error::ZeroMeanFitness => exit::NUMERICAL,
            Error::IdentityViolation { .. } => exit::CHECK_FAILED,
            _ => exit::INPUT,
        };
        Self::new(code, format!("{context}: {err}"))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "deltamean",
    version,
    about = "Exact decomposition of change in weighted means"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split the change in a regression's mean outcome between two datasets.
    Decompose(DecomposeArgs),
    /// Price partition of the change in a trait mean over id-paired entities.
    Price(PriceArgs),
    /// Simulate haploid selection and report Fisher's partition per generation.
    FisherSim(FisherSimArgs),
    /// Check every identity on seeded random instances.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Machine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConventionArg {
    /// b·Δx̄ + x̄'·Δb
    Paper,
    /// b'·Δx̄ + x̄·Δb
    ChangedRef,
    /// b·Δx̄ + x̄·Δb + Δx̄·Δb
    Threefold,
}

impl From<ConventionArg> for Convention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Paper => Convention::PaperInitialReference,
            ConventionArg::ChangedRef => Convention::ChangedReference,
            ConventionArg::Threefold => Convention::Threefold,
        }
    }
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, env = FORMAT_ENV, default_value = "table")]
    pub format: Format,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub initial: PathBuf,
    #[arg(long)]
    pub changed: PathBuf,
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    /// Rescale each file's freq column to sum to one.
    #[arg(long)]
    pub normalize_freq: bool,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub outcome: String,
    /// Predictor columns in order; defaults to every column other than id, freq and the outcome.
    #[arg(long, value_delimiter = ',')]
    pub predictors: Option<Vec<String>>,
    #[arg(long, value_enum, default_value = "paper")]
    pub convention: ConventionArg,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct PriceArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Trait column, present in both files.
    #[arg(long)]
    pub outcome: String,
    /// Fitness column in the initial file; enables the covariance form.
    #[arg(long)]
    pub fitness: Option<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct FisherSimArgs {
    /// TOML simulation config; the built-in demo config when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub cases: usize,
    /// Replay a single case index.
    #[arg(long = "case")]
    pub case: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let rendered = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{rendered}");
                    exit::SUCCESS
                }
                _ => {
                    let _ = write!(stderr, "{rendered}");
                    exit::INPUT
                }
            };
        }
    };
    let outcome = match &cli.command {
        Command::Decompose(a) => cmd_decompose(a).and_then(|r| emit(&a.output, r, stdout)),
        Command::Price(a) => cmd_price(a).and_then(|r| emit(&a.output, r, stdout)),
        Command::FisherSim(a) => cmd_fisher_sim(a, stdout),
        Command::Verify(a) => cmd_verify(a, &VerifyOptions::default(), stdout, stderr),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message);
            e.code
        }
    }
}

/// A rendered report plus the exit code it carries.
pub struct Rendered {
    pub machine: String,
    pub table: String,
    pub code: i32,
}

fn emit(output: &OutputArgs, r: Rendered, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let text = match output.format {
        Format::Machine => &r.machine,
        Format::Table => &r.table,
    };
    match &output.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?,
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| CliError::input(format!("standard output: {e}")))?,
    }
    Ok(r.code)
}

fn delimiter_byte(c: char) -> Result<u8, CliError> {
    u8::try_from(c)
        .ok()
        .filter(u8::is_ascii)
        .ok_or_else(|| CliError::input(format!("delimiter `{c}` must be a single ASCII character")))
}

fn digest(ds: &Dataset) -> InputDigest {
    InputDigest {
        file: ds.file_name(),
        sha256: ds.sha256.clone(),
    }
}

fn read_pair(input: &InputArgs) -> Result<(Dataset, Dataset), CliError> {
    let delim = delimiter_byte(input.delimiter)?;
    Ok((
        Dataset::read(&input.initial, delim)?,
        Dataset::read(&input.changed, delim)?,
    ))
}

pub fn cmd_decompose(args: &DecomposeArgs) -> Result<Rendered, CliError> {
    let (a, b) = read_pair(&args.input)?;
    for ds in [&a, &b] {
        ds.require(&args.outcome)?;
    }
    let predictors: Vec<String> = match &args.predictors {
        Some(p) => p.clone(),
        None => a
            .headers
            .iter()
            .filter(|h| ![ID_COLUMN, FREQ_COLUMN, args.outcome.as_str()].contains(&h.as_str()))
            .cloned()
            .collect(),
    };
    if let Some(dup) = predictors
        .iter()
        .enumerate()
        .find(|(i, p)| predictors[..*i].contains(p))
    {
        return Err(CliError::new(
            exit::SCHEMA,
            format!("predictor `{}` listed twice", dup.1),
        ));
    }
    for ds in [&a, &b] {
        for p in &predictors {
            ds.require(p)?;
        }
    }
    let mut names = vec![INTERCEPT.to_string()];
    names.extend(predictors.iter().cloned());

    let context = |ds: &Dataset, label: &str| -> Result<ContextData, CliError> {
        let columns = predictors
            .iter()
            .map(|p| ds.numeric_column(p))
            .collect::<Result<Vec<_>, _>>()?;
        let rows: Vec<Vec<f64>> = (0..ds.len())
            .map(|j| columns.iter().map(|c| c[j]).collect())
            .collect();
        let design = DesignMatrix::from_predictor_rows_named(&rows, names.clone())
            .map_err(|e| CliError::from_lib(e, &ds.path.display().to_string()))?;
        let outcome = ValueVector::new(ds.numeric_column(&args.outcome)?)
            .map_err(|e| CliError::from_lib(e, &ds.path.display().to_string()))?;
        ContextData::new(
            design,
            outcome,
            ds.frequencies(args.input.normalize_freq)?,
            label,
        )
        .map_err(|e| CliError::from_lib(e, label))
    };
    let initial = context(&a, &a.file_name())?;
    let changed = context(&b, &b.file_name())?;
    let convention = Convention::from(args.convention);
    let report = decompose_mean_change(&initial, &changed, convention).map_err(|e| match e {
        Error::RankDeficient { ref columns } => CliError::new(
            exit::NUMERICAL,
            format!(
                "rank-deficient design; collinear columns: {}",
                columns
                    .iter()
                    .map(|&c| names[c].as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        ),
        other => CliError::from_lib(other, "decompose"),
    })?;
    if report.relative_closure_error() > tolerance::DECOMPOSITION_CLOSURE {
        return Err(CliError::new(
            exit::CHECK_FAILED,
            format!("decomposition closure error {:e}", report.closure_error),
        ));
    }

    let mut options = BTreeMap::new();
    options.insert(
        "convention".into(),
        serde_json::to_value(convention)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default(),
    );
    options.insert("outcome".into(), args.outcome.clone());
    options.insert("predictors".into(), predictors.join(","));
    options.insert(
        "normalize_freq".into(),
        args.input.normalize_freq.to_string(),
    );
    let table = decomposition_table(&report);
    let doc = ReportDocument::new("decompose", vec![digest(&a), digest(&b)], options, report);
    Ok(Rendered {
        machine: to_machine_string(&doc),
        table,
        code: exit::SUCCESS,
    })
}

fn decomposition_table(r: &DecompositionReport) -> String {
    let mut out = format!(
        "{} -> {}  ({:?})\nmean outcome: {} -> {}\n\n",
        r.initial.label,
        r.changed.label,
        r.convention,
        sig6(r.initial.mean_outcome),
        sig6(r.changed.mean_outcome)
    );
    let mut header = vec![
        "predictor",
        "b",
        "b'",
        "mean",
        "mean'",
        "fixed-coef",
        "coef-change",
    ];
    if r.interaction_term.is_some() {
        header.push("interaction");
    }
    let mut rows: Vec<Vec<String>> = r
        .per_predictor_contributions
        .iter()
        .map(|c| {
            let i = c.index;
            let mut row = vec![
                c.name.clone(),
                sig6(r.initial.coefficients[i]),
                sig6(r.changed.coefficients[i]),
                sig6(r.initial.predictor_means[i]),
                sig6(r.changed.predictor_means[i]),
                sig6(c.coefficients_fixed),
                sig6(c.coefficient_change),
            ];
            if let Some(v) = c.interaction {
                row.push(sig6(v));
            }
            row
        })
        .collect();
    let mut total = vec![
        "total".to_string(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        sig6(r.coefficients_fixed_term),
        sig6(r.coefficient_change_term),
    ];
    if let Some(v) = r.interaction_term {
        total.push(sig6(v));
    }
    rows.push(total);
    out.push_str(&render_table(&header, &rows));
    out.push_str(&format!(
        "\nchange in mean: {}\nclosure error:  {}\n",
        sig6(r.total_change),
        sig6(r.closure_error)
    ));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceReport {
    pub entities: usize,
    pub dot_product: PricePartition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance_expectation: Option<PricePartition>,
    /// Largest term-wise relative discrepancy between the two forms.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub form_discrepancy: Option<f64>,
    /// Ids with zero changed frequency; their trait change carries no weight.
    pub extinct_ids: Vec<String>,
}

pub fn cmd_price(args: &PriceArgs) -> Result<Rendered, CliError> {
    let (a, b) = read_pair(&args.input)?;
    a.require(&args.outcome)?;
    b.require(&args.outcome)?;
    let unknown: Vec<&str> = b
        .ids
        .iter()
        .filter(|id| !a.ids.contains(id))
        .map(String::as_str)
        .collect();
    if !unknown.is_empty() {
        return Err(CliError::new(
            exit::SCHEMA,
            format!(
                "ids in {} absent from {}: {}",
                b.file_name(),
                a.file_name(),
                unknown.join(", ")
            ),
        ));
    }
    let missing: Vec<&str> = a
        .ids
        .iter()
        .filter(|id| !b.ids.contains(id))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        return Err(CliError::new(
            exit::SCHEMA,
            format!(
                "ids in {} absent from {} (list extinct entities with freq 0): {}",
                a.file_name(),
                b.file_name(),
                missing.join(", ")
            ),
        ));
    }
    // Reorder the changed file to the initial file's id order.
    let order: Vec<usize> = a
        .ids
        .iter()
        .map(|id| {
            b.ids
                .iter()
                .position(|x| x == id)
                .expect("ids matched above")
        })
        .collect();
    let reorder = |v: Vec<f64>| order.iter().map(|&k| v[k]).collect::<Vec<f64>>();

    let lib = |e: Error| CliError::from_lib(e, "price");
    let q = a.frequencies(args.input.normalize_freq)?;
    let q_changed = b.frequencies(args.input.normalize_freq)?;
    let q_changed =
        crate::regression::FrequencyVector::new(reorder(q_changed.into()), false).map_err(lib)?;
    let z = ValueVector::new(a.numeric_column(&args.outcome)?).map_err(lib)?;
    let z_changed = ValueVector::new(reorder(b.numeric_column(&args.outcome)?)).map_err(lib)?;
    let fitness = match &args.fitness {
        Some(name) => Some(ValueVector::new(a.numeric_column(name)?).map_err(lib)?),
        None => None,
    };
    let pop = PairedPopulation::new(q, q_changed, z, z_changed, fitness).map_err(lib)?;

    let dot_form = price_partition(&pop);
    if dot_form.closure_error() > tolerance::PRICE {
        return Err(CliError::new(
            exit::CHECK_FAILED,
            format!("price closure error {:e}", dot_form.closure_error()),
        ));
    }
    let (cov_form, discrepancy) = if pop.fitness().is_some() {
        let c = price_covariance_form(&pop).map_err(lib)?;
        let scale = [
            dot_form.selection_term,
            dot_form.transmission_term,
            c.selection_term,
            c.transmission_term,
        ];
        let d = tolerance::relative_error(dot_form.selection_term, c.selection_term, &scale).max(
            tolerance::relative_error(dot_form.transmission_term, c.transmission_term, &scale),
        );
        if d > tolerance::PRICE {
            return Err(CliError::new(
                exit::CHECK_FAILED,
                format!("dot-product and covariance forms disagree by {d:e}"),
            ));
        }
        (Some(c), Some(d))
    } else {
        (None, None)
    };
    let report = PriceReport {
        entities: pop.len(),
        dot_product: dot_form,
        covariance_expectation: cov_form,
        form_discrepancy: discrepancy,
        extinct_ids: pop
            .extinct()
            .into_iter()
            .map(|j| a.ids[j].clone())
            .collect(),
    };

    let mut rows = vec![vec![
        "dot product".to_string(),
        sig6(dot_form.selection_term),
        sig6(dot_form.transmission_term),
        sig6(dot_form.total),
    ]];
    if let Some(c) = cov_form {
        rows.push(vec![
            "covariance".to_string(),
            sig6(c.selection_term),
            sig6(c.transmission_term),
            sig6(c.total),
        ]);
    }
    let mut table = format!(
        "{} -> {}  ({} entities)\n\n",
        a.file_name(),
        b.file_name(),
        pop.len()
    );
    table.push_str(&render_table(
        &["form", "selection", "transmission", "total"],
        &rows,
    ));
    if !report.extinct_ids.is_empty() {
        table.push_str(&format!(
            "\nextinct (zero weight): {}\n",
            report.extinct_ids.join(", ")
        ));
    }

    let mut options = BTreeMap::new();
    options.insert("outcome".into(), args.outcome.clone());
    if let Some(f) = &args.fitness {
        options.insert("fitness".into(), f.clone());
    }
    options.insert(
        "normalize_freq".into(),
        args.input.normalize_freq.to_string(),
    );
    let doc = ReportDocument::new("price", vec![digest(&a), digest(&b)], options, report);
    Ok(Rendered {
        machine: to_machine_string(&doc),
        table,
        code: exit::SUCCESS,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherSimReport {
    pub config: SimulationConfig,
    pub run: SimulationRun,
}

pub fn load_simulation_config(path: &std::path::Path) -> Result<SimulationConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let de = toml::de::Deserializer::parse(&text)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let config: SimulationConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        CliError::input(format!(
            "{}: field `{}`: {}",
            path.display(),
            e.path(),
            e.inner()
        ))
    })?;
    config
        .validate()
        .map_err(|e| CliError::from_lib(e, &path.display().to_string()))?;
    Ok(config)
}

pub fn cmd_fisher_sim(args: &FisherSimArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let (config, inputs) = match &args.config {
        Some(path) => {
            let bytes = std::fs::read(path).unwrap_or_default();
            let digest = InputDigest {
                file: path
                    .file_name()
                    .map_or_else(String::new, |n| n.to_string_lossy().into_owned()),
                sha256: hex::encode(<sha2::Sha256 as sha2::Digest>::digest(&bytes)),
            };
            (load_simulation_config(path)?, vec![digest])
        }
        None => (SimulationConfig::default(), Vec::new()),
    };
    let run = simulate(&config).map_err(|e| CliError::from_lib(e, "fisher-sim"))?;
    for (g, s) in run.summaries.iter().enumerate() {
        let variance_gap = (s.ftns_term - s.genetic_variance).abs();
        if variance_gap > tolerance::FISHER || s.closure_error() > tolerance::FISHER {
            return Err(CliError::new(
                exit::CHECK_FAILED,
                format!(
                    "generation {g}: identity check failed (Σ bΔp − Var(g) = {variance_gap:e})"
                ),
            ));
        }
    }
    let code = match &run.status {
        SimulationStatus::Completed => exit::SUCCESS,
        SimulationStatus::Stopped { .. } => exit::NUMERICAL,
    };

    let mut rows = Vec::new();
    for (g, s) in run.summaries.iter().enumerate() {
        rows.push(vec![
            g.to_string(),
            sig6(s.raw_mean_fitness),
            sig6(s.ftns_term),
            sig6(s.genetic_variance),
            sig6(s.environment_term),
            sig6(s.total_change),
            sig6(s.closure_error()),
        ]);
    }
    let mut table = format!(
        "seed {}  loci {}  entities {}  generations {}\n\n",
        config.seed, config.loci, config.entities, config.generations
    );
    table.push_str(&render_table(
        &["gen", "mean w", "b·Δp", "Var(g)", "p'·Δb", "Δw̄", "closure"],
        &rows,
    ));
    if let SimulationStatus::Stopped { generation, reason } = &run.status {
        table.push_str(&format!("\nstopped at generation {generation}: {reason}\n"));
    }

    let mut options = BTreeMap::new();
    options.insert("seed".into(), config.seed.to_string());
    let doc = ReportDocument::new(
        "fisher-sim",
        inputs,
        options,
        FisherSimReport { config, run },
    );
    emit(
        &args.output,
        Rendered {
            machine: to_machine_string(&doc),
            table,
            code,
        },
        stdout,
    )
}

/// `base` carries options not exposed on the command line (fault injection).
pub fn cmd_verify(
    args: &VerifyArgs,
    base: &VerifyOptions,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32, CliError> {
    let options = VerifyOptions {
        seed: args.seed,
        cases: args.cases,
        only_case: args.case,
        ..base.clone()
    };
    let report = verify::run(&options);
    let code = if report.passed {
        exit::SUCCESS
    } else {
        exit::CHECK_FAILED
    };
    if let Some(f) = &report.failure {
        let _ = writeln!(
            stderr,
            "verify failed: {:?} at case {} (replay with `verify --seed {} --case {}`)\n{}",
            f.check,
            f.case_index,
            f.seed,
            f.case_index,
            serde_json::to_string(f).expect("serializable")
        );
    }
    let table = verify_table(&report);
    let mut options_map = BTreeMap::new();
    options_map.insert("seed".into(), args.seed.to_string());
    options_map.insert("cases".into(), args.cases.to_string());
    if let Some(c) = args.case {
        options_map.insert("case".into(), c.to_string());
    }
    let doc = ReportDocument::new("verify", Vec::new(), options_map, report);
    emit(
        &args.output,
        Rendered {
            machine: to_machine_string(&doc),
            table,
            code,
        },
        stdout,
    )
}

fn verify_table(r: &VerifyReport) -> String {
    let rows: Vec<Vec<String>> = r
        .checks
        .iter()
        .map(|c| {
            vec![
                format!("{:?}", c.check),
                c.runs.to_string(),
                format!("{:.3e}", c.worst_error),
                format!("{:.0e}", c.tolerance),
                if c.worst_error <= c.tolerance {
                    "pass"
                } else {
                    "FAIL"
                }
                .to_string(),
            ]
        })
        .collect();
    let mut out = format!("seed {}  cases {}\n\n", r.seed, r.cases_run);
    out.push_str(&render_table(
        &["check", "runs", "worst", "tolerance", "status"],
        &rows,
    ));
    out.push_str(&format!(
        "\n{}: worst closure error {:.3e}\n",
        if r.passed { "PASS" } else { "FAIL" },
        r.worst_closure_error
    ));
    out
}
