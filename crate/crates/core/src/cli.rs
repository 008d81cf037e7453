//! `nclass` command-line front end.
//!
//! Exit codes: 0 ok, 1 usage, 2 undefined state, 3 accuracy failure,
//! 4 self-check failure.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::criteria::{evaluate_family, CriteriaReport, CriterionValue, Flag, DEFAULT_ELL_MAX};
use crate::error::Error;
use crate::fock_states::{CutoffPolicy, StateFamily};
use crate::moment_engine::StateModification;
use crate::oracle::{default_families, equivalence_suite, EquivalenceConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_UNDEFINED: i32 = 2;
pub const EXIT_ACCURACY: i32 = 3;
pub const EXIT_SELFCHECK: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "nclass", version, about = "Nonclassicality criteria for photon-subtracted and photon-added states")]
pub struct Cli {
    /// TOML file with default values for any flag; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate every criterion for one state.
    Criteria(CriteriaArgs),
    /// Evaluate criteria over a parameter grid.
    Sweep(SweepArgs),
    /// Compare the ladder shortcuts against the brute-force oracle.
    Selfcheck(SelfcheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyArg {
    Coherent,
    Thermal,
    Fock,
    Squeezed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
pub enum CriterionArg {
    #[value(name = "Q")]
    #[serde(rename = "Q")]
    Q,
    #[value(name = "Q_ell_normal")]
    #[serde(rename = "Q_ell_normal")]
    QEllNormal,
    #[value(name = "Q_ell_central")]
    #[serde(rename = "Q_ell_central")]
    QEllCentral,
    #[value(name = "d_h")]
    #[serde(rename = "d_h")]
    DH,
    #[value(name = "A3")]
    #[serde(rename = "A3")]
    A3,
}

const ALL_CRITERIA: [CriterionArg; 5] = [
    CriterionArg::Q,
    CriterionArg::QEllNormal,
    CriterionArg::QEllCentral,
    CriterionArg::DH,
    CriterionArg::A3,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Csv,
    Json,
}

/// Flags shared by `criteria` and `sweep`.
#[derive(Debug, Clone, Args)]
pub struct StateArgs {
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    /// Photons to subtract.
    #[arg(long, conflicts_with = "add")]
    pub subtract: Option<usize>,
    /// Photons to add.
    #[arg(long)]
    pub add: Option<usize>,
    #[arg(long)]
    pub ell_max: Option<usize>,
    /// Comma-separated subset of Q,Q_ell_normal,Q_ell_central,d_h,A3.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub criteria: Option<Vec<CriterionArg>>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long)]
    pub eps_tail: Option<f64>,
    #[arg(long)]
    pub max_cutoff: Option<usize>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    /// Write the document here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CriteriaArgs {
    /// |alpha|^2, nbar, N or r depending on the family.
    #[arg(long, allow_negative_numbers = true)]
    pub param: Option<f64>,
    #[command(flatten)]
    pub state: StateArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// Comma-separated parameter values.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, conflicts_with = "param_range")]
    pub param: Option<Vec<f64>>,
    /// Inclusive grid `start:stop:step`.
    #[arg(long)]
    pub param_range: Option<String>,
    #[command(flatten)]
    pub state: StateArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SelfcheckArgs {
    /// Tolerance for both paths (default 1e-9 subtraction, 1e-8 addition).
    #[arg(long)]
    pub tol: Option<f64>,
    /// Comma-separated subset of coherent,thermal,squeezed,fock.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub families: Option<Vec<FamilyArg>>,
    #[arg(long)]
    pub eps_tail: Option<f64>,
    #[arg(long)]
    pub max_cutoff: Option<usize>,
    /// Write every compared cell here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Values a config file may supply.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub family: Option<FamilyArg>,
    pub param: Option<ParamValue>,
    pub param_range: Option<String>,
    pub subtract: Option<usize>,
    pub add: Option<usize>,
    pub ell_max: Option<usize>,
    pub criteria: Option<Vec<CriterionArg>>,
    pub format: Option<FormatArg>,
    pub eps_tail: Option<f64>,
    pub max_cutoff: Option<usize>,
    pub rel_tol: Option<f64>,
    pub tol: Option<f64>,
    pub families: Option<Vec<FamilyArg>>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    One(f64),
    Many(Vec<f64>),
}

impl ParamValue {
    fn into_vec(self) -> Vec<f64> {
        match self {
            ParamValue::One(v) => vec![v],
            ParamValue::Many(v) => v,
        }
    }
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_) => EXIT_USAGE,
            Error::UndefinedState { .. } => EXIT_UNDEFINED,
            _ => EXIT_ACCURACY,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let rendered = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{rendered}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{rendered}");
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(cli, stdout, stderr) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            if f.code == EXIT_USAGE {
                let _ = writeln!(stderr, "run `nclass --help` for usage");
            }
            f.code
        }
    }
}

fn execute(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, Failure> {
    let config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
            toml::from_str::<FileConfig>(&text)
                .map_err(|e| Failure::usage(format!("bad config {}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Criteria(args) => cmd_criteria(args, config, stdout, stderr),
        Command::Sweep(args) => cmd_sweep(args, config, stdout, stderr),
        Command::Selfcheck(args) => cmd_selfcheck(args, config, stdout),
    }
}

/// Flags merged over the config file over defaults.
struct Resolved {
    family: FamilyArg,
    modification: StateModification,
    ell_max: usize,
    criteria: Vec<CriterionArg>,
    format: FormatArg,
    policy: CutoffPolicy,
    out: Option<PathBuf>,
}

fn resolve(state: StateArgs, config: &FileConfig) -> Result<Resolved, Failure> {
    let family = state
        .family
        .or(config.family)
        .ok_or_else(|| Failure::usage("--family is required"))?;
    let modification = match (state.subtract, state.add) {
        (Some(n), None) => StateModification::subtract(n),
        (None, Some(m)) => StateModification::add(m),
        (None, None) => match (config.subtract, config.add) {
            (Some(_), Some(_)) => return Err(Failure::usage("config sets both subtract and add")),
            (Some(n), None) => StateModification::subtract(n),
            (None, Some(m)) => StateModification::add(m),
            (None, None) => StateModification::IDENTITY,
        },
        (Some(_), Some(_)) => unreachable!("clap rejects --subtract with --add"),
    };
    let ell_max = state.ell_max.or(config.ell_max).unwrap_or(DEFAULT_ELL_MAX);
    if ell_max == 0 {
        return Err(Failure::usage("--ell-max must be at least 1"));
    }
    let mut criteria = state
        .criteria
        .or_else(|| config.criteria.clone())
        .unwrap_or_else(|| ALL_CRITERIA.to_vec());
    // column order is fixed regardless of how the selection was written
    criteria.sort_by_key(|c| ALL_CRITERIA.iter().position(|a| a == c));
    criteria.dedup();
    let defaults = CutoffPolicy::default();
    let policy = CutoffPolicy {
        eps_tail: state.eps_tail.or(config.eps_tail).unwrap_or(defaults.eps_tail),
        max_cutoff: state.max_cutoff.or(config.max_cutoff).unwrap_or(defaults.max_cutoff),
        rel_tol: state.rel_tol.or(config.rel_tol).unwrap_or(defaults.rel_tol),
        ..defaults
    };
    policy.validate()?;
    Ok(Resolved {
        family,
        modification,
        ell_max,
        criteria,
        format: state.format.or(config.format).unwrap_or(FormatArg::Csv),
        policy,
        out: state.out.or_else(|| config.out.clone()),
    })
}

fn family_at(family: FamilyArg, param: f64) -> Result<StateFamily, Failure> {
    let state = match family {
        FamilyArg::Coherent => StateFamily::Coherent { alpha_sq: param },
        FamilyArg::Thermal => StateFamily::Thermal { nbar: param },
        FamilyArg::Squeezed => StateFamily::SqueezedVacuum { r: param },
        FamilyArg::Fock => {
            if param < 0.0 || param.fract() != 0.0 || !param.is_finite() {
                return Err(Failure::usage(format!(
                    "fock parameter must be a nonnegative integer, got {param}"
                )));
            }
            StateFamily::Fock { n: param as usize }
        }
    };
    state.validate()?;
    Ok(state)
}

/// Inclusive `start:stop:step` grid. Values are rounded to 15 significant
/// digits so that `0.1:1.0:0.1` yields `0.3`, not `0.30000000000000004`.
pub fn parse_range(range: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = range.split(':').collect();
    let [start, stop, step] = parts.as_slice() else {
        return Err(format!("expected start:stop:step, got {range:?}"));
    };
    let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("{s:?}: {e}"));
    let (start, stop, step) = (parse(start)?, parse(stop)?, parse(step)?);
    if !(step > 0.0) || !start.is_finite() || !stop.is_finite() {
        return Err("step must be positive and bounds finite".into());
    }
    if stop < start {
        return Err("stop must not be below start".into());
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|i| {
            let v = start + i as f64 * step;
            format!("{v:.14e}").parse().expect("formatted float parses")
        })
        .collect())
}

/// One table row: either a report or the reason it could not be produced.
struct Row {
    param: f64,
    outcome: Result<CriteriaReport, Error>,
}

impl Row {
    fn failed(&self) -> bool {
        match &self.outcome {
            Ok(report) => report.is_undefined_state(),
            Err(_) => true,
        }
    }

    fn flags(&self) -> Vec<String> {
        match &self.outcome {
            Ok(report) => report.flags.iter().map(Flag::token).collect(),
            Err(Error::Accuracy { .. }) => vec![Flag::AccuracyFailure.token()],
            Err(Error::UndefinedState { .. }) => vec!["undefined_state".into()],
            Err(Error::Cancellation { .. }) => vec!["cancellation_failure".into()],
            Err(Error::Overflow { .. }) => vec!["overflow".into()],
            Err(_) => vec!["error".into()],
        }
    }
}

fn columns(criteria: &[CriterionArg], ell_max: usize) -> Vec<String> {
    let mut cols = vec!["param".to_string(), "mean".to_string()];
    for c in criteria {
        match c {
            CriterionArg::Q => cols.push("Q".into()),
            CriterionArg::QEllNormal => cols.extend((1..=ell_max).map(|l| format!("Q_normal_{l}"))),
            CriterionArg::QEllCentral => cols.extend((1..=ell_max).map(|l| format!("Q_central_{l}"))),
            CriterionArg::DH => cols.extend((1..=ell_max).map(|l| format!("d_h_{l}"))),
            CriterionArg::A3 => cols.push("A3".into()),
        }
    }
    cols.push("flags".into());
    cols
}

fn cells(row: &Row, criteria: &[CriterionArg], ell_max: usize) -> Vec<CriterionValue> {
    let undefined = CriterionValue::Undefined;
    let report = row.outcome.as_ref().ok();
    let mut out = vec![CriterionValue::Value(row.param), report.map_or(undefined, |r| r.mean)];
    for c in criteria {
        match c {
            CriterionArg::Q => out.push(report.map_or(undefined, |r| r.mandel_q_closed_form)),
            CriterionArg::QEllNormal => {
                out.extend((1..=ell_max).map(|l| report.map_or(undefined, |r| r.q_ell_normal[&l])))
            }
            CriterionArg::QEllCentral => {
                out.extend((1..=ell_max).map(|l| report.map_or(undefined, |r| r.q_ell_central[&l])))
            }
            CriterionArg::DH => out.extend((1..=ell_max).map(|l| report.map_or(undefined, |r| r.lee_dh[&l]))),
            CriterionArg::A3 => out.push(report.map_or(undefined, |r| r.a3)),
        }
    }
    out
}

fn render(rows: &[Row], resolved: &Resolved, command: &str, grid: &[f64]) -> String {
    let cols = columns(&resolved.criteria, resolved.ell_max);
    match resolved.format {
        FormatArg::Csv => {
            let mut out = cols.join(",");
            out.push('\n');
            for row in rows {
                let mut fields: Vec<String> = cells(row, &resolved.criteria, resolved.ell_max)
                    .iter()
                    .map(ToString::to_string)
                    .collect();
                fields.push(row.flags().join(";"));
                out.push_str(&fields.join(","));
                out.push('\n');
            }
            out
        }
        FormatArg::Json => {
            let records: Vec<Value> = rows
                .iter()
                .map(|row| {
                    let mut obj = Map::new();
                    let values = cells(row, &resolved.criteria, resolved.ell_max);
                    for (name, value) in cols.iter().zip(&values) {
                        obj.insert(name.clone(), serde_json::to_value(value).expect("serializable"));
                    }
                    obj.insert("flags".into(), Value::String(row.flags().join(";")));
                    Value::Object(obj)
                })
                .collect();
            let criteria: Vec<Value> = resolved
                .criteria
                .iter()
                .map(|c| serde_json::to_value(c.to_possible_value().expect("no skipped variants").get_name()).unwrap())
                .collect();
            let doc = json!({
                "metadata": {
                    "tool": "nclass",
                    "version": env!("CARGO_PKG_VERSION"),
                    "command": command,
                    "family": format!("{:?}", resolved.family).to_lowercase(),
                    "params": grid,
                    "modification": resolved.modification.to_string(),
                    "ell_max": resolved.ell_max,
                    "criteria": criteria,
                    "policy": resolved.policy,
                },
                "rows": records,
            });
            let mut text = serde_json::to_string_pretty(&doc).expect("serializable");
            text.push('\n');
            text
        }
    }
}

fn emit(text: &str, out: &Option<PathBuf>, stdout: &mut dyn Write) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure {
            code: EXIT_USAGE,
            message: format!("cannot write {}: {e}", path.display()),
        }),
        None => stdout.write_all(text.as_bytes()).map_err(|e| Failure {
            code: EXIT_USAGE,
            message: format!("cannot write output: {e}"),
        }),
    }
}

fn evaluate_row(family: FamilyArg, param: f64, resolved: &Resolved) -> Result<Row, Failure> {
    let state = family_at(family, param)?;
    Ok(Row {
        param,
        outcome: evaluate_family(&state, resolved.modification, resolved.ell_max, &resolved.policy),
    })
}

fn cmd_criteria(
    args: CriteriaArgs,
    config: FileConfig,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32, Failure> {
    let param = match (args.param, config.param.clone()) {
        (Some(p), _) => p,
        (None, Some(ParamValue::One(p))) => p,
        (None, Some(ParamValue::Many(_))) => return Err(Failure::usage("criteria takes a single --param")),
        (None, None) => return Err(Failure::usage("--param is required")),
    };
    let resolved = resolve(args.state, &config)?;
    let row = evaluate_row(resolved.family, param, &resolved)?;
    match &row.outcome {
        Err(e @ Error::InvalidArgument(_)) => return Err(Failure::usage(e.to_string())),
        Err(e) => {
            let failure = Failure::from(e.clone());
            emit(&render(&[row], &resolved, "criteria", &[param]), &resolved.out, stdout)?;
            return Err(failure);
        }
        Ok(_) => {}
    }
    emit(&render(std::slice::from_ref(&row), &resolved, "criteria", &[param]), &resolved.out, stdout)?;
    if let Ok(report) = &row.outcome {
        if let Some(Flag::UndefinedState { index }) =
            report.flags.iter().find(|f| matches!(f, Flag::UndefinedState { .. }))
        {
            let _ = writeln!(
                stderr,
                "error: state annihilated: {} on {} leaves N_{index} = 0",
                resolved.modification,
                family_at(resolved.family, param)?
            );
            return Ok(EXIT_UNDEFINED);
        }
    }
    Ok(EXIT_OK)
}

fn cmd_sweep(
    args: SweepArgs,
    config: FileConfig,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32, Failure> {
    let grid = match (args.param, args.param_range) {
        (Some(values), None) => values,
        (None, Some(range)) => parse_range(&range).map_err(Failure::usage)?,
        (None, None) => match (config.param.clone(), config.param_range.clone()) {
            (Some(p), None) => p.into_vec(),
            (None, Some(range)) => parse_range(&range).map_err(Failure::usage)?,
            (Some(_), Some(_)) => return Err(Failure::usage("config sets both param and param-range")),
            (None, None) => return Err(Failure::usage("--param or --param-range is required")),
        },
        (Some(_), Some(_)) => unreachable!("clap rejects --param with --param-range"),
    };
    if grid.is_empty() {
        return Err(Failure::usage("parameter grid is empty"));
    }
    let resolved = resolve(args.state, &config)?;
    for &p in &grid {
        family_at(resolved.family, p)?;
    }

    let rows: Vec<Row> = grid
        .par_iter()
        .map(|&p| evaluate_row(resolved.family, p, &resolved))
        .collect::<Result<_, _>>()?;
    emit(&render(&rows, &resolved, "sweep", &grid), &resolved.out, stdout)?;

    if rows.iter().all(Row::failed) {
        let any_accuracy = rows.iter().any(|r| r.outcome.is_err());
        let _ = writeln!(stderr, "error: every row of the sweep failed");
        return Ok(if any_accuracy { EXIT_ACCURACY } else { EXIT_UNDEFINED });
    }
    Ok(EXIT_OK)
}

fn cmd_selfcheck(args: SelfcheckArgs, config: FileConfig, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let mut suite = EquivalenceConfig::default();
    if let Some(tol) = args.tol.or(config.tol) {
        if !(tol > 0.0) {
            return Err(Failure::usage("--tol must be positive"));
        }
        suite.tol_subtract = tol;
        suite.tol_add = tol;
    }
    if let Some(selected) = args.families.or_else(|| config.families.clone()) {
        suite.families = default_families()
            .into_iter()
            .filter(|f| {
                selected.iter().any(|s| {
                    matches!(
                        (s, f),
                        (FamilyArg::Coherent, StateFamily::Coherent { .. })
                            | (FamilyArg::Thermal, StateFamily::Thermal { .. })
                            | (FamilyArg::Fock, StateFamily::Fock { .. })
                            | (FamilyArg::Squeezed, StateFamily::SqueezedVacuum { .. })
                    )
                })
            })
            .collect();
    }
    if let Some(eps) = args.eps_tail.or(config.eps_tail) {
        suite.policy.eps_tail = eps;
    }
    if let Some(cap) = args.max_cutoff.or(config.max_cutoff) {
        suite.policy.max_cutoff = cap;
    }
    suite.policy.validate()?;

    let report = equivalence_suite(&suite)?;
    if let Some(path) = args.out.or(config.out) {
        emit(&report.to_text(), &Some(path), stdout)?;
    }

    let failures: Vec<_> = report.failures().collect();
    let mut text = format!(
        "selfcheck: {} cells over {} base states, {} failed\n",
        report.cells.len(),
        suite.families.len(),
        failures.len()
    );
    text.push_str(&format!(
        "tolerances: subtraction {:e}, addition {:e}\n",
        suite.tol_subtract, suite.tol_add
    ));
    if let Some(worst) = report.worst() {
        text.push_str(&format!(
            "worst cell: {}({}) {} {} deviation {:e} (tolerance {:e})\n",
            worst.family, worst.param, worst.modification, worst.quantity, worst.deviation, worst.tolerance
        ));
    }
    if report.exact_agreement() {
        text.push_str("exact agreement: every cell matches bit for bit\n");
    }
    for cell in failures.iter().take(20) {
        text.push_str(&format!(
            "FAIL {}({}) {} {}: shortcut {} oracle {} deviation {:e}\n",
            cell.family, cell.param, cell.modification, cell.quantity, cell.shortcut, cell.oracle, cell.deviation
        ));
    }
    if failures.len() > 20 {
        text.push_str(&format!("... and {} more\n", failures.len() - 20));
    }
    text.push_str(if report.passed() { "result: PASS\n" } else { "result: FAIL\n" });
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| Failure::usage(format!("cannot write output: {e}")))?;
    Ok(if report.passed() { EXIT_OK } else { EXIT_SELFCHECK })
}
