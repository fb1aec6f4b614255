//! Subcommand definitions and dispatch.

use super::config::{parse_config, ConfigError, ExperimentConfig};
use super::sweep::{read_csv, run_sweep, write_csv, SweepError, SweepOptions, SweepRow};
use crate::bayes::{PriorKind, PriorSpec};
use crate::fisher::{
    fisher_anticausal_labeled, fisher_anticausal_unlabeled, fisher_causal_conditional, rate_constants, FisherError,
    FisherKind, FisherReport,
};
use crate::models::{toy, Direction, DomainPair, ModelError, Params, Scenario, ScenarioName};
use crate::oracle::{exact_cmi, exact_expected_excess, EnumSpec, OracleError};
use crate::par::{configure_threads, ExecMode};
use crate::rates::{
    compare_directions, fit_asymptote, fit_reciprocal_linear, CurveAxis, FitKind, RatesError, RiskCurve,
};
use crate::risk::{cmi_bound, BoundSpec, EstimatorKind, Loss, RiskError, RiskEstimate, Trainer, TrainerOptions};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Fisher(#[from] FisherError),
    #[error(transparent)]
    Rates(#[from] RatesError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "risk-lab",
    version,
    about = "Excess-risk laboratory for causal and anti-causal domain adaptation"
)]
pub struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a Monte-Carlo risk sweep and write CSV rows.
    Simulate(SimulateArgs),
    /// Exact excess risk and exact CMI by enumerating tiny datasets.
    Oracle(OracleArgs),
    /// Fisher information matrices and asymptotic rate constants.
    Fisher(FisherArgs),
    /// Fit reciprocal-linear and asymptote models to a sweep CSV.
    Fit(FitArgs),
    /// Recommend a modelling direction from the predicted rates.
    Advise(AdviseArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output CSV; defaults to the config's `output`, then standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fill the wall_ms column (makes output run-dependent).
    #[arg(long)]
    pub timing: bool,
    /// Run trials on the calling thread only.
    #[arg(long)]
    pub sequential: bool,
}

/// Either a config file or a toy scenario.
#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, conflicts_with_all = ["direction", "scenario"])]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, requires = "scenario")]
    pub direction: Option<DirectionArg>,
    #[arg(long, value_enum, requires = "direction")]
    pub scenario: Option<ScenarioArg>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 1)]
    pub m: usize,
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = EstimatorArg::BayesMixture)]
    pub estimator: EstimatorArg,
    /// Anti-causal prior grid nodes per axis (toy models only).
    #[arg(long, default_value_t = 21)]
    pub grid_points: usize,
    /// Also report the exact 0-1 excess risk and its CMI bound.
    #[arg(long)]
    pub zero_one: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Csv,
}

#[derive(Debug, Args)]
pub struct FisherArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitChoice {
    Reciprocal,
    Asymptote,
    Both,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Sweep CSV written by `simulate`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FitChoice::Both)]
    pub kind: FitChoice,
    /// Size axis; inferred from which of m and n vary when omitted.
    #[arg(long, value_enum)]
    pub axis: Option<AxisArg>,
}

#[derive(Debug, Args)]
pub struct AdviseArgs {
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 2)]
    pub kp: usize,
    #[arg(long)]
    pub m: u64,
    #[arg(long)]
    pub n: u64,
    /// Scenario name for both directions (general or ssl).
    #[arg(long, value_enum, required_unless_present_all = ["causal_scenario", "anticausal_scenario"])]
    pub scenario: Option<ScenarioArg>,
    #[arg(long, value_enum)]
    pub causal_scenario: Option<ScenarioArg>,
    #[arg(long, value_enum)]
    pub anticausal_scenario: Option<ScenarioArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    Causal,
    Anticausal,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::Causal => Direction::Causal,
            DirectionArg::Anticausal => Direction::AntiCausal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    General,
    Covariate,
    Concept,
    Target,
    Conditional,
    Ssl,
}

impl From<ScenarioArg> for ScenarioName {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::General => ScenarioName::General,
            ScenarioArg::Covariate => ScenarioName::Covariate,
            ScenarioArg::Concept => ScenarioName::Concept,
            ScenarioArg::Target => ScenarioName::Target,
            ScenarioArg::Conditional => ScenarioName::Conditional,
            ScenarioArg::Ssl => ScenarioName::Ssl,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    PluginKt,
    PluginMle,
    BayesMixture,
    NaiveSource,
    FrozenSource,
    FrozenTarget,
}

impl From<EstimatorArg> for EstimatorKind {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::PluginKt => EstimatorKind::PluginKt,
            EstimatorArg::PluginMle => EstimatorKind::PluginMle,
            EstimatorArg::BayesMixture => EstimatorKind::BayesMixture,
            EstimatorArg::NaiveSource => EstimatorKind::NaiveSource,
            EstimatorArg::FrozenSource => EstimatorKind::FrozenSource,
            EstimatorArg::FrozenTarget => EstimatorKind::FrozenTarget,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    M,
    N,
    MPlusN,
}

impl From<AxisArg> for CurveAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::M => CurveAxis::M,
            AxisArg::N => CurveAxis::N,
            AxisArg::MPlusN => CurveAxis::MPlusN,
        }
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(parse_config(&text)?)
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

struct Resolved {
    pair: DomainPair,
    scenario: Scenario,
    options: TrainerOptions,
}

fn resolve_model(a: &ModelArgs, grid_points: usize) -> Result<Resolved> {
    if let Some(path) = &a.config {
        let exp = load_config(path)?.build()?;
        return Ok(Resolved {
            pair: exp.pair,
            scenario: exp.scenario,
            options: exp.options,
        });
    }
    let (Some(d), Some(s)) = (a.direction, a.scenario) else {
        return Err(CliError::Usage("pass --config, or --direction with --scenario".into()));
    };
    let scenario = Scenario::from_name(d.into(), s.into())?;
    Ok(Resolved {
        pair: toy::domain_pair(&scenario),
        scenario,
        options: TrainerOptions {
            prior: PriorSpec::from_kind(PriorKind::Jeffreys, grid_points),
            ..TrainerOptions::default()
        },
    })
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let opts = SweepOptions {
        repeats: a.repeats,
        seed: a.seed,
        mode: if a.sequential {
            ExecMode::Sequential
        } else {
            ExecMode::Parallel
        },
        timing: a.timing,
    };
    let rows = run_sweep(&cfg, &opts)?;
    let target = a.out.as_deref().or(cfg.output.as_deref());
    let mut out = open_out(target)?;
    write_csv(&rows, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn oracle(a: &OracleArgs, out: &mut dyn Write) -> Result<()> {
    let r = resolve_model(&a.model, a.grid_points)?;
    let spec = EnumSpec::for_pair(&r.pair, a.m, a.n);
    let trainer = Trainer::new(r.pair.clone(), r.scenario, a.estimator.into(), r.options)?;
    let risk = exact_expected_excess(&trainer, &spec, Loss::Log, ExecMode::Parallel)?;
    let cmi = exact_cmi(&r.pair, &r.scenario, &spec, &r.options.prior)?;
    writeln!(out, "scenario = {}", r.scenario)?;
    writeln!(out, "estimator = {}", trainer.kind())?;
    writeln!(out, "m = {}", a.m)?;
    writeln!(out, "n = {}", a.n)?;
    writeln!(out, "datasets = {}", spec.size())?;
    writeln!(out, "exact_risk_nats = {risk:.15e}")?;
    writeln!(out, "exact_cmi_nats = {cmi:.15e}")?;
    writeln!(out, "difference = {:.3e}", risk - cmi)?;
    if a.zero_one {
        let zo = exact_expected_excess(&trainer, &spec, Loss::ZeroOne, ExecMode::Parallel)?;
        let bound = cmi_bound(cmi, BoundSpec::Bounded { m: 1.0 })?;
        writeln!(out, "exact_zero_one_excess = {zo:.15e}")?;
        writeln!(out, "cmi_bound = {bound:.15e}")?;
    }
    Ok(())
}

fn fisher_reports(d: &DomainPair) -> Result<Vec<FisherReport>> {
    Ok(match (d.source(), d.target()) {
        (Params::Causal(s), Params::Causal(t)) => {
            let src = fisher_causal_conditional(s, s.theta_x())?;
            let mut tgt = fisher_causal_conditional(t, t.theta_x())?;
            tgt.kind = FisherKind::LabeledTarget;
            vec![src, tgt]
        }
        (Params::AntiCausal(s), Params::AntiCausal(t)) => {
            let mut src = fisher_anticausal_labeled(s)?;
            src.kind = FisherKind::LabeledSource;
            vec![src, fisher_anticausal_labeled(t)?, fisher_anticausal_unlabeled(t)?]
        }
        _ => unreachable!("domain pairs share a direction"),
    })
}

/// One line of `fisher --format csv`.
#[derive(Debug, Serialize)]
struct FisherRow {
    section: &'static str,
    name: String,
    row: String,
    col: String,
    value: f64,
}

fn fisher_rows(d: &DomainPair, s: &Scenario) -> Result<Vec<FisherRow>> {
    let mut rows = Vec::new();
    for r in fisher_reports(d)? {
        for i in 0..r.dim() {
            for j in 0..r.dim() {
                rows.push(FisherRow {
                    section: "matrix",
                    name: r.kind.to_string(),
                    row: r.labels[i].clone(),
                    col: r.labels[j].clone(),
                    value: r.matrix[(i, j)],
                });
            }
        }
    }
    match rate_constants(s, d) {
        Ok(cs) => rows.extend(cs.into_iter().map(|c| FisherRow {
            section: "rate",
            name: c.formula_id.to_string(),
            row: c.size_axis.to_string(),
            col: String::new(),
            value: c.predicted_risk_times_size,
        })),
        Err(FisherError::UnsupportedScenario {
            no_source_plateau,
            source_plateau,
            ..
        }) => {
            for (name, value) in [("no_source", no_source_plateau), ("source_mechanism", source_plateau)] {
                rows.push(FisherRow {
                    section: "plateau",
                    name: name.into(),
                    row: String::new(),
                    col: String::new(),
                    value,
                });
            }
        }
        Err(e) => return Err(e.into()),
    }
    Ok(rows)
}

fn write_fisher_text(d: &DomainPair, s: &Scenario, out: &mut dyn Write) -> Result<()> {
    writeln!(out, "{s}")?;
    for r in fisher_reports(d)? {
        writeln!(out)?;
        writeln!(out, "{} (per observation)", r.kind)?;
        let w = r.labels.iter().map(|l| l.len()).max().unwrap_or(0).max(12);
        write!(out, "{:w$}", "")?;
        for l in &r.labels {
            write!(out, "  {l:>w$}")?;
        }
        writeln!(out)?;
        for (i, l) in r.labels.iter().enumerate() {
            write!(out, "{l:w$}")?;
            for j in 0..r.dim() {
                write!(out, "  {:>w$.6}", r.matrix[(i, j)])?;
            }
            writeln!(out)?;
        }
    }
    writeln!(out)?;
    for row in fisher_rows(d, s)?.into_iter().filter(|r| r.section != "matrix") {
        match row.section {
            "rate" => writeln!(out, "rate {}: risk x {} -> {:.6}", row.name, row.row, row.value)?,
            _ => writeln!(out, "plateau {}: {:.9}", row.name, row.value)?,
        }
    }
    Ok(())
}

pub fn fisher(a: &FisherArgs, out: &mut dyn Write) -> Result<()> {
    let r = resolve_model(&a.model, crate::bayes::DEFAULT_GRID_POINTS)?;
    match a.format {
        OutputFormat::Text => write_fisher_text(&r.pair, &r.scenario, out),
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for row in fisher_rows(&r.pair, &r.scenario)? {
                w.serialize(row)?;
            }
            w.flush()?;
            Ok(())
        }
    }
}

/// One line of `fit` output.
#[derive(Debug, Serialize)]
pub struct FitRow {
    pub direction: Direction,
    pub scenario: ScenarioName,
    pub estimator: EstimatorKind,
    pub axis: CurveAxis,
    pub kind: FitKind,
    pub points: usize,
    pub slope: f64,
    pub intercept: f64,
    pub lambda: f64,
    pub lambda_step: f64,
    pub r2: f64,
}

fn infer_axis(rows: &[&SweepRow]) -> Result<CurveAxis> {
    let same_m = rows.windows(2).all(|w| w[0].m == w[1].m);
    let same_n = rows.windows(2).all(|w| w[0].n == w[1].n);
    match (same_m, same_n) {
        (true, false) => Ok(CurveAxis::N),
        (false, true) => Ok(CurveAxis::M),
        _ if rows.iter().all(|r| r.m == r.n) => Ok(CurveAxis::MPlusN),
        _ => Err(CliError::Usage("cannot infer the size axis; pass --axis".into())),
    }
}

/// Builds one curve per (direction, scenario, estimator) group, in order of
/// first appearance.
pub fn curves(rows: &[SweepRow], axis: Option<CurveAxis>) -> Result<Vec<(&SweepRow, RiskCurve)>> {
    let mut keys: Vec<(Direction, ScenarioName, EstimatorKind)> = Vec::new();
    for r in rows {
        let k = (r.direction, r.scenario, r.estimator);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let mut out = Vec::new();
    for k in keys {
        let group: Vec<&SweepRow> = rows
            .iter()
            .filter(|r| (r.direction, r.scenario, r.estimator) == k)
            .collect();
        let axis = match axis {
            Some(a) => a,
            None => infer_axis(&group)?,
        };
        let points = group
            .iter()
            .map(|r| {
                let size = match axis {
                    CurveAxis::M => r.m,
                    CurveAxis::N => r.n,
                    CurveAxis::MPlusN => r.m + r.n,
                };
                let est = RiskEstimate {
                    mean: r.risk_nats,
                    stderr: r.stderr_nats,
                    repeats: r.repeats,
                    failures: r.failures,
                };
                (size, est)
            })
            .collect();
        out.push((group[0], RiskCurve::new(axis, points)?));
    }
    Ok(out)
}

pub fn fit(a: &FitArgs, out: &mut dyn Write) -> Result<()> {
    let file = File::open(&a.input).map_err(|source| CliError::Read {
        path: a.input.clone(),
        source,
    })?;
    let rows = read_csv(file)?;
    let mut w = csv::Writer::from_writer(out);
    for (first, curve) in curves(&rows, a.axis.map(Into::into))? {
        let mut fits = Vec::new();
        if a.kind != FitChoice::Asymptote {
            fits.push(fit_reciprocal_linear(&curve)?);
        }
        if a.kind != FitChoice::Reciprocal {
            fits.push(fit_asymptote(&curve)?);
        }
        for f in fits {
            w.serialize(FitRow {
                direction: first.direction,
                scenario: first.scenario,
                estimator: first.estimator,
                axis: curve.axis(),
                kind: f.kind,
                points: curve.points().len(),
                slope: f.slope,
                intercept: f.intercept,
                lambda: f.lambda,
                lambda_step: f.lambda_step,
                r2: f.r2,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn advise(a: &AdviseArgs, out: &mut dyn Write) -> Result<()> {
    let pick = |specific: Option<ScenarioArg>, d: Direction| -> Result<Scenario> {
        let name = specific
            .or(a.scenario)
            .ok_or_else(|| CliError::Usage(format!("no scenario for the {d} direction")))?;
        Ok(Scenario::from_name(d, name.into())?)
    };
    let c = pick(a.causal_scenario, Direction::Causal)?;
    let ac = pick(a.anticausal_scenario, Direction::AntiCausal)?;
    let r = compare_directions(a.k, a.kp, a.m, a.n, &c, &ac)?;
    writeln!(out, "{}", r.choice)?;
    writeln!(out, "causal_rate = {} ({c})", r.causal)?;
    writeln!(out, "anticausal_rate = {} ({ac})", r.anticausal)?;
    Ok(())
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    if let Err(e) = configure_threads(cli.threads) {
        eprintln!("warning: thread pool already configured: {e}");
    }
    let stdout = io::stdout();
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Oracle(a) => oracle(a, &mut stdout.lock()),
        Command::Fisher(a) => {
            let mut out = open_out(a.out.as_deref())?;
            fisher(a, &mut out)?;
            Ok(out.flush()?)
        }
        Command::Fit(a) => {
            let mut out = open_out(a.out.as_deref())?;
            fit(a, &mut out)?;
            Ok(out.flush()?)
        }
        Command::Advise(a) => advise(a, &mut stdout.lock()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("risk-lab").chain(args.iter().copied())).unwrap()
    }

    fn capture(f: impl FnOnce(&mut dyn Write) -> Result<()>) -> String {
        let mut buf = Vec::new();
        f(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn unknown_subcommand_is_an_error() {
        assert!(Cli::try_parse_from(["risk-lab", "frobnicate"]).is_err());
        assert!(Cli::try_parse_from(["risk-lab"]).is_err());
    }

    #[test]
    fn advise_prints_choice_first() {
        let cli = parse(&[
            "advise",
            "--k",
            "2",
            "--m",
            "1000000",
            "--n",
            "100",
            "--scenario",
            "ssl",
        ]);
        let Command::Advise(a) = &cli.command else { panic!() };
        let text = capture(|o| advise(a, o));
        assert_eq!(text.lines().next(), Some("causal"));
        let cli = parse(&[
            "advise",
            "--k",
            "4",
            "--m",
            "100",
            "--n",
            "1000000",
            "--scenario",
            "ssl",
        ]);
        let Command::Advise(a) = &cli.command else { panic!() };
        assert_eq!(capture(|o| advise(a, o)).lines().next(), Some("anticausal"));
    }

    #[test]
    fn oracle_reports_identity() {
        let cli = parse(&[
            "oracle",
            "--direction",
            "anticausal",
            "--scenario",
            "ssl",
            "--m",
            "1",
            "--n",
            "1",
        ]);
        let Command::Oracle(a) = &cli.command else { panic!() };
        let text = capture(|o| oracle(a, o));
        let diff: f64 = text
            .lines()
            .find_map(|l| l.strip_prefix("difference = "))
            .unwrap()
            .parse()
            .unwrap();
        assert!(diff.abs() < 1e-10, "{text}");
    }

    #[test]
    fn fisher_text_shows_labeled_block() {
        let cli = parse(&["fisher", "--direction", "anticausal", "--scenario", "general"]);
        let Command::Fisher(a) = &cli.command else { panic!() };
        let text = capture(|o| fisher(a, o));
        assert!(text.contains("57.833333"));
        assert!(text.contains("30.916667"));
        assert!(text.contains("anticausal_general_trace"));
    }

    #[test]
    fn fisher_csv_has_plateaus_for_causal_general() {
        let cli = parse(&[
            "fisher",
            "--direction",
            "causal",
            "--scenario",
            "general",
            "--format",
            "csv",
        ]);
        let Command::Fisher(a) = &cli.command else { panic!() };
        let text = capture(|o| fisher(a, o));
        assert!(text.starts_with("section,name,row,col,value\n"));
        assert!(text.contains("plateau,no_source,,,0.0306384"));
    }
}
