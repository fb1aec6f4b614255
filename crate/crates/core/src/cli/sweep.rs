//! Deterministic risk sweeps and their CSV form.

use super::config::{ConfigError, ExperimentConfig};
use crate::models::{Direction, ScenarioName};
use crate::par::ExecMode;
use crate::risk::{EstimatorKind, RiskError, Trainer};
use crate::seed;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::time::Instant;
use thiserror::Error;

/// Environment variable consulted when neither the command line nor the
/// config names a seed.
pub const SEED_ENV: &str = "RISK_LAB_SEED";

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("sweep point {value}: {source}")]
    Point {
        value: u64,
        #[source]
        source: RiskError,
    },
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error("{SEED_ENV} = {0:?} is not an unsigned integer")]
    BadSeedEnv(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SweepError>;

/// One CSV row: the risk estimate at one sweep value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub direction: Direction,
    pub scenario: ScenarioName,
    pub estimator: EstimatorKind,
    pub m: u64,
    pub n: u64,
    pub repeats: usize,
    pub failures: usize,
    pub risk_nats: f64,
    /// 0 when only one trial succeeded.
    pub stderr_nats: f64,
    /// Seed of this sweep point; rerunning the point alone with it
    /// reproduces the row.
    pub seed: u64,
    /// 0 unless timing was requested, so reruns stay byte-identical.
    pub wall_ms: u64,
}

pub const CSV_COLUMNS: [&str; 11] = [
    "direction",
    "scenario",
    "estimator",
    "m",
    "n",
    "repeats",
    "failures",
    "risk_nats",
    "stderr_nats",
    "seed",
    "wall_ms",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepOptions {
    pub repeats: Option<usize>,
    pub seed: Option<u64>,
    pub mode: ExecMode,
    pub timing: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            repeats: None,
            seed: None,
            mode: ExecMode::Parallel,
            timing: false,
        }
    }
}

/// Command line, then config, then the environment, then 0.
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>, env: Option<&str>) -> Result<u64> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match env {
        Some(v) => v.trim().parse().map_err(|_| SweepError::BadSeedEnv(v.to_string())),
        None => Ok(0),
    }
}

/// Seed of one sweep point, keyed by its value so that adding or removing
/// other points leaves it unchanged.
pub fn point_seed(base: u64, value: u64) -> u64 {
    seed::derive(base, value)
}

pub fn run_sweep(cfg: &ExperimentConfig, opts: &SweepOptions) -> Result<Vec<SweepRow>> {
    let exp = cfg.build()?;
    let env = std::env::var(SEED_ENV).ok();
    let base = resolve_seed(opts.seed, cfg.sweep.base_seed, env.as_deref())?;
    let repeats = opts.repeats.unwrap_or(cfg.sweep.repeats);
    let trainer = Trainer::new(exp.pair, exp.scenario, exp.kind, exp.options)?;

    let mut rows = Vec::with_capacity(cfg.sweep.values.len());
    for &value in &cfg.sweep.values {
        let (m, n) = cfg.sweep.sizes(value);
        let seed = point_seed(base, value);
        let start = Instant::now();
        let est = trainer
            .risk_mc(m as usize, n as usize, repeats, seed, opts.mode)
            .map_err(|source| SweepError::Point { value, source })?;
        rows.push(SweepRow {
            direction: exp.scenario.direction,
            scenario: exp.scenario.name(),
            estimator: exp.kind,
            m,
            n,
            repeats,
            failures: est.failures,
            risk_nats: est.mean,
            stderr_nats: est.stderr,
            seed,
            wall_ms: if opts.timing {
                start.elapsed().as_millis() as u64
            } else {
                0
            },
        });
    }
    Ok(rows)
}

/// Writes the header and rows; LF line endings, `.` decimals.
pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_reader(input);
    let rows = r.deserialize().collect::<std::result::Result<Vec<SweepRow>, _>>()?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::config::{EstimatorConfig, ModelConfig, SweepAxis, SweepConfig};
    use crate::models::{toy, Scenario};

    fn cfg(values: Vec<u64>, repeats: usize) -> ExperimentConfig {
        let s = Scenario::new(Direction::Causal, true, true);
        ExperimentConfig {
            scenario: s.name(),
            output: None,
            model: ModelConfig::from_pair(&toy::domain_pair(&s)),
            estimator: EstimatorConfig::default(),
            sweep: SweepConfig {
                axis: SweepAxis::M,
                values,
                fixed: 20,
                repeats,
                base_seed: Some(99),
            },
        }
    }

    fn to_string(rows: &[SweepRow]) -> String {
        let mut buf = Vec::new();
        write_csv(rows, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn seed_priority() {
        assert_eq!(resolve_seed(Some(1), Some(2), Some("3")).unwrap(), 1);
        assert_eq!(resolve_seed(None, Some(2), Some("3")).unwrap(), 2);
        assert_eq!(resolve_seed(None, None, Some(" 3 ")).unwrap(), 3);
        assert_eq!(resolve_seed(None, None, None).unwrap(), 0);
        assert!(matches!(
            resolve_seed(None, None, Some("x")),
            Err(SweepError::BadSeedEnv(_))
        ));
    }

    #[test]
    fn csv_schema_and_round_trip() {
        let rows = run_sweep(&cfg(vec![10, 20, 40], 50), &SweepOptions::default()).unwrap();
        let text = to_string(&rows);
        let header = text.lines().next().unwrap();
        assert_eq!(header, CSV_COLUMNS.join(","));
        assert!(!text.contains('\r'));
        assert_eq!(text.lines().count(), 4);
        assert_eq!(read_csv(text.as_bytes()).unwrap(), rows);
        let empty = to_string(&[]);
        assert_eq!(empty.trim_end(), header);
    }

    #[test]
    fn deterministic_and_independent_of_other_points() {
        let opts = SweepOptions::default();
        let a = run_sweep(&cfg(vec![10, 20, 40], 50), &opts).unwrap();
        let b = run_sweep(&cfg(vec![10, 20, 40], 50), &opts).unwrap();
        assert_eq!(to_string(&a), to_string(&b));
        let seq = run_sweep(
            &cfg(vec![10, 20, 40], 50),
            &SweepOptions {
                mode: ExecMode::Sequential,
                ..opts
            },
        )
        .unwrap();
        assert_eq!(to_string(&a), to_string(&seq));
        let c = run_sweep(&cfg(vec![5, 20, 80], 50), &opts).unwrap();
        assert_eq!(a[1], c[1]);
    }

    #[test]
    fn single_repeat_has_zero_stderr() {
        let rows = run_sweep(&cfg(vec![10, 20, 40, 80], 1), &SweepOptions::default()).unwrap();
        assert!(rows.iter().all(|r| r.stderr_nats == 0.0 && r.repeats == 1));
    }

    #[test]
    fn overrides_apply() {
        let rows = run_sweep(
            &cfg(vec![10], 50),
            &SweepOptions {
                repeats: Some(7),
                seed: Some(3),
                ..SweepOptions::default()
            },
        )
        .unwrap();
        assert_eq!(rows[0].repeats, 7);
        assert_eq!(rows[0].seed, point_seed(3, 10));
    }
}
