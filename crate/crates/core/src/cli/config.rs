//! Experiment configuration files (TOML).
//!
//! ```toml
//! scenario = "ssl"                 # general | covariate | concept | target | conditional | ssl
//!
//! [model]
//! direction = "causal"             # causal | anticausal
//! k = 4
//! [model.source]                   # causal: theta_x, theta_yx
//! theta_x = [0.25, 0.25, 0.25, 0.25]
//! theta_yx = [0.3, 0.4, 0.5, 0.6]
//! [model.target]
//! theta_x = [0.25, 0.25, 0.25, 0.25]
//! theta_yx = [0.3, 0.4, 0.5, 0.6]
//!
//! [estimator]                      # all keys optional
//! kind = "plugin_kt"
//!
//! [sweep]
//! axis = "m"                       # m | n | m_and_n
//! values = [500, 1000, 2000]
//! fixed = 2000                     # size of the other sample
//! repeats = 3000
//! base_seed = 7                    # optional
//! ```
//!
//! Anti-causal models replace the tables with two `[[model.constraints]]`
//! entries (`base`, `coef`; first for Y = 0) and `theta_y`, `theta = [θ_0, θ_1]`
//! in `[model.source]` / `[model.target]`.

use crate::bayes::{PriorKind, PriorSpec, DEFAULT_GRID_POINTS};
use crate::estimators::EmOptions;
use crate::models::{
    validate_scenario, AffineConstraint, AntiCausalParams, Categorical, CausalParams, Component, Direction, DomainPair,
    ModelError, Params, Scenario, ScenarioName, LABELS,
};
use crate::risk::{EstimatorKind, TrainerOptions};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("{field}: {source}")]
    Field {
        field: String,
        #[source]
        source: ModelError,
    },
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("scenario {scenario} does not match the parameter tables: {reason}")]
    ScenarioParameterMismatch { scenario: String, reason: String },
    #[error("config serialization failed: {0}")]
    Serialize(String),
}

pub type Result<T> = std::result::Result<T, ConfigError>;

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

fn at(field: impl Into<String>) -> impl FnOnce(ModelError) -> ConfigError {
    let field = field.into();
    move |source| ConfigError::Field { field, source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub model: ModelConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    pub sweep: SweepConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "direction", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelConfig {
    Causal {
        k: usize,
        source: CausalTable,
        target: CausalTable,
    },
    Anticausal {
        k: usize,
        constraints: Vec<ConstraintTable>,
        source: AntiCausalTable,
        target: AntiCausalTable,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CausalTable {
    pub theta_x: Vec<f64>,
    pub theta_yx: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintTable {
    pub base: Vec<f64>,
    pub coef: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AntiCausalTable {
    pub theta_y: f64,
    pub theta: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    pub mle_clamp: f64,
    pub em: EmConfig,
    pub prior: PriorConfig,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            kind: EstimatorKind::PluginKt,
            mle_clamp: TrainerOptions::default().mle_clamp,
            em: EmConfig::default(),
            prior: PriorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub inner_tol: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        let d = EmOptions::default();
        Self {
            tol: d.tol,
            max_iter: d.max_iter,
            restarts: d.restarts,
            inner_tol: d.inner_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub kind: PriorKind,
    pub grid_points: usize,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            kind: PriorKind::Jeffreys,
            grid_points: DEFAULT_GRID_POINTS,
        }
    }
}

/// Which sample size a sweep varies; `m_and_n` sets both to the value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    M,
    N,
    MAndN,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<u64>,
    #[serde(default)]
    pub fixed: u64,
    pub repeats: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_seed: Option<u64>,
}

impl SweepConfig {
    /// `(m, n)` for one sweep value.
    pub fn sizes(&self, value: u64) -> (u64, u64) {
        match self.axis {
            SweepAxis::M => (value, self.fixed),
            SweepAxis::N => (self.fixed, value),
            SweepAxis::MAndN => (value, value),
        }
    }
}

/// Everything a sweep needs, built from a validated config.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub pair: DomainPair,
    pub scenario: Scenario,
    pub kind: EstimatorKind,
    pub options: TrainerOptions,
}

fn categorical(field: &str, probs: &[f64], k: usize) -> Result<Categorical> {
    if probs.len() != k {
        return Err(invalid(field, format!("expected {k} entries, got {}", probs.len())));
    }
    Categorical::new(probs.to_vec()).map_err(at(field))
}

fn causal_params(side: &str, t: &CausalTable, k: usize) -> Result<CausalParams> {
    let theta_x = categorical(&format!("model.{side}.theta_x"), &t.theta_x, k)?;
    let field = format!("model.{side}.theta_yx");
    if t.theta_yx.len() != k {
        return Err(invalid(
            field,
            format!("expected {k} entries, got {}", t.theta_yx.len()),
        ));
    }
    CausalParams::new(theta_x, t.theta_yx.clone()).map_err(at(field))
}

fn anticausal_params(side: &str, t: &AntiCausalTable, cons: &[AffineConstraint; 2]) -> Result<AntiCausalParams> {
    let comps = (0..LABELS)
        .map(|y| Component::new(cons[y].clone(), t.theta[y]).map_err(at(format!("model.{side}.theta[{y}]"))))
        .collect::<Result<Vec<_>>>()?;
    AntiCausalParams::new(t.theta_y, comps).map_err(at(format!("model.{side}.theta_y")))
}

impl ModelConfig {
    pub fn direction(&self) -> Direction {
        match self {
            ModelConfig::Causal { .. } => Direction::Causal,
            ModelConfig::Anticausal { .. } => Direction::AntiCausal,
        }
    }

    pub fn domain_pair(&self) -> Result<DomainPair> {
        let (source, target) = match self {
            ModelConfig::Causal { k, source, target } => (
                Params::Causal(causal_params("source", source, *k)?),
                Params::Causal(causal_params("target", target, *k)?),
            ),
            ModelConfig::Anticausal {
                k,
                constraints,
                source,
                target,
            } => {
                if constraints.len() != LABELS {
                    return Err(invalid(
                        "model.constraints",
                        format!("expected {LABELS} tables, got {}", constraints.len()),
                    ));
                }
                let mut built = Vec::with_capacity(LABELS);
                for (y, c) in constraints.iter().enumerate() {
                    let field = format!("model.constraints[{y}]");
                    if c.base.len() != *k || c.coef.len() != *k {
                        return Err(invalid(field, format!("base and coef need {k} entries")));
                    }
                    built.push(AffineConstraint::new(c.base.clone(), c.coef.clone()).map_err(at(field))?);
                }
                let cons: [AffineConstraint; 2] = [built[0].clone(), built[1].clone()];
                (
                    Params::AntiCausal(anticausal_params("source", source, &cons)?),
                    Params::AntiCausal(anticausal_params("target", target, &cons)?),
                )
            }
        };
        DomainPair::new(source, target).map_err(at("model"))
    }

    /// Table form of a domain pair.
    pub fn from_pair(d: &DomainPair) -> Self {
        match (d.source(), d.target()) {
            (Params::Causal(s), Params::Causal(t)) => {
                let table = |p: &CausalParams| CausalTable {
                    theta_x: p.theta_x().probs().to_vec(),
                    theta_yx: p.theta_yx().to_vec(),
                };
                ModelConfig::Causal {
                    k: d.k(),
                    source: table(s),
                    target: table(t),
                }
            }
            (Params::AntiCausal(s), Params::AntiCausal(t)) => {
                let table = |p: &AntiCausalParams| AntiCausalTable {
                    theta_y: p.theta_y(),
                    theta: [p.component(0).theta(), p.component(1).theta()],
                };
                ModelConfig::Anticausal {
                    k: d.k(),
                    constraints: t
                        .constraints()
                        .iter()
                        .map(|c| ConstraintTable {
                            base: c.base().to_vec(),
                            coef: c.coef().to_vec(),
                        })
                        .collect(),
                    source: table(s),
                    target: table(t),
                }
            }
            _ => unreachable!("domain pairs share a direction"),
        }
    }
}

impl ExperimentConfig {
    /// Checks every invariant and assembles the experiment.
    pub fn build(&self) -> Result<Experiment> {
        let direction = self.model.direction();
        let scenario = Scenario::from_name(direction, self.scenario).map_err(|e| invalid("scenario", e.to_string()))?;
        let pair = self.model.domain_pair()?;
        validate_scenario(&scenario, &pair).map_err(|e| ConfigError::ScenarioParameterMismatch {
            scenario: scenario.to_string(),
            reason: match e {
                ModelError::ScenarioParameterMismatch(r) => r,
                other => other.to_string(),
            },
        })?;

        let e = &self.estimator;
        let em = EmOptions {
            tol: e.em.tol,
            max_iter: e.em.max_iter,
            restarts: e.em.restarts,
            inner_tol: e.em.inner_tol,
            seed: 0,
        };
        em.validate().map_err(|err| invalid("estimator.em", err.to_string()))?;
        let prior = PriorSpec::from_kind(e.prior.kind, e.prior.grid_points);
        prior
            .validate()
            .map_err(|err| invalid("estimator.prior", err.to_string()))?;
        if !(e.mle_clamp > 0.0 && e.mle_clamp < 0.5) {
            return Err(invalid("estimator.mle_clamp", "must lie in (0, 0.5)"));
        }

        let s = &self.sweep;
        if s.values.is_empty() {
            return Err(invalid("sweep.values", "at least one value is required"));
        }
        if let Some(i) = (1..s.values.len()).find(|&i| s.values[i] <= s.values[i - 1]) {
            return Err(invalid(
                format!("sweep.values[{i}]"),
                "values must be strictly increasing",
            ));
        }
        if s.repeats == 0 {
            return Err(invalid("sweep.repeats", "must be at least 1"));
        }

        Ok(Experiment {
            pair,
            scenario,
            kind: e.kind,
            options: TrainerOptions {
                em,
                prior,
                mle_clamp: e.mle_clamp,
            },
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| ConfigError::Serialize(e.to_string()))
    }
}

/// Parses and validates a config.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.build()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::toy;

    fn causal_text(source_x: &str) -> String {
        format!(
            r#"
scenario = "covariate"

[model]
direction = "causal"
k = 4
[model.source]
theta_x = {source_x}
theta_yx = [0.3, 0.4, 0.5, 0.6]
[model.target]
theta_x = [0.25, 0.25, 0.25, 0.25]
theta_yx = [0.3, 0.4, 0.5, 0.6]

[sweep]
axis = "m"
values = [500, 1000]
fixed = 2000
repeats = 10
"#
        )
    }

    #[test]
    fn parses_and_round_trips() {
        let cfg = parse_config(&causal_text("[0.6, 0.1, 0.1, 0.2]")).unwrap();
        let exp = cfg.build().unwrap();
        assert_eq!(exp.pair.target(), &Params::Causal(toy::causal_target()));
        assert_eq!(exp.kind, EstimatorKind::PluginKt);
        let again = parse_config(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn unnormalized_probs_name_the_field() {
        let err = parse_config(&causal_text("[0.6, 0.2, 0.1, 0.2]")).unwrap_err();
        match err {
            ConfigError::Field { field, source } => {
                assert_eq!(field, "model.source.theta_x");
                assert!(matches!(source, ModelError::NotNormalized { .. }));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn scenario_mismatch_is_reported() {
        let text = causal_text("[0.6, 0.1, 0.1, 0.2]").replace("\"covariate\"", "\"ssl\"");
        assert!(matches!(
            parse_config(&text),
            Err(ConfigError::ScenarioParameterMismatch { .. })
        ));
    }

    #[test]
    fn anticausal_tables_from_pair() {
        let s = Scenario::new(Direction::AntiCausal, false, true);
        let d = toy::domain_pair(&s);
        let cfg = ExperimentConfig {
            scenario: s.name(),
            output: None,
            model: ModelConfig::from_pair(&d),
            estimator: EstimatorConfig::default(),
            sweep: SweepConfig {
                axis: SweepAxis::M,
                values: vec![1, 2],
                fixed: 3,
                repeats: 1,
                base_seed: Some(5),
            },
        };
        let back = parse_config(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.build().unwrap().pair, d);
    }

    #[test]
    fn infeasible_component_and_bad_sweep() {
        let s = Scenario::new(Direction::AntiCausal, true, true);
        let mut cfg = ExperimentConfig {
            scenario: s.name(),
            output: None,
            model: ModelConfig::from_pair(&toy::domain_pair(&s)),
            estimator: EstimatorConfig::default(),
            sweep: SweepConfig {
                axis: SweepAxis::MAndN,
                values: vec![2, 1],
                fixed: 0,
                repeats: 1,
                base_seed: None,
            },
        };
        assert!(matches!(cfg.build(), Err(ConfigError::Invalid { ref field, .. }) if field == "sweep.values[1]"));
        cfg.sweep.values = vec![1, 2];
        if let ModelConfig::Anticausal { source, target, .. } = &mut cfg.model {
            source.theta[0] = 0.5;
            target.theta[0] = 0.5;
        }
        assert!(matches!(
            cfg.build(),
            Err(ConfigError::Field {
                source: ModelError::ThetaOutOfFeasibleRange { .. },
                ..
            })
        ));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = causal_text("[0.6, 0.1, 0.1, 0.2]").replace("repeats = 10", "repeats = 10\nrepeat = 3");
        assert!(matches!(parse_config(&text), Err(ConfigError::Parse(_))));
    }
}
