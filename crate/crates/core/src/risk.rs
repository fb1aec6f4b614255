//! Excess-risk evaluation.
//!
//! A trained predictor is the vector `q[x] = Q(Y = 1 | x)`. Its excess
//! log-loss against the target truth is computed exactly over the finite test
//! alphabet; the Monte-Carlo engine averages that quantity over independent
//! training draws.

use crate::bayes::{causal_predictive, BayesError, GridModel, PriorSpec};
use crate::estimators::{
    anticausal_source_fit, causal_label_estimate, em_anticausal_counts, plan_from_scenario, CausalRule, EmOptions,
    EstimationPlan, EstimatorError, TrainingCounts,
};
use crate::models::{sample_with, validate_scenario, Direction, DomainPair, ModelError, Params, Scenario};
use crate::par::{map_indexed, pairwise_sum, ExecMode};
use crate::seed;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RiskError {
    #[error("predictor assigns zero probability to a possible label at x = {x}")]
    InfiniteRisk { x: usize },
    #[error("predictor is undefined at x = {x}, which has positive target mass")]
    UndefinedPrediction { x: usize },
    #[error("{failures} of {repeats} trials failed (more than 10%); first failure: {first}")]
    TooManyFailures {
        failures: usize,
        repeats: usize,
        first: String,
    },
    #[error("mutual information must be nonnegative, got {0}")]
    NegativeCmi(f64),
    #[error("bound parameter must be positive, got {0}")]
    InvalidBound(f64),
    #[error("repeats must be at least 1")]
    NoRepeats,
    #[error("predictor has {got} cells, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Bayes(#[from] BayesError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, RiskError>;

/// Monte-Carlo excess risk in nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskEstimate {
    pub mean: f64,
    /// Sample standard deviation over successful trials divided by the
    /// square root of their number; 0 with a single success.
    pub stderr: f64,
    pub repeats: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Causal: add-½ cell estimates. Anti-causal: raw EM plug-in.
    PluginKt,
    /// Causal: raw frequencies clamped to `[ε, 1 − ε]`. Anti-causal: EM
    /// plug-in with its predictive clamped the same way.
    PluginMle,
    /// The mixture strategy.
    BayesMixture,
    /// Fits the source sample alone, ignoring what the scenario allows.
    NaiveSource,
    /// Predicts with the true source mechanism.
    FrozenSource,
    /// Predicts with the true target mechanism (zero risk).
    FrozenTarget,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 6] = [
        EstimatorKind::PluginKt,
        EstimatorKind::PluginMle,
        EstimatorKind::BayesMixture,
        EstimatorKind::NaiveSource,
        EstimatorKind::FrozenSource,
        EstimatorKind::FrozenTarget,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::PluginKt => "plugin_kt",
            EstimatorKind::PluginMle => "plugin_mle",
            EstimatorKind::BayesMixture => "bayes_mixture",
            EstimatorKind::NaiveSource => "naive_source",
            EstimatorKind::FrozenSource => "frozen_source",
            EstimatorKind::FrozenTarget => "frozen_target",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainerOptions {
    pub em: EmOptions,
    pub prior: PriorSpec,
    pub mle_clamp: f64,
}

impl Default for TrainerOptions {
    fn default() -> Self {
        Self {
            em: EmOptions::default(),
            prior: PriorSpec::default(),
            mle_clamp: 1e-3,
        }
    }
}

/// A scenario-bound recipe turning training counts into a predictor.
#[derive(Debug, Clone)]
pub struct Trainer {
    pair: DomainPair,
    scenario: Scenario,
    plan: EstimationPlan,
    kind: EstimatorKind,
    opts: TrainerOptions,
    grid: Option<GridModel>,
}

impl Trainer {
    pub fn new(pair: DomainPair, scenario: Scenario, kind: EstimatorKind, opts: TrainerOptions) -> Result<Self> {
        validate_scenario(&scenario, &pair)?;
        opts.em.validate()?;
        opts.prior.validate()?;
        let grid = if kind == EstimatorKind::BayesMixture && pair.direction() == Direction::AntiCausal {
            Some(GridModel::from_pair(&pair, &opts.prior)?)
        } else {
            None
        };
        Ok(Self {
            plan: plan_from_scenario(&scenario),
            pair,
            scenario,
            kind,
            opts,
            grid,
        })
    }

    pub fn pair(&self) -> &DomainPair {
        &self.pair
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn plan(&self) -> &EstimationPlan {
        &self.plan
    }

    pub fn kind(&self) -> EstimatorKind {
        self.kind
    }

    /// `true` when the prediction is a function of the counts alone (no
    /// randomized restarts), so equal counts may share one evaluation.
    pub fn is_deterministic(&self) -> bool {
        !(self.pair.direction() == Direction::AntiCausal
            && matches!(self.kind, EstimatorKind::PluginKt | EstimatorKind::PluginMle))
    }

    fn truth_posterior(p: &Params) -> Vec<f64> {
        (0..p.k()).map(|x| p.label_given_x(x).unwrap_or(f64::NAN)).collect()
    }

    /// Trains on `counts` and returns `Q(Y = 1 | x)` for every `x`; `em_seed`
    /// seeds EM restarts and is ignored by deterministic predictors.
    pub fn predict(&self, counts: &TrainingCounts, em_seed: u64) -> Result<Vec<f64>> {
        use EstimatorKind::*;
        let clamp = |q: Vec<f64>| -> Vec<f64> {
            let e = self.opts.mle_clamp;
            q.into_iter()
                .map(|v| if v.is_nan() { v } else { v.clamp(e, 1.0 - e) })
                .collect()
        };
        match (self.pair.direction(), self.kind) {
            (_, FrozenSource) => Ok(Self::truth_posterior(self.pair.source())),
            (_, FrozenTarget) => Ok(Self::truth_posterior(self.pair.target())),
            (Direction::Causal, PluginKt) => Ok(causal_label_estimate(
                counts,
                &self.plan,
                CausalRule::Smoothed { alpha: 0.5, beta: 0.5 },
            )),
            (Direction::Causal, PluginMle) => Ok(causal_label_estimate(
                counts,
                &self.plan,
                CausalRule::Clamped {
                    eps: self.opts.mle_clamp,
                },
            )),
            (Direction::Causal, BayesMixture) => Ok(causal_predictive(counts, &self.plan, &self.opts.prior)),
            (Direction::Causal, NaiveSource) => {
                let plan = EstimationPlan {
                    usable_source: true,
                    ..self.plan
                };
                Ok(causal_label_estimate(
                    counts,
                    &plan,
                    CausalRule::Smoothed { alpha: 0.5, beta: 0.5 },
                ))
            }
            (Direction::AntiCausal, PluginKt | PluginMle) => {
                let target = self.pair.target().as_anticausal().expect("direction checked");
                let em = EmOptions {
                    seed: em_seed,
                    ..self.opts.em
                };
                let fit = em_anticausal_counts(counts, &self.plan, &target.constraints(), &em)?;
                let q = Self::truth_posterior(&fit.params);
                Ok(if self.kind == PluginMle { clamp(q) } else { q })
            }
            (Direction::AntiCausal, BayesMixture) => Ok(self
                .grid
                .as_ref()
                .expect("grid built for Bayes")
                .predictive(counts, &self.plan)?),
            (Direction::AntiCausal, NaiveSource) => {
                let target = self.pair.target().as_anticausal().expect("direction checked");
                let fit = anticausal_source_fit(counts, target, self.opts.em.inner_tol)?;
                Ok(Self::truth_posterior(&Params::AntiCausal(fit)))
            }
        }
    }

    /// Draws the sufficient statistics of trial `trial`.
    pub fn draw(&self, m: usize, n: usize, base_seed: u64, trial: u64) -> TrainingCounts {
        let k = self.pair.k();
        let src = sample_with(
            self.pair.source(),
            m,
            &mut seed::stream(base_seed, trial, seed::STREAM_SOURCE),
        );
        let tgt = sample_with(
            self.pair.target(),
            n,
            &mut seed::stream(base_seed, trial, seed::STREAM_TARGET),
        );
        let mut target = vec![0u64; k];
        for &(x, _) in &tgt.pairs {
            target[x] += 1;
        }
        TrainingCounts {
            source: src.joint_counts(k),
            target,
        }
    }

    /// Monte-Carlo excess risk at sizes `(m, n)`.
    pub fn risk_mc(&self, m: usize, n: usize, repeats: usize, seed: u64, mode: ExecMode) -> Result<RiskEstimate> {
        self.risk_mc_with(m, n, repeats, seed, mode, Loss::Log)
    }

    pub fn risk_mc_with(
        &self,
        m: usize,
        n: usize,
        repeats: usize,
        seed: u64,
        mode: ExecMode,
        loss: Loss,
    ) -> Result<RiskEstimate> {
        if repeats == 0 {
            return Err(RiskError::NoRepeats);
        }
        let values = self.trial_values(m, n, repeats, seed, mode, loss);
        aggregate(&values)
    }

    /// Per-trial excess risks in trial order.
    pub fn trial_values(
        &self,
        m: usize,
        n: usize,
        repeats: usize,
        seed: u64,
        mode: ExecMode,
        loss: Loss,
    ) -> Vec<Result<f64>> {
        const CHUNK: usize = 1 << 16;
        let truth = self.pair.target();
        let evaluate = |q: Result<Vec<f64>>| -> Result<f64> {
            let q = q?;
            match loss {
                Loss::Log => excess_logloss_conditional(truth, &q),
                Loss::ZeroOne => excess_01_conditional(truth, &q),
            }
        };
        let mut out = Vec::with_capacity(repeats);
        let mut start = 0;
        while start < repeats {
            let len = CHUNK.min(repeats - start);
            let counts: Vec<TrainingCounts> = map_indexed(mode, len, |i| self.draw(m, n, seed, (start + i) as u64));
            if self.is_deterministic() {
                // Evaluate each distinct draw once.
                let mut order: Vec<usize> = (0..len).collect();
                order.sort_by(|&a, &b| counts[a].cmp(&counts[b]));
                let mut reps: Vec<usize> = Vec::new();
                let mut slot = vec![0usize; len];
                for &i in &order {
                    if reps.last().is_none_or(|&r| counts[r] != counts[i]) {
                        reps.push(i);
                    }
                    slot[i] = reps.len() - 1;
                }
                let vals = map_indexed(mode, reps.len(), |u| evaluate(self.predict(&counts[reps[u]], 0)));
                out.extend(slot.iter().map(|&u| vals[u].clone()));
            } else {
                out.extend(map_indexed(mode, len, |i| {
                    let t = (start + i) as u64;
                    let em_seed = seed::derive(seed::derive(seed, t), seed::STREAM_EM_INIT);
                    evaluate(self.predict(&counts[i], em_seed))
                }));
            }
            start += len;
        }
        out
    }
}

/// Which loss the excess is measured in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    Log,
    ZeroOne,
}

/// Mean and standard error of the successful trials; errors out when more
/// than 10% failed.
pub fn aggregate(values: &[Result<f64>]) -> Result<RiskEstimate> {
    if values.is_empty() {
        return Err(RiskError::NoRepeats);
    }
    let ok: Vec<f64> = values.iter().filter_map(|v| v.as_ref().ok().copied()).collect();
    let failures = values.len() - ok.len();
    if failures * 10 > values.len() || ok.is_empty() {
        let first = values
            .iter()
            .find_map(|v| v.as_ref().err())
            .map(|e| e.to_string())
            .unwrap_or_default();
        return Err(RiskError::TooManyFailures {
            failures,
            repeats: values.len(),
            first,
        });
    }
    let (mean, stderr) = if ok.iter().all(|v| v.to_bits() == ok[0].to_bits()) {
        (ok[0], 0.0)
    } else {
        let mean = pairwise_sum(&ok) / ok.len() as f64;
        let dev: Vec<f64> = ok.iter().map(|v| (v - mean) * (v - mean)).collect();
        let var = pairwise_sum(&dev) / (ok.len() - 1) as f64;
        (mean, (var / ok.len() as f64).sqrt())
    };
    Ok(RiskEstimate {
        mean,
        stderr,
        repeats: values.len(),
        failures,
    })
}

/// Monte-Carlo excess log-loss with default estimator options.
pub fn excess_risk_mc(
    d: &DomainPair,
    s: &Scenario,
    m: usize,
    n: usize,
    kind: EstimatorKind,
    repeats: usize,
    seed: u64,
) -> Result<RiskEstimate> {
    Trainer::new(d.clone(), *s, kind, TrainerOptions::default())?.risk_mc(m, n, repeats, seed, ExecMode::Parallel)
}

/// `KL(Ber(p) ‖ Ber(q))` in nats.
pub fn bernoulli_kl(p: f64, q: f64) -> Option<f64> {
    let mut kl = 0.0;
    for (a, b) in [(p, q), (1.0 - p, 1.0 - q)] {
        if a > 0.0 {
            if b <= 0.0 {
                return None;
            }
            kl += a * (a / b).ln();
        }
    }
    Some(kl.max(0.0))
}

fn check_len(truth: &Params, q: &[f64]) -> Result<()> {
    if q.len() != truth.k() {
        return Err(RiskError::LengthMismatch {
            expected: truth.k(),
            got: q.len(),
        });
    }
    Ok(())
}

/// `Σ_x P_t(x) · KL(Ber(p_x) ‖ Ber(q_x))`: the expected excess log-loss of
/// `q` on one test pair drawn from the target.
pub fn excess_logloss_conditional(truth: &Params, q: &[f64]) -> Result<f64> {
    check_len(truth, q)?;
    let mut total = 0.0;
    for (x, &qx) in q.iter().enumerate() {
        let px = truth.marginal_x(x);
        if px == 0.0 {
            continue;
        }
        if qx.is_nan() {
            return Err(RiskError::UndefinedPrediction { x });
        }
        let p = truth.label_given_x(x)?;
        total += px * bernoulli_kl(p, qx).ok_or(RiskError::InfiniteRisk { x })?;
    }
    Ok(total)
}

/// Expected excess 0-1 loss of predicting `1{q_x > ½}` (ties predict 0)
/// over the Bayes-optimal decision.
pub fn excess_01_conditional(truth: &Params, q: &[f64]) -> Result<f64> {
    check_len(truth, q)?;
    let mut total = 0.0;
    for (x, &qx) in q.iter().enumerate() {
        let px = truth.marginal_x(x);
        if px == 0.0 {
            continue;
        }
        if qx.is_nan() {
            return Err(RiskError::UndefinedPrediction { x });
        }
        let p = truth.label_given_x(x)?;
        let err = |one: bool| if one { 1.0 - p } else { p };
        total += px * (err(qx > 0.5) - err(p > 0.5)).max(0.0);
    }
    Ok(total)
}

/// Which regularity the bound assumes of the loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundSpec {
    /// β-exponentially-concave loss; log-loss is β = 1.
    ExpConcave { beta: f64 },
    /// Loss bounded by `M`.
    Bounded { m: f64 },
}

/// Converts a conditional mutual information into an excess-risk bound.
pub fn cmi_bound(cmi: f64, b: BoundSpec) -> Result<f64> {
    if !(cmi >= 0.0) {
        return Err(RiskError::NegativeCmi(cmi));
    }
    match b {
        BoundSpec::ExpConcave { beta } if beta > 0.0 => Ok(cmi / beta),
        BoundSpec::Bounded { m } if m > 0.0 => Ok(m * (2.0 * cmi).sqrt()),
        BoundSpec::ExpConcave { beta: v } | BoundSpec::Bounded { m: v } => Err(RiskError::InvalidBound(v)),
    }
}
