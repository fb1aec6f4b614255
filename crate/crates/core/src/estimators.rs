//! Plug-in parameter estimation.
//!
//! The causal direction uses add-½ (Krichevsky–Trofimov) frequency estimates;
//! the anti-causal direction fits the constrained two-component mixture by EM
//! over the pooled labeled-source and unlabeled-target likelihood. Which data
//! inform which parameter is decided by the [`EstimationPlan`] of the
//! scenario.

use crate::golden;
use crate::models::{
    AffineConstraint, AntiCausalParams, Categorical, CausalParams, Direction, DomainPair, LabeledDataset, ModelError,
    Params, Scenario, UnlabeledDataset, LABELS,
};
use crate::seed;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("all counts are zero; the component has no data")]
    AllCountsZero,
    #[error("count vector has {got} cells, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid EM options: {0}")]
    InvalidOptions(String),
    #[error("no restart produced a finite log-likelihood")]
    InfeasibleInitialization,
    #[error("no data informs the target parameters")]
    NoData,
    #[error("direction mismatch: expected {expected} parameters")]
    DirectionMismatch { expected: Direction },
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, EstimatorError>;

/// Which data inform which parameters under a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EstimationPlan {
    pub direction: Direction,
    /// Source labels share the marginal parameter (θ_X resp. θ_Y).
    pub pooled_marginal: bool,
    /// Source labels share the mechanism parameters (θ_{Y_X} resp. θ_{X_Y}).
    pub pooled_components: bool,
    /// The source sample carries any information about the target predictor.
    pub usable_source: bool,
}

pub fn plan_from_scenario(s: &Scenario) -> EstimationPlan {
    let usable_source = match s.direction {
        // P(Y|X) is all that matters for prediction, and only a shared
        // mechanism ties it to the source.
        Direction::Causal => s.conditional_shared,
        Direction::AntiCausal => s.marginal_shared || s.conditional_shared,
    };
    EstimationPlan {
        direction: s.direction,
        pooled_marginal: s.marginal_shared,
        pooled_components: s.conditional_shared,
        usable_source,
    }
}

/// Sufficient statistics of one training draw: labeled source cell counts
/// (indexed `x * 2 + y`) and unlabeled target feature counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TrainingCounts {
    pub source: Vec<u64>,
    pub target: Vec<u64>,
}

impl TrainingCounts {
    pub fn empty(k: usize) -> Self {
        Self {
            source: vec![0; k * LABELS],
            target: vec![0; k],
        }
    }

    pub fn from_data(source: &LabeledDataset, target: &UnlabeledDataset, k: usize) -> Self {
        Self {
            source: source.joint_counts(k),
            target: target.counts(k),
        }
    }

    pub fn k(&self) -> usize {
        self.target.len()
    }

    pub fn m(&self) -> u64 {
        self.source.iter().sum()
    }

    pub fn n(&self) -> u64 {
        self.target.iter().sum()
    }

    #[inline]
    pub fn source_cell(&self, x: usize, y: usize) -> u64 {
        self.source[x * LABELS + y]
    }

    /// `(zeros, ones)` among source labels.
    pub fn source_labels(&self) -> (u64, u64) {
        (0..self.k()).fold((0, 0), |(z, o), x| {
            (z + self.source_cell(x, 0), o + self.source_cell(x, 1))
        })
    }

    /// Source feature counts for label `y`.
    pub fn source_component(&self, y: usize) -> Vec<u64> {
        (0..self.k()).map(|x| self.source_cell(x, y)).collect()
    }
}

/// Add-½ estimates of both causal factors from labeled pairs.
pub fn kt_causal_fit(source: &LabeledDataset, k: usize) -> Result<CausalParams> {
    let c = source.joint_counts(k);
    let m = source.len() as f64;
    let theta_x = Categorical::new(
        (0..k)
            .map(|x| (c[2 * x] + c[2 * x + 1]) as f64 + 0.5)
            .map(|v| v / (m + 0.5 * k as f64))
            .collect(),
    )
    .or_else(|_| {
        // Guard against the last-ulp normalization error on huge counts.
        let raw: Vec<f64> = (0..k).map(|x| (c[2 * x] + c[2 * x + 1]) as f64 + 0.5).collect();
        let s: f64 = raw.iter().sum();
        Categorical::new(raw.iter().map(|v| v / s).collect())
    })?;
    let theta_yx = (0..k).map(|x| kt_mean(c[2 * x], c[2 * x + 1])).collect();
    Ok(CausalParams::new(theta_x, theta_yx)?)
}

/// `(ones + ½) / (zeros + ones + 1)`.
#[inline]
pub fn kt_mean(zeros: u64, ones: u64) -> f64 {
    (ones as f64 + 0.5) / ((zeros + ones) as f64 + 1.0)
}

/// How the causal label mechanism is turned into a predictor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CausalRule {
    /// Conjugate Beta(α, β) posterior mean; α = β = ½ is the KT estimate.
    Smoothed { alpha: f64, beta: f64 },
    /// Raw frequency clamped to `[eps, 1 − eps]`; empty cells get ½.
    Clamped { eps: f64 },
}

/// `P̂(Y = 1 | x)` for every cell under the plan. When the source is unusable
/// every cell falls back to the prior mean (½ for the clamped rule).
pub fn causal_label_estimate(counts: &TrainingCounts, plan: &EstimationPlan, rule: CausalRule) -> Vec<f64> {
    (0..counts.k())
        .map(|x| {
            let (z, o) = if plan.usable_source {
                (counts.source_cell(x, 0), counts.source_cell(x, 1))
            } else {
                (0, 0)
            };
            match rule {
                CausalRule::Smoothed { alpha, beta } => (o as f64 + alpha) / ((z + o) as f64 + alpha + beta),
                CausalRule::Clamped { eps } => {
                    if z + o == 0 {
                        0.5
                    } else {
                        (o as f64 / (z + o) as f64).clamp(eps, 1.0 - eps)
                    }
                }
            }
        })
        .collect()
}

/// `Σ_x w_x · log p_x(θ)`, skipping zero weights.
#[inline]
fn weighted_component_loglik(w: &[f64], c: &AffineConstraint, theta: f64) -> f64 {
    let mut s = 0.0;
    for (x, &wx) in w.iter().enumerate() {
        if wx > 0.0 {
            s += wx * c.prob_at(x, theta).ln();
        }
    }
    s
}

fn maximize_component(w: &[f64], c: &AffineConstraint, tol: f64) -> f64 {
    let (lo, hi) = c.feasible();
    golden::maximize(|t| weighted_component_loglik(w, c, t), lo, hi, tol)
}

/// Constrained MLE of one component from feature counts, by golden-section
/// search over the closed feasible interval.
pub fn mle_constrained_component(counts: &[u64], c: &AffineConstraint, tol: f64) -> Result<f64> {
    if counts.len() != c.len() {
        return Err(EstimatorError::LengthMismatch {
            expected: c.len(),
            got: counts.len(),
        });
    }
    if counts.iter().all(|&v| v == 0) {
        return Err(EstimatorError::AllCountsZero);
    }
    let w: Vec<f64> = counts.iter().map(|&v| v as f64).collect();
    Ok(maximize_component(&w, c, tol))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    /// Stop once one iteration gains less than this many nats.
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
    /// Bracket width for the M-step golden-section searches.
    pub inner_tol: f64,
    /// Seeds the restart initializations.
    pub seed: u64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 500,
            restarts: 5,
            inner_tol: 1e-10,
            seed: 0,
        }
    }
}

impl EmOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(EstimatorError::InvalidOptions(format!(
                "tol must be > 0, got {}",
                self.tol
            )));
        }
        if self.max_iter < 1 {
            return Err(EstimatorError::InvalidOptions("max_iter must be >= 1".into()));
        }
        if self.restarts < 1 {
            return Err(EstimatorError::InvalidOptions("restarts must be >= 1".into()));
        }
        if !(self.inner_tol > 0.0) {
            return Err(EstimatorError::InvalidOptions(format!(
                "inner_tol must be > 0, got {}",
                self.inner_tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestartSummary {
    /// Initial `(θ_Y, θ_0, θ_1)`.
    pub init: [f64; 3],
    pub init_loglik: f64,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Target-domain estimate.
    pub params: Params,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each iteration of the winning restart, starting with
    /// its initialization.
    pub history: Vec<f64>,
    pub restarts: Vec<RestartSummary>,
}

/// The anti-causal objective on sufficient statistics: unlabeled target terms
/// plus the source terms that involve tied parameters. Source factors of
/// untied parameters are constant in the target parameters and left out.
struct MixtureObjective<'a> {
    counts: &'a TrainingCounts,
    plan: EstimationPlan,
    constraints: &'a [AffineConstraint; 2],
}

impl MixtureObjective<'_> {
    fn value(&self, t: &[f64; 3]) -> f64 {
        let [ty, t0, t1] = *t;
        let [c0, c1] = self.constraints;
        let mut ll = 0.0;
        for (x, &u) in self.counts.target.iter().enumerate() {
            if u > 0 {
                let mix = ty * c1.prob_at(x, t1) + (1.0 - ty) * c0.prob_at(x, t0);
                ll += u as f64 * mix.ln();
            }
        }
        if self.plan.usable_source {
            if self.plan.pooled_marginal {
                let (z, o) = self.counts.source_labels();
                ll += xlogy(z, 1.0 - ty) + xlogy(o, ty);
            }
            if self.plan.pooled_components {
                for x in 0..self.counts.k() {
                    ll += xlogy(self.counts.source_cell(x, 0), c0.prob_at(x, t0));
                    ll += xlogy(self.counts.source_cell(x, 1), c1.prob_at(x, t1));
                }
            }
        }
        ll
    }

    fn step(&self, t: &[f64; 3], inner_tol: f64) -> [f64; 3] {
        let [ty, t0, t1] = *t;
        let [c0, c1] = self.constraints;
        let k = self.counts.k();
        let mut w0 = vec![0.0; k];
        let mut w1 = vec![0.0; k];
        for (x, &u) in self.counts.target.iter().enumerate() {
            if u == 0 {
                continue;
            }
            let a = ty * c1.prob_at(x, t1);
            let b = (1.0 - ty) * c0.prob_at(x, t0);
            let r = if a + b > 0.0 { a / (a + b) } else { ty };
            w1[x] = u as f64 * r;
            w0[x] = u as f64 * (1.0 - r);
        }
        let mut ones: f64 = w1.iter().sum();
        let mut total = self.counts.n() as f64;
        let pooled_m = self.plan.usable_source && self.plan.pooled_marginal;
        let pooled_c = self.plan.usable_source && self.plan.pooled_components;
        if pooled_m {
            let (z, o) = self.counts.source_labels();
            ones += o as f64;
            total += (z + o) as f64;
        }
        if pooled_c {
            for x in 0..k {
                w0[x] += self.counts.source_cell(x, 0) as f64;
                w1[x] += self.counts.source_cell(x, 1) as f64;
            }
        }
        let new_ty = if total > 0.0 {
            (ones / total).clamp(0.0, 1.0)
        } else {
            ty
        };
        let new_t0 = if w0.iter().any(|&v| v > 0.0) {
            maximize_component(&w0, c0, inner_tol)
        } else {
            t0
        };
        let new_t1 = if w1.iter().any(|&v| v > 0.0) {
            maximize_component(&w1, c1, inner_tol)
        } else {
            t1
        };
        [new_ty, new_t0, new_t1]
    }
}

/// `c · ln p` with `0 · ln 0 = 0`.
#[inline]
pub(crate) fn xlogy(c: u64, p: f64) -> f64 {
    if c == 0 {
        0.0
    } else {
        c as f64 * p.ln()
    }
}

fn random_interior<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random_range(0.05..0.95)
}

/// EM on sufficient statistics. `constraints` are the component tables shared
/// by source and target.
pub fn em_anticausal_counts(
    counts: &TrainingCounts,
    plan: &EstimationPlan,
    constraints: &[AffineConstraint; 2],
    opts: &EmOptions,
) -> Result<FitResult> {
    opts.validate()?;
    if plan.direction != Direction::AntiCausal {
        return Err(EstimatorError::DirectionMismatch {
            expected: Direction::AntiCausal,
        });
    }
    for c in constraints {
        if c.len() != counts.k() {
            return Err(EstimatorError::LengthMismatch {
                expected: c.len(),
                got: counts.k(),
            });
        }
    }
    let informative_source = plan.usable_source && counts.m() > 0;
    if counts.n() == 0 && !informative_source {
        return Err(EstimatorError::NoData);
    }
    let obj = MixtureObjective {
        counts,
        plan: *plan,
        constraints,
    };
    let mut best: Option<(usize, [f64; 3], Vec<f64>, bool)> = None;
    let mut best_ll = f64::NEG_INFINITY;
    let mut summaries = Vec::with_capacity(opts.restarts);
    for r in 0..opts.restarts {
        let mut rng = seed::stream(opts.seed, r as u64, seed::STREAM_EM_INIT);
        let (lo0, hi0) = constraints[0].feasible();
        let (lo1, hi1) = constraints[1].feasible();
        let init = [
            random_interior(&mut rng, 0.0, 1.0),
            random_interior(&mut rng, lo0, hi0),
            random_interior(&mut rng, lo1, hi1),
        ];
        let mut t = init;
        let mut ll = obj.value(&t);
        let init_ll = ll;
        let mut history = vec![ll];
        let mut converged = false;
        if ll.is_finite() {
            for _ in 0..opts.max_iter {
                let next = obj.step(&t, opts.inner_tol);
                let next_ll = obj.value(&next);
                let gain = next_ll - ll;
                // A golden-section M-step is exact only to inner_tol; never
                // accept a move that loses likelihood beyond round-off.
                if gain < -1e-9 * ll.abs().max(1.0) || next_ll.is_nan() {
                    converged = true;
                    break;
                }
                t = next;
                ll = next_ll;
                history.push(ll);
                if gain < opts.tol {
                    converged = true;
                    break;
                }
            }
        }
        summaries.push(RestartSummary {
            init,
            init_loglik: init_ll,
            loglik: ll,
            iterations: history.len() - 1,
            converged,
        });
        if ll > best_ll || (best.is_none() && ll.is_finite()) {
            best_ll = ll;
            best = Some((r, t, history, converged));
        }
    }
    let (_, t, history, converged) = best.ok_or(EstimatorError::InfeasibleInitialization)?;
    let params = AntiCausalParams::from_thetas(constraints, t[0], t[1], t[2])?;
    Ok(FitResult {
        params: Params::AntiCausal(params),
        loglik: best_ll,
        iterations: history.len() - 1,
        converged,
        history,
        restarts: summaries,
    })
}

/// EM fit of the target-domain anti-causal parameters from raw datasets,
/// using the component tables of `d`'s target.
pub fn em_anticausal_fit(
    unlabeled_t: &UnlabeledDataset,
    labeled_s: &LabeledDataset,
    plan: &EstimationPlan,
    d: &DomainPair,
    opts: &EmOptions,
) -> Result<FitResult> {
    let target = d.target().as_anticausal().ok_or(EstimatorError::DirectionMismatch {
        expected: Direction::AntiCausal,
    })?;
    let counts = TrainingCounts::from_data(labeled_s, unlabeled_t, d.k());
    em_anticausal_counts(&counts, plan, &target.constraints(), opts)
}

/// Source-only anti-causal estimate: closed-form label rate plus one
/// constrained MLE per component. Components without data keep the template
/// value from `fallback`.
pub fn anticausal_source_fit(
    counts: &TrainingCounts,
    fallback: &AntiCausalParams,
    inner_tol: f64,
) -> Result<AntiCausalParams> {
    let (z, o) = counts.source_labels();
    let theta_y = if z + o == 0 {
        fallback.theta_y()
    } else {
        o as f64 / (z + o) as f64
    };
    let cs = fallback.constraints();
    let mut thetas = [0.0; 2];
    for y in 0..LABELS {
        thetas[y] = match mle_constrained_component(&counts.source_component(y), &cs[y], inner_tol) {
            Ok(t) => t,
            Err(EstimatorError::AllCountsZero) => fallback.component(y).theta(),
            Err(e) => return Err(e),
        };
    }
    Ok(AntiCausalParams::from_thetas(&cs, theta_y, thetas[0], thetas[1])?)
}

/// Log-likelihood of labeled pairs; `-inf` only if a zero-probability cell
/// was observed.
pub fn loglik_labeled(p: &Params, d: &LabeledDataset) -> f64 {
    let counts = d.joint_counts(p.k());
    (0..p.k())
        .flat_map(|x| (0..LABELS).map(move |y| (x, y)))
        .map(|(x, y)| xlogy(counts[x * LABELS + y], p.joint(x, y)))
        .sum()
}

/// Log-likelihood of unlabeled features under the marginal of `p`.
pub fn loglik_unlabeled(p: &Params, d: &UnlabeledDataset) -> f64 {
    d.counts(p.k())
        .iter()
        .enumerate()
        .map(|(x, &c)| xlogy(c, p.marginal_x(x)))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{sample_anticausal, sample_causal, strip_labels, toy, ScenarioName};
    use proptest::prelude::*;

    fn a1_x0() -> AffineConstraint {
        toy::constraints()[0].clone()
    }

    #[test]
    fn plans_follow_the_table() {
        let cov = plan_from_scenario(&Scenario::from_name(Direction::Causal, ScenarioName::Covariate).unwrap());
        assert!(cov.usable_source && cov.pooled_components && !cov.pooled_marginal);
        let concept = plan_from_scenario(&Scenario::from_name(Direction::Causal, ScenarioName::Concept).unwrap());
        assert!(!concept.usable_source);
        let target = plan_from_scenario(&Scenario::from_name(Direction::AntiCausal, ScenarioName::Target).unwrap());
        assert!(target.pooled_components && !target.pooled_marginal && target.usable_source);
        let plans: std::collections::HashSet<_> = Scenario::all().iter().map(plan_from_scenario).collect();
        assert_eq!(plans.len(), 8);
    }

    #[test]
    fn kt_examples() {
        assert!((kt_mean(7, 3) - 3.5 / 11.0).abs() < 1e-15);
        let empty = kt_causal_fit(&LabeledDataset::default(), 4).unwrap();
        assert!(empty.theta_yx().iter().all(|&v| v == 0.5));
        assert!(empty.theta_x().probs().iter().all(|&v| (v - 0.25).abs() < 1e-15));

        let src = toy::causal(toy::SHIFTED_THETA_X, toy::SHIFTED_THETA_YX);
        let fit = kt_causal_fit(&sample_causal(&src, 1_000_000, 5), 4).unwrap();
        for (a, b) in fit.theta_yx().iter().zip(toy::SHIFTED_THETA_YX) {
            assert!((a - b).abs() < 0.01);
        }
    }

    #[test]
    fn causal_rules() {
        let mut counts = TrainingCounts::empty(2);
        counts.source = vec![7, 3, 0, 0];
        let ssl = plan_from_scenario(&Scenario::new(Direction::Causal, true, true));
        let kt = causal_label_estimate(&counts, &ssl, CausalRule::Smoothed { alpha: 0.5, beta: 0.5 });
        assert_eq!(kt, vec![3.5 / 11.0, 0.5]);
        let mle = causal_label_estimate(&counts, &ssl, CausalRule::Clamped { eps: 1e-3 });
        assert_eq!(mle, vec![0.3, 0.5]);
        counts.source = vec![5, 0, 0, 0];
        let mle = causal_label_estimate(&counts, &ssl, CausalRule::Clamped { eps: 1e-3 });
        assert_eq!(mle[0], 1e-3);
        let concept = plan_from_scenario(&Scenario::new(Direction::Causal, true, false));
        let kt = causal_label_estimate(&counts, &concept, CausalRule::Smoothed { alpha: 0.5, beta: 0.5 });
        assert_eq!(kt, vec![0.5, 0.5]);
    }

    #[test]
    fn constrained_mle_consistency() {
        let c = a1_x0();
        let p = c.probs_at(0.05);
        let counts: Vec<u64> = p.iter().map(|v| (1e6 * v).round() as u64).collect();
        let t = mle_constrained_component(&counts, &c, 1e-10).unwrap();
        assert!((t - 0.05).abs() < 1e-3);
    }

    #[test]
    fn constrained_mle_monotone_case() {
        // All mass on a base-0, coef>0 cell: likelihood increases in θ.
        let c = a1_x0();
        let t = mle_constrained_component(&[10, 0, 0, 0], &c, 1e-10).unwrap();
        assert_eq!(t, c.feasible().1);
        assert_eq!(
            mle_constrained_component(&[0, 0, 0, 0], &c, 1e-10),
            Err(EstimatorError::AllCountsZero)
        );
        assert!(matches!(
            mle_constrained_component(&[1, 2], &c, 1e-10),
            Err(EstimatorError::LengthMismatch { .. })
        ));
    }

    fn grid_scan(counts: &[u64], c: &AffineConstraint, points: usize) -> f64 {
        let (lo, hi) = c.feasible();
        let w: Vec<f64> = counts.iter().map(|&v| v as f64).collect();
        let mut best = (lo, f64::NEG_INFINITY);
        for i in 0..points {
            let t = lo + (hi - lo) * i as f64 / (points - 1) as f64;
            let v = weighted_component_loglik(&w, c, t);
            if v > best.1 {
                best = (t, v);
            }
        }
        best.0
    }

    #[test]
    fn constrained_mle_matches_scan_on_base_multiple() {
        let c = a1_x0();
        // Counts exactly proportional to the base vector.
        let counts = [0, 55, 20, 25];
        let t = mle_constrained_component(&counts, &c, 1e-10).unwrap();
        assert!((t - grid_scan(&counts, &c, 100_001)).abs() < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn constrained_mle_matches_dense_scan(counts in proptest::collection::vec(0u64..200, 4), which in 0usize..2) {
            prop_assume!(counts.iter().any(|&v| v > 0));
            let c = &toy::constraints()[which];
            let t = mle_constrained_component(&counts, c, 1e-10).unwrap();
            let s = grid_scan(&counts, c, 100_001);
            let step = (c.feasible().1 - c.feasible().0) / 100_000.0;
            prop_assert!((t - s).abs() <= 1e-6f64.max(step), "golden {} scan {}", t, s);
        }

        #[test]
        fn kt_is_strictly_interior(z in 0u64..10_000, o in 0u64..10_000) {
            let v = kt_mean(z, o);
            prop_assert!(v > 0.0 && v < 1.0);
        }
    }

    fn ssl_plan() -> EstimationPlan {
        plan_from_scenario(&Scenario::new(Direction::AntiCausal, true, true))
    }

    #[test]
    fn em_recovers_truth_in_ssl() {
        let truth = toy::anticausal_target();
        let d = toy::domain_pair(&Scenario::new(Direction::AntiCausal, true, true));
        let src = sample_anticausal(&truth, 16_000, 1);
        let tgt = strip_labels(&sample_anticausal(&truth, 16_000, 2));
        let fit = em_anticausal_fit(&tgt, &src, &ssl_plan(), &d, &EmOptions::default()).unwrap();
        let p = fit.params.as_anticausal().unwrap();
        assert!((p.theta_y() - 0.5).abs() < 0.02);
        assert!((p.component(0).theta() - 0.05).abs() < 0.02);
        assert!((p.component(1).theta() - 0.05).abs() < 0.02);
    }

    #[test]
    fn em_history_is_nondecreasing_and_beats_inits() {
        let truth = toy::anticausal_target();
        let general = plan_from_scenario(&Scenario::new(Direction::AntiCausal, false, false));
        for s in 0..5 {
            let tgt = strip_labels(&sample_anticausal(&truth, 2000, 100 + s));
            let counts = TrainingCounts::from_data(&LabeledDataset::default(), &tgt, 4);
            let opts = EmOptions {
                seed: s,
                ..Default::default()
            };
            let fit = em_anticausal_counts(&counts, &general, &toy::constraints(), &opts).unwrap();
            for w in fit.history.windows(2) {
                assert!(w[1] >= w[0] - 1e-10, "{} -> {}", w[0], w[1]);
            }
            for r in &fit.restarts {
                assert!(fit.loglik >= r.init_loglik);
                assert!(fit.loglik >= r.loglik);
            }
        }
    }

    #[test]
    fn em_collapses_to_single_component() {
        let truth = toy::anticausal(0.0, 0.05, 0.05);
        let tgt = strip_labels(&sample_anticausal(&truth, 20_000, 3));
        let counts = TrainingCounts::from_data(&LabeledDataset::default(), &tgt, 4);
        let general = plan_from_scenario(&Scenario::new(Direction::AntiCausal, false, false));
        let fit = em_anticausal_counts(&counts, &general, &toy::constraints(), &EmOptions::default()).unwrap();
        let p = fit.params.as_anticausal().unwrap();
        let direct = mle_constrained_component(&counts.target, &toy::constraints()[0], 1e-10).unwrap();
        assert!(p.theta_y() < 0.05, "theta_y = {}", p.theta_y());
        assert!((p.component(0).theta() - direct).abs() < 0.01);
    }

    #[test]
    fn em_rejects_empty_problem_and_bad_options() {
        let counts = TrainingCounts::empty(4);
        let general = plan_from_scenario(&Scenario::new(Direction::AntiCausal, false, false));
        assert_eq!(
            em_anticausal_counts(&counts, &general, &toy::constraints(), &EmOptions::default()),
            Err(EstimatorError::NoData)
        );
        let bad = EmOptions {
            restarts: 0,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(EstimatorError::InvalidOptions(_))));
    }

    #[test]
    fn em_is_deterministic() {
        let truth = toy::anticausal_target();
        let tgt = strip_labels(&sample_anticausal(&truth, 500, 8));
        let counts = TrainingCounts::from_data(&LabeledDataset::default(), &tgt, 4);
        let general = plan_from_scenario(&Scenario::new(Direction::AntiCausal, false, false));
        let a = em_anticausal_counts(&counts, &general, &toy::constraints(), &EmOptions::default()).unwrap();
        let b = em_anticausal_counts(&counts, &general, &toy::constraints(), &EmOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn loglik_examples() {
        let t = Params::Causal(toy::causal_target());
        assert_eq!(loglik_labeled(&t, &LabeledDataset::default()), 0.0);
        let one = LabeledDataset::new(vec![(0, 1)], 4).unwrap();
        assert!((loglik_labeled(&t, &one) - (0.25f64.ln() + 0.3f64.ln())).abs() < 1e-15);
        let point = Params::Causal(toy::causal([1.0, 0.0, 0.0, 0.0], [1.0; 4]));
        let contra = LabeledDataset::new(vec![(0, 0)], 4).unwrap();
        assert_eq!(loglik_labeled(&point, &contra), f64::NEG_INFINITY);
        let u = UnlabeledDataset::new(vec![1, 1], 4).unwrap();
        assert!(
            (loglik_unlabeled(&Params::AntiCausal(toy::anticausal_target()), &u) - 2.0 * 0.45f64.ln()).abs() < 1e-15
        );
    }
}
