//! Discrete potential-outcome models for both causal directions.
//!
//! In the causal direction the cause `X` is drawn from a categorical and the
//! label is read off the potential outcome `Y_x ~ Ber(θ_{Y_x})` selected by
//! the realized cause. In the anti-causal direction the label `Y ~ Ber(θ_Y)`
//! is drawn first and the feature is read off the potential outcome
//! `X_y ~ Cat(base_y + coef_y·θ_y)`. Labels are binary throughout; the cause
//! alphabet size `k` is arbitrary.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Absolute tolerance on probability-vector normalization.
pub const PROB_TOL: f64 = 1e-12;

/// Number of label values.
pub const LABELS: usize = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("probability vector is empty")]
    Empty,
    #[error("negative probability {value} at index {index}")]
    NegativeProbability { index: usize, value: f64 },
    #[error("probabilities sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },
    #[error("theta = {theta} is outside the feasible interval [{lo}, {hi}]")]
    ThetaOutOfFeasibleRange { theta: f64, lo: f64, hi: f64 },
    #[error("index {index} is out of range for an alphabet of size {size}")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("x = {x} has zero probability under every label component")]
    ZeroMarginalMass { x: usize },
    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("scenario does not match the parameters: {0}")]
    ScenarioParameterMismatch(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// A validated probability vector over `0..len`.
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical {
    probs: Vec<f64>,
}

impl Categorical {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(ModelError::Empty);
        }
        for (index, &value) in probs.iter().enumerate() {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(ModelError::NegativeProbability { index, value });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_TOL {
            return Err(ModelError::NotNormalized { sum });
        }
        Ok(Self { probs })
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(ModelError::Empty);
        }
        Self::new(vec![1.0 / k as f64; k])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.probs[i]
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.probs, rng.random::<f64>())
    }
}

/// Builds a validated [`Categorical`].
pub fn make_categorical(probs: Vec<f64>) -> Result<Categorical> {
    Categorical::new(probs)
}

/// Smallest index whose cumulative mass exceeds `u`, skipping zero-mass
/// cells so round-off can never select an impossible outcome.
fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// A one-parameter family `p(θ) = base + coef·θ` of categorical vectors.
///
/// `coef` sums to zero so every member is normalized; the feasible interval
/// is the closed set of θ keeping every entry nonnegative, optionally narrowed
/// by caller-supplied bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineConstraint {
    base: Vec<f64>,
    coef: Vec<f64>,
    lo: f64,
    hi: f64,
}

impl AffineConstraint {
    pub fn new(base: Vec<f64>, coef: Vec<f64>) -> Result<Self> {
        if base.is_empty() {
            return Err(ModelError::Empty);
        }
        if base.len() != coef.len() {
            return Err(ModelError::InvalidConstraint(format!(
                "base has {} entries but coef has {}",
                base.len(),
                coef.len()
            )));
        }
        if base.iter().chain(coef.iter()).any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidConstraint("non-finite entry".into()));
        }
        let base_sum: f64 = base.iter().sum();
        if (base_sum - 1.0).abs() > PROB_TOL {
            return Err(ModelError::NotNormalized { sum: base_sum });
        }
        let coef_sum: f64 = coef.iter().sum();
        if coef_sum.abs() > PROB_TOL {
            return Err(ModelError::InvalidConstraint(format!(
                "coef sums to {coef_sum}, expected 0"
            )));
        }
        if coef.iter().all(|&c| c == 0.0) {
            return Err(ModelError::InvalidConstraint(
                "coef is identically zero; the component has no free parameter".into(),
            ));
        }
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for (&b, &c) in base.iter().zip(&coef) {
            if c > 0.0 {
                lo = lo.max(-b / c);
            } else if c < 0.0 {
                hi = hi.min(b / -c);
            } else if b < 0.0 {
                return Err(ModelError::InvalidConstraint(
                    "negative base entry with zero coefficient".into(),
                ));
            }
        }
        if lo > hi {
            return Err(ModelError::InvalidConstraint(format!(
                "empty feasible interval [{lo}, {hi}]"
            )));
        }
        Ok(Self { base, coef, lo, hi })
    }

    /// Narrows the feasible interval. Bounds that would widen it are errors.
    pub fn with_bounds(mut self, lo: Option<f64>, hi: Option<f64>) -> Result<Self> {
        if let Some(lo) = lo {
            if lo < self.lo - PROB_TOL {
                return Err(ModelError::InvalidConstraint(format!(
                    "lower bound {lo} is below the derived bound {}",
                    self.lo
                )));
            }
            self.lo = self.lo.max(lo);
        }
        if let Some(hi) = hi {
            if hi > self.hi + PROB_TOL {
                return Err(ModelError::InvalidConstraint(format!(
                    "upper bound {hi} is above the derived bound {}",
                    self.hi
                )));
            }
            self.hi = self.hi.min(hi);
        }
        if self.lo > self.hi {
            return Err(ModelError::InvalidConstraint(format!(
                "empty feasible interval [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(self)
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    pub fn coef(&self) -> &[f64] {
        &self.coef
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    pub fn feasible(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn is_feasible(&self, theta: f64) -> bool {
        theta >= self.lo - PROB_TOL && theta <= self.hi + PROB_TOL
    }

    /// Probability of cell `x` at `theta`, clamped at zero against round-off.
    /// No feasibility check.
    #[inline]
    pub fn prob_at(&self, x: usize, theta: f64) -> f64 {
        (self.base[x] + self.coef[x] * theta).max(0.0)
    }

    /// The full vector at `theta`, no feasibility check.
    pub fn probs_at(&self, theta: f64) -> Vec<f64> {
        (0..self.len()).map(|x| self.prob_at(x, theta)).collect()
    }

    pub fn realize(&self, theta: f64) -> Result<Categorical> {
        if !theta.is_finite() || !self.is_feasible(theta) {
            return Err(ModelError::ThetaOutOfFeasibleRange {
                theta,
                lo: self.lo,
                hi: self.hi,
            });
        }
        Categorical::new(self.probs_at(theta))
    }
}

/// `base + coef·theta` as a validated categorical.
pub fn realize_constraint(c: &AffineConstraint, theta: f64) -> Result<Categorical> {
    c.realize(theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Causal,
    #[serde(rename = "anticausal")]
    AntiCausal,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Causal => "causal",
            Direction::AntiCausal => "anticausal",
        })
    }
}

/// `X ~ Cat(θ_X)`, `Y_x ~ Ber(θ_{Y_x})`.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalParams {
    theta_x: Categorical,
    theta_yx: Vec<f64>,
}

impl CausalParams {
    pub fn new(theta_x: Categorical, theta_yx: Vec<f64>) -> Result<Self> {
        if theta_yx.len() != theta_x.len() {
            return Err(ModelError::InvalidParameter(format!(
                "theta_yx has {} entries but theta_x has {}",
                theta_yx.len(),
                theta_x.len()
            )));
        }
        if let Some((i, v)) = theta_yx.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(ModelError::InvalidParameter(format!(
                "theta_yx[{i}] = {v} is not in [0, 1]"
            )));
        }
        Ok(Self { theta_x, theta_yx })
    }

    pub fn theta_x(&self) -> &Categorical {
        &self.theta_x
    }

    pub fn theta_yx(&self) -> &[f64] {
        &self.theta_yx
    }

    pub fn k(&self) -> usize {
        self.theta_yx.len()
    }
}

/// One anti-causal effect component: the constrained family and its θ.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    constraint: AffineConstraint,
    theta: f64,
}

impl Component {
    pub fn new(constraint: AffineConstraint, theta: f64) -> Result<Self> {
        constraint.realize(theta)?;
        Ok(Self { constraint, theta })
    }

    pub fn constraint(&self) -> &AffineConstraint {
        &self.constraint
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    #[inline]
    pub fn prob(&self, x: usize) -> f64 {
        self.constraint.prob_at(x, self.theta)
    }
}

/// `Y ~ Ber(θ_Y)`, `X_y ~ Cat(base_y + coef_y·θ_y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AntiCausalParams {
    theta_y: f64,
    components: Vec<Component>,
}

impl AntiCausalParams {
    pub fn new(theta_y: f64, components: Vec<Component>) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta_y) {
            return Err(ModelError::InvalidParameter(format!(
                "theta_y = {theta_y} is not in [0, 1]"
            )));
        }
        if components.len() != LABELS {
            return Err(ModelError::InvalidParameter(format!(
                "expected {LABELS} label components, got {}",
                components.len()
            )));
        }
        let k = components[0].constraint.len();
        if components.iter().any(|c| c.constraint.len() != k) {
            return Err(ModelError::InvalidParameter(
                "components have different supports".into(),
            ));
        }
        Ok(Self { theta_y, components })
    }

    /// Builds parameters from shared constraint tables and the three scalars.
    pub fn from_thetas(constraints: &[AffineConstraint; 2], theta_y: f64, theta0: f64, theta1: f64) -> Result<Self> {
        Self::new(
            theta_y,
            vec![
                Component::new(constraints[0].clone(), theta0)?,
                Component::new(constraints[1].clone(), theta1)?,
            ],
        )
    }

    pub fn theta_y(&self) -> f64 {
        self.theta_y
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn component(&self, y: usize) -> &Component {
        &self.components[y]
    }

    pub fn constraints(&self) -> [AffineConstraint; 2] {
        [
            self.components[0].constraint.clone(),
            self.components[1].constraint.clone(),
        ]
    }

    pub fn k(&self) -> usize {
        self.components[0].constraint.len()
    }

    /// `P(Y = y)`.
    #[inline]
    pub fn label_prob(&self, y: usize) -> f64 {
        if y == 1 {
            self.theta_y
        } else {
            1.0 - self.theta_y
        }
    }

    /// Mixture marginal `P(X = x)`.
    #[inline]
    pub fn marginal(&self, x: usize) -> f64 {
        self.theta_y * self.components[1].prob(x) + (1.0 - self.theta_y) * self.components[0].prob(x)
    }
}

/// Parameters of either direction.
#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Causal(CausalParams),
    AntiCausal(AntiCausalParams),
}

impl Params {
    pub fn direction(&self) -> Direction {
        match self {
            Params::Causal(_) => Direction::Causal,
            Params::AntiCausal(_) => Direction::AntiCausal,
        }
    }

    /// Cause/feature alphabet size.
    pub fn k(&self) -> usize {
        match self {
            Params::Causal(p) => p.k(),
            Params::AntiCausal(p) => p.k(),
        }
    }

    /// `P(X = x)`.
    pub fn marginal_x(&self, x: usize) -> f64 {
        match self {
            Params::Causal(p) => p.theta_x.prob(x),
            Params::AntiCausal(p) => p.marginal(x),
        }
    }

    /// Joint cell probability `P(X = x, Y = y)`.
    pub fn joint(&self, x: usize, y: usize) -> f64 {
        match self {
            Params::Causal(p) => {
                let q = p.theta_yx[x];
                p.theta_x.prob(x) * if y == 1 { q } else { 1.0 - q }
            }
            Params::AntiCausal(p) => p.label_prob(y) * p.components[y].prob(x),
        }
    }

    /// `P(Y = 1 | X = x)`; `None` when `x` has zero marginal mass in the
    /// anti-causal model.
    pub fn label_given_x(&self, x: usize) -> Result<f64> {
        match self {
            Params::Causal(p) => causal_label_dist(p, x),
            Params::AntiCausal(p) => anticausal_label_posterior(p, x),
        }
    }

    pub fn as_causal(&self) -> Option<&CausalParams> {
        match self {
            Params::Causal(p) => Some(p),
            _ => None,
        }
    }

    pub fn as_anticausal(&self) -> Option<&AntiCausalParams> {
        match self {
            Params::AntiCausal(p) => Some(p),
            _ => None,
        }
    }
}

/// `P(Y = 1 | X = x) = θ_{Y_x}`.
pub fn causal_label_dist(p: &CausalParams, x: usize) -> Result<f64> {
    p.theta_yx
        .get(x)
        .copied()
        .ok_or(ModelError::IndexOutOfRange { index: x, size: p.k() })
}

/// `P(Y = 1 | X = x)` by Bayes' rule over the two components.
pub fn anticausal_label_posterior(p: &AntiCausalParams, x: usize) -> Result<f64> {
    if x >= p.k() {
        return Err(ModelError::IndexOutOfRange { index: x, size: p.k() });
    }
    let (p0, p1) = (p.components[0].prob(x), p.components[1].prob(x));
    if p0 == 0.0 && p1 == 0.0 {
        return Err(ModelError::ZeroMarginalMass { x });
    }
    if p0 == p1 {
        // Equal likelihoods cancel exactly; skip the rounding of the ratio.
        return Ok(p.theta_y);
    }
    let one = p.theta_y * p1;
    let zero = (1.0 - p.theta_y) * p0;
    if one + zero == 0.0 {
        // Both weighted masses vanish only through a degenerate prior; the
        // component with positive mass decides.
        return Ok(if p.components[1].prob(x) > 0.0 { p.theta_y } else { 0.0 });
    }
    Ok(one / (one + zero))
}

/// Source and target parameters of one direction with matching alphabets.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainPair {
    source: Params,
    target: Params,
}

impl DomainPair {
    pub fn new(source: Params, target: Params) -> Result<Self> {
        if source.direction() != target.direction() {
            return Err(ModelError::InvalidParameter(
                "source and target have different causal directions".into(),
            ));
        }
        if source.k() != target.k() {
            return Err(ModelError::InvalidParameter(format!(
                "source alphabet has {} values but target has {}",
                source.k(),
                target.k()
            )));
        }
        Ok(Self { source, target })
    }

    pub fn source(&self) -> &Params {
        &self.source
    }

    pub fn target(&self) -> &Params {
        &self.target
    }

    pub fn direction(&self) -> Direction {
        self.source.direction()
    }

    pub fn k(&self) -> usize {
        self.source.k()
    }
}

/// Labeled `(x, y)` pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabeledDataset {
    pub pairs: Vec<(usize, usize)>,
}

impl LabeledDataset {
    pub fn new(pairs: Vec<(usize, usize)>, k: usize) -> Result<Self> {
        for &(x, y) in &pairs {
            if x >= k {
                return Err(ModelError::IndexOutOfRange { index: x, size: k });
            }
            if y >= LABELS {
                return Err(ModelError::IndexOutOfRange { index: y, size: LABELS });
            }
        }
        Ok(Self { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Cell counts indexed `x * 2 + y`.
    pub fn joint_counts(&self, k: usize) -> Vec<u64> {
        let mut c = vec![0u64; k * LABELS];
        for &(x, y) in &self.pairs {
            c[x * LABELS + y] += 1;
        }
        c
    }
}

/// Unlabeled features.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UnlabeledDataset {
    pub xs: Vec<usize>,
}

impl UnlabeledDataset {
    pub fn new(xs: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&x) = xs.iter().find(|&&x| x >= k) {
            return Err(ModelError::IndexOutOfRange { index: x, size: k });
        }
        Ok(Self { xs })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn counts(&self, k: usize) -> Vec<u64> {
        let mut c = vec![0u64; k];
        for &x in &self.xs {
            c[x] += 1;
        }
        c
    }
}

/// Draws `count` pairs: `X` first, then the label from `Y_X`.
pub fn sample_causal_with<R: Rng + ?Sized>(p: &CausalParams, count: usize, rng: &mut R) -> LabeledDataset {
    let pairs = (0..count)
        .map(|_| {
            let x = p.theta_x.sample(rng);
            let y = usize::from(rng.random::<f64>() < p.theta_yx[x]);
            (x, y)
        })
        .collect();
    LabeledDataset { pairs }
}

/// Draws `count` pairs: `Y` first, then the feature from `X_Y`.
pub fn sample_anticausal_with<R: Rng + ?Sized>(p: &AntiCausalParams, count: usize, rng: &mut R) -> LabeledDataset {
    let tables: Vec<Vec<f64>> = p.components.iter().map(|c| c.constraint.probs_at(c.theta)).collect();
    let pairs = (0..count)
        .map(|_| {
            let y = usize::from(rng.random::<f64>() < p.theta_y);
            let x = sample_index(&tables[y], rng.random::<f64>());
            (x, y)
        })
        .collect();
    LabeledDataset { pairs }
}

pub fn sample_causal(p: &CausalParams, count: usize, seed: u64) -> LabeledDataset {
    sample_causal_with(p, count, &mut crate::seed::stream(seed, 0, 0))
}

pub fn sample_anticausal(p: &AntiCausalParams, count: usize, seed: u64) -> LabeledDataset {
    sample_anticausal_with(p, count, &mut crate::seed::stream(seed, 0, 0))
}

/// Draws from whichever direction `p` belongs to.
pub fn sample_with<R: Rng + ?Sized>(p: &Params, count: usize, rng: &mut R) -> LabeledDataset {
    match p {
        Params::Causal(p) => sample_causal_with(p, count, rng),
        Params::AntiCausal(p) => sample_anticausal_with(p, count, rng),
    }
}

/// Drops the labels, keeping feature order.
pub fn strip_labels(d: &LabeledDataset) -> UnlabeledDataset {
    UnlabeledDataset {
        xs: d.pairs.iter().map(|&(x, _)| x).collect(),
    }
}

/// The six named distribution-shift conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    General,
    Covariate,
    Concept,
    Target,
    Conditional,
    Ssl,
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioName::General => "general",
            ScenarioName::Covariate => "covariate",
            ScenarioName::Concept => "concept",
            ScenarioName::Target => "target",
            ScenarioName::Conditional => "conditional",
            ScenarioName::Ssl => "ssl",
        })
    }
}

/// One row of the shift table: which of the marginal and the conditional
/// mechanism are shared between source and target.
///
/// "Marginal" is `P(X)` in the causal direction and `P(Y)` in the anti-causal
/// one; "conditional" is `P(Y|X)` resp. `P(X|Y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Scenario {
    pub direction: Direction,
    pub marginal_shared: bool,
    pub conditional_shared: bool,
}

impl Scenario {
    pub fn new(direction: Direction, marginal_shared: bool, conditional_shared: bool) -> Self {
        Self {
            direction,
            marginal_shared,
            conditional_shared,
        }
    }

    pub fn name(&self) -> ScenarioName {
        use ScenarioName::*;
        match (self.direction, self.marginal_shared, self.conditional_shared) {
            (_, false, false) => General,
            (_, true, true) => Ssl,
            (Direction::Causal, false, true) => Covariate,
            (Direction::Causal, true, false) => Concept,
            (Direction::AntiCausal, false, true) => Target,
            (Direction::AntiCausal, true, false) => Conditional,
        }
    }

    pub fn from_name(direction: Direction, name: ScenarioName) -> Result<Self> {
        use ScenarioName::*;
        let (m, c) = match (direction, name) {
            (_, General) => (false, false),
            (_, Ssl) => (true, true),
            (Direction::Causal, Covariate) => (false, true),
            (Direction::Causal, Concept) => (true, false),
            (Direction::AntiCausal, Target) => (false, true),
            (Direction::AntiCausal, Conditional) => (true, false),
            _ => {
                return Err(ModelError::InvalidParameter(format!(
                    "scenario '{name}' does not exist for the {direction} direction"
                )))
            }
        };
        Ok(Self::new(direction, m, c))
    }

    /// All eight table rows, causal first, in table order.
    pub fn all() -> [Scenario; 8] {
        let mut out = [Scenario::new(Direction::Causal, false, false); 8];
        let mut i = 0;
        for d in [Direction::Causal, Direction::AntiCausal] {
            for (m, c) in [(false, false), (false, true), (true, false), (true, true)] {
                out[i] = Scenario::new(d, m, c);
                i += 1;
            }
        }
        out
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.direction, self.name())
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= PROB_TOL
}

fn first_mismatch(a: &[f64], b: &[f64]) -> Option<(usize, f64, f64)> {
    if a.len() != b.len() {
        return Some((a.len().min(b.len()), f64::NAN, f64::NAN));
    }
    a.iter()
        .zip(b)
        .enumerate()
        .find(|(_, (x, y))| !close(**x, **y))
        .map(|(i, (x, y))| (i, *x, *y))
}

/// Checks that every equality the scenario asserts holds element-wise.
///
/// Unshared mechanisms are not required to differ: a zero-size shift is a
/// legal (if uninteresting) instance of any row.
pub fn validate_scenario(s: &Scenario, d: &DomainPair) -> Result<()> {
    if s.direction != d.direction() {
        return Err(ModelError::ScenarioParameterMismatch(format!(
            "scenario is {} but the parameters are {}",
            s.direction,
            d.direction()
        )));
    }
    let mismatch = |what: &str, detail: String| {
        Err(ModelError::ScenarioParameterMismatch(format!(
            "{} requires {what}: {detail}",
            s.name()
        )))
    };
    match (d.source(), d.target()) {
        (Params::Causal(src), Params::Causal(tgt)) => {
            if s.marginal_shared {
                if let Some((i, a, b)) = first_mismatch(src.theta_x.probs(), tgt.theta_x.probs()) {
                    return mismatch(
                        "P_S(X) = P_T(X)",
                        format!("theta_x[{i}] is {a} in the source and {b} in the target"),
                    );
                }
            }
            if s.conditional_shared {
                if let Some((i, a, b)) = first_mismatch(&src.theta_yx, &tgt.theta_yx) {
                    return mismatch(
                        "P_S(Y|X) = P_T(Y|X)",
                        format!("theta_yx[{i}] is {a} in the source and {b} in the target"),
                    );
                }
            }
        }
        (Params::AntiCausal(src), Params::AntiCausal(tgt)) => {
            if s.marginal_shared && !close(src.theta_y, tgt.theta_y) {
                return mismatch(
                    "P_S(Y) = P_T(Y)",
                    format!(
                        "theta_y is {} in the source and {} in the target",
                        src.theta_y, tgt.theta_y
                    ),
                );
            }
            if s.conditional_shared {
                for (y, (a, b)) in src.components.iter().zip(&tgt.components).enumerate() {
                    if a.constraint != b.constraint {
                        return mismatch(
                            "P_S(X|Y) = P_T(X|Y)",
                            format!("component {y} uses different constraint tables"),
                        );
                    }
                    if !close(a.theta, b.theta) {
                        return mismatch(
                            "P_S(X|Y) = P_T(X|Y)",
                            format!(
                                "component {y} theta is {} in the source and {} in the target",
                                a.theta, b.theta
                            ),
                        );
                    }
                }
            }
        }
        _ => unreachable!("DomainPair enforces matching directions"),
    }
    Ok(())
}

/// Parameter tables of the synthetic toy experiments.
pub mod toy {
    use super::*;

    pub const TARGET_THETA_X: [f64; 4] = [0.25, 0.25, 0.25, 0.25];
    pub const TARGET_THETA_YX: [f64; 4] = [0.3, 0.4, 0.5, 0.6];
    pub const SHIFTED_THETA_X: [f64; 4] = [0.6, 0.1, 0.1, 0.2];
    pub const SHIFTED_THETA_YX: [f64; 4] = [0.5, 0.5, 0.3, 0.5];

    pub const TARGET_THETA_Y: f64 = 0.5;
    pub const TARGET_COMPONENT_THETA: f64 = 0.05;
    pub const SHIFTED_THETA_Y: f64 = 0.7;
    pub const SHIFTED_COMPONENT_THETA: f64 = 0.01;

    /// `X_0 ~ Cat(θ, θ+0.55, θ+0.2, 0.25−3θ)` and
    /// `X_1 ~ Cat(θ, θ+0.25, 0.4−3θ, θ+0.35)`.
    pub fn constraints() -> [AffineConstraint; 2] {
        [
            AffineConstraint::new(vec![0.0, 0.55, 0.2, 0.25], vec![1.0, 1.0, 1.0, -3.0]).unwrap(),
            AffineConstraint::new(vec![0.0, 0.25, 0.4, 0.35], vec![1.0, 1.0, -3.0, 1.0]).unwrap(),
        ]
    }

    pub fn causal(theta_x: [f64; 4], theta_yx: [f64; 4]) -> CausalParams {
        CausalParams::new(Categorical::new(theta_x.to_vec()).unwrap(), theta_yx.to_vec()).unwrap()
    }

    pub fn causal_target() -> CausalParams {
        causal(TARGET_THETA_X, TARGET_THETA_YX)
    }

    pub fn anticausal(theta_y: f64, theta0: f64, theta1: f64) -> AntiCausalParams {
        AntiCausalParams::from_thetas(&constraints(), theta_y, theta0, theta1).unwrap()
    }

    pub fn anticausal_target() -> AntiCausalParams {
        anticausal(TARGET_THETA_Y, TARGET_COMPONENT_THETA, TARGET_COMPONENT_THETA)
    }

    /// The domain pair used for each table row.
    pub fn domain_pair(s: &Scenario) -> DomainPair {
        match s.direction {
            Direction::Causal => {
                let theta_x = if s.marginal_shared {
                    TARGET_THETA_X
                } else {
                    SHIFTED_THETA_X
                };
                let theta_yx = if s.conditional_shared {
                    TARGET_THETA_YX
                } else {
                    SHIFTED_THETA_YX
                };
                DomainPair::new(
                    Params::Causal(causal(theta_x, theta_yx)),
                    Params::Causal(causal_target()),
                )
                .unwrap()
            }
            Direction::AntiCausal => {
                let theta_y = if s.marginal_shared {
                    TARGET_THETA_Y
                } else {
                    SHIFTED_THETA_Y
                };
                let comp = if s.conditional_shared {
                    TARGET_COMPONENT_THETA
                } else {
                    SHIFTED_COMPONENT_THETA
                };
                DomainPair::new(
                    Params::AntiCausal(anticausal(theta_y, comp, comp)),
                    Params::AntiCausal(anticausal_target()),
                )
                .unwrap()
            }
        }
    }
}
