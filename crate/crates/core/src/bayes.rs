//! The Bayesian mixture-strategy predictor.
//!
//! Causal direction: each cell's label mechanism has an independent Beta
//! prior, so the posterior predictive is the conjugate closed form and the
//! unlabeled causes drop out. Anti-causal direction: the three target scalars
//! `(θ_Y, θ_0, θ_1)` get a uniform prior over their feasible box, integrated
//! by composite Simpson quadrature on a Cartesian grid. All normalizations
//! are done in the log domain.

use crate::estimators::{causal_label_estimate, xlogy, CausalRule, EstimationPlan, TrainingCounts};
use crate::models::{AffineConstraint, Direction, DomainPair, LabeledDataset, UnlabeledDataset};
use crate::par::pairwise_sum;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BayesError {
    #[error("every grid node has zero posterior mass")]
    AllWeightsZero,
    #[error("x = {x} has zero predictive mass under every grid node")]
    ZeroMarginalMass { x: usize },
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("expected {expected} parameters")]
    DirectionMismatch { expected: Direction },
    #[error("grid has {got} weights, expected {expected}")]
    ShapeMismatch { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, BayesError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind {
    #[default]
    Jeffreys,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    pub kind: PriorKind,
    /// Beta(α, β) on every causal cell mechanism.
    pub causal_alpha: f64,
    pub causal_beta: f64,
    /// Nodes per anti-causal axis; odd, at least 11.
    pub grid_points: usize,
}

pub const DEFAULT_GRID_POINTS: usize = 201;

impl Default for PriorSpec {
    fn default() -> Self {
        Self::from_kind(PriorKind::Jeffreys, DEFAULT_GRID_POINTS)
    }
}

impl PriorSpec {
    /// Jeffreys is Beta(½, ½), uniform is Beta(1, 1). The anti-causal grid
    /// prior is uniform either way.
    pub fn from_kind(kind: PriorKind, grid_points: usize) -> Self {
        let a = match kind {
            PriorKind::Jeffreys => 0.5,
            PriorKind::Uniform => 1.0,
        };
        Self {
            kind,
            causal_alpha: a,
            causal_beta: a,
            grid_points,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.causal_alpha > 0.0 && self.causal_beta > 0.0) {
            return Err(BayesError::InvalidPrior(format!(
                "Beta parameters must be positive, got ({}, {})",
                self.causal_alpha, self.causal_beta
            )));
        }
        if self.grid_points < 11 || self.grid_points.is_multiple_of(2) {
            return Err(BayesError::InvalidPrior(format!(
                "grid_points must be odd and >= 11, got {}",
                self.grid_points
            )));
        }
        Ok(())
    }
}

/// `(ones + α) / (zeros + ones + α + β)`.
pub fn jeffreys_predictive_causal(counts_at_x: (u64, u64), prior: &PriorSpec) -> f64 {
    let (z, o) = counts_at_x;
    (o as f64 + prior.causal_alpha) / ((z + o) as f64 + prior.causal_alpha + prior.causal_beta)
}

/// Causal mixture predictive for every cell.
pub fn causal_predictive(counts: &TrainingCounts, plan: &EstimationPlan, prior: &PriorSpec) -> Vec<f64> {
    causal_label_estimate(
        counts,
        plan,
        CausalRule::Smoothed {
            alpha: prior.causal_alpha,
            beta: prior.causal_beta,
        },
    )
}

/// Normalized log quadrature weights of a uniform prior on `[lo, hi]`.
fn simpson_log_weights(points: usize, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    let axis: Vec<f64> = (0..points)
        .map(|i| {
            if i + 1 == points {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (points - 1) as f64
            }
        })
        .collect();
    let raw: Vec<f64> = (0..points)
        .map(|i| {
            if hi == lo || i == 0 || i + 1 == points {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            }
        })
        .collect();
    let total: f64 = raw.iter().sum();
    (axis, raw.iter().map(|w| (w / total).ln()).collect())
}

/// Streaming log-sum-exp accumulator.
#[derive(Debug, Clone, Copy)]
struct LogSum {
    max: f64,
    sum: f64,
}

impl LogSum {
    const EMPTY: Self = Self {
        max: f64::NEG_INFINITY,
        sum: 0.0,
    };

    #[inline]
    fn add(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if v <= self.max {
            self.sum += (v - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - v).exp() + 1.0;
            self.max = v;
        }
    }

    fn value(&self) -> f64 {
        if self.sum == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

/// Precomputed quadrature grid for the anti-causal target parameters.
#[derive(Debug, Clone)]
pub struct GridModel {
    constraints: [AffineConstraint; 2],
    axes: [Vec<f64>; 3],
    log_w: [Vec<f64>; 3],
    /// `p_y(x; θ_y)` per node of axis `1 + y`, row-major by node.
    p: [Vec<f64>; 2],
    k: usize,
}

impl GridModel {
    pub fn new(constraints: [AffineConstraint; 2], prior: &PriorSpec) -> Result<Self> {
        prior.validate()?;
        let k = constraints[0].len();
        if constraints[1].len() != k {
            return Err(BayesError::ShapeMismatch {
                expected: k,
                got: constraints[1].len(),
            });
        }
        let g = prior.grid_points;
        let (ay, wy) = simpson_log_weights(g, 0.0, 1.0);
        let (lo0, hi0) = constraints[0].feasible();
        let (lo1, hi1) = constraints[1].feasible();
        let (a0, w0) = simpson_log_weights(g, lo0, hi0);
        let (a1, w1) = simpson_log_weights(g, lo1, hi1);
        let table = |c: &AffineConstraint, axis: &[f64]| -> Vec<f64> {
            axis.iter()
                .flat_map(|&t| (0..k).map(move |x| c.prob_at(x, t)))
                .collect()
        };
        let p = [table(&constraints[0], &a0), table(&constraints[1], &a1)];
        Ok(Self {
            constraints,
            axes: [ay, a0, a1],
            log_w: [wy, w0, w1],
            p,
            k,
        })
    }

    /// A grid with explicit nodes and per-axis prior weights (normalized
    /// here). A single node per axis puts all prior mass on one point.
    pub fn from_axes(constraints: [AffineConstraint; 2], axes: [Vec<f64>; 3], weights: [Vec<f64>; 3]) -> Result<Self> {
        let k = constraints[0].len();
        let mut log_w: [Vec<f64>; 3] = Default::default();
        for a in 0..3 {
            let w = &weights[a];
            let total: f64 = w.iter().sum();
            if axes[a].is_empty() || w.len() != axes[a].len() || !(total > 0.0) || w.iter().any(|&v| v < 0.0) {
                return Err(BayesError::InvalidPrior(format!(
                    "axis {a} has invalid nodes or weights"
                )));
            }
            log_w[a] = w.iter().map(|v| (v / total).ln()).collect();
        }
        let table = |c: &AffineConstraint, axis: &[f64]| -> Vec<f64> {
            axis.iter()
                .flat_map(|&t| (0..k).map(move |x| c.prob_at(x, t)))
                .collect()
        };
        let p = [table(&constraints[0], &axes[1]), table(&constraints[1], &axes[2])];
        Ok(Self {
            constraints,
            axes,
            log_w,
            p,
            k,
        })
    }

    pub fn from_pair(d: &DomainPair, prior: &PriorSpec) -> Result<Self> {
        let t = d.target().as_anticausal().ok_or(BayesError::DirectionMismatch {
            expected: Direction::AntiCausal,
        })?;
        Self::new(t.constraints(), prior)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn constraints(&self) -> &[AffineConstraint; 2] {
        &self.constraints
    }

    pub fn axes(&self) -> &[Vec<f64>; 3] {
        &self.axes
    }

    /// Visits every node with its unnormalized log posterior (prior weight
    /// plus log-likelihood of the tied data), in row-major `(θ_Y, θ_0, θ_1)`
    /// order.
    fn for_each_node<F: FnMut(usize, usize, usize, f64)>(
        &self,
        counts: &TrainingCounts,
        plan: &EstimationPlan,
        mut f: F,
    ) {
        let k = self.k;
        let g = [self.axes[0].len(), self.axes[1].len(), self.axes[2].len()];
        let use_source = plan.usable_source && counts.m() > 0;
        // Separable source terms.
        let sy: Vec<f64> = self.axes[0]
            .iter()
            .zip(&self.log_w[0])
            .map(|(&t, &w)| {
                let mut v = w;
                if use_source && plan.pooled_marginal {
                    let (z, o) = counts.source_labels();
                    v += xlogy(z, 1.0 - t) + xlogy(o, t);
                }
                v
            })
            .collect();
        let comp_terms = |y: usize| -> Vec<f64> {
            (0..g[1 + y])
                .map(|j| {
                    let mut v = self.log_w[1 + y][j];
                    if use_source && plan.pooled_components {
                        for x in 0..k {
                            v += xlogy(counts.source_cell(x, y), self.p[y][j * k + x]);
                        }
                    }
                    v
                })
                .collect()
        };
        let s0 = comp_terms(0);
        let s1 = comp_terms(1);
        let active: Vec<(usize, f64)> = counts
            .target
            .iter()
            .enumerate()
            .filter(|(_, &u)| u > 0)
            .map(|(x, &u)| (x, u as f64))
            .collect();
        let mut a = vec![0.0; active.len()];
        for i in 0..g[0] {
            let ty = self.axes[0][i];
            if sy[i] == f64::NEG_INFINITY {
                continue;
            }
            for j in 0..g[1] {
                let base = sy[i] + s0[j];
                if base == f64::NEG_INFINITY {
                    continue;
                }
                for (slot, &(x, _)) in a.iter_mut().zip(&active) {
                    *slot = (1.0 - ty) * self.p[0][j * k + x];
                }
                for l in 0..g[2] {
                    let mut lp = base + s1[l];
                    if lp == f64::NEG_INFINITY {
                        continue;
                    }
                    for (&ax, &(x, u)) in a.iter().zip(&active) {
                        lp += u * (ax + ty * self.p[1][l * k + x]).ln();
                    }
                    f(i, j, l, lp);
                }
            }
        }
    }

    /// Materialized posterior. Memory is `grid_points³` doubles.
    pub fn posterior(&self, counts: &TrainingCounts, plan: &EstimationPlan) -> Result<PosteriorGrid> {
        let g = [self.axes[0].len(), self.axes[1].len(), self.axes[2].len()];
        let mut lp = vec![f64::NEG_INFINITY; g[0] * g[1] * g[2]];
        self.for_each_node(counts, plan, |i, j, l, v| lp[(i * g[1] + j) * g[2] + l] = v);
        let max = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY || max.is_nan() {
            return Err(BayesError::AllWeightsZero);
        }
        let w: Vec<f64> = lp.iter().map(|&v| (v - max).exp()).collect();
        let total = pairwise_sum(&w);
        Ok(PosteriorGrid {
            constraints: self.constraints.clone(),
            axes: self.axes.clone(),
            weights: w.iter().map(|v| v / total).collect(),
        })
    }

    /// `P(Y = 1 | x, data)` for every `x`, conditioning the posterior on the
    /// test feature as the mixture strategy prescribes. Streams over the grid
    /// without materializing it. Cells without predictive mass are `NaN`.
    pub fn predictive(&self, counts: &TrainingCounts, plan: &EstimationPlan) -> Result<Vec<f64>> {
        let k = self.k;
        let mut max = f64::NEG_INFINITY;
        let mut num = vec![0.0; k];
        let mut den = vec![0.0; k];
        let mut any = false;
        self.for_each_node(counts, plan, |i, j, l, lp| {
            if lp == f64::NEG_INFINITY || lp.is_nan() {
                return;
            }
            any = true;
            if lp > max {
                let scale = (max - lp).exp();
                for v in num.iter_mut().chain(den.iter_mut()) {
                    *v *= scale;
                }
                max = lp;
            }
            let w = (lp - max).exp();
            let ty = self.axes[0][i];
            for x in 0..k {
                let one = ty * self.p[1][l * k + x];
                let zero = (1.0 - ty) * self.p[0][j * k + x];
                num[x] += w * one;
                den[x] += w * (one + zero);
            }
        });
        if !any {
            return Err(BayesError::AllWeightsZero);
        }
        Ok(num
            .iter()
            .zip(&den)
            .map(|(&a, &b)| if b > 0.0 { (a / b).clamp(0.0, 1.0) } else { f64::NAN })
            .collect())
    }

    /// Log mixture masses computed as evidence ratios:
    /// `ln Q(data, x, y)` per `(x, y)` and `ln Q(data, x)` per `x`. Shares no
    /// normalization with [`GridModel::predictive`]; used as an independent
    /// route to the same predictive.
    pub fn log_evidence(&self, counts: &TrainingCounts, plan: &EstimationPlan) -> (Vec<[f64; 2]>, Vec<f64>) {
        let k = self.k;
        let mut joint = vec![[LogSum::EMPTY; 2]; k];
        let mut marg = vec![LogSum::EMPTY; k];
        self.for_each_node(counts, plan, |i, j, l, lp| {
            let ty = self.axes[0][i];
            for x in 0..k {
                let p1 = self.p[1][l * k + x];
                let p0 = self.p[0][j * k + x];
                joint[x][1].add(lp + ty.ln() + p1.ln());
                joint[x][0].add(lp + (1.0 - ty).ln() + p0.ln());
                marg[x].add(lp + (ty * p1 + (1.0 - ty) * p0).ln());
            }
        });
        (
            joint.iter().map(|c| [c[0].value(), c[1].value()]).collect(),
            marg.iter().map(LogSum::value).collect(),
        )
    }
}

/// A normalized posterior over the Cartesian `(θ_Y, θ_0, θ_1)` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorGrid {
    constraints: [AffineConstraint; 2],
    axes: [Vec<f64>; 3],
    /// Row-major by `(θ_Y, θ_0, θ_1)`.
    weights: Vec<f64>,
}

impl PosteriorGrid {
    /// Builds a grid from explicit nonnegative weights (normalized here).
    pub fn from_weights(constraints: [AffineConstraint; 2], axes: [Vec<f64>; 3], weights: Vec<f64>) -> Result<Self> {
        let expected = axes.iter().map(Vec::len).product();
        if weights.len() != expected {
            return Err(BayesError::ShapeMismatch {
                expected,
                got: weights.len(),
            });
        }
        let total = pairwise_sum(&weights);
        if !(total > 0.0) || weights.iter().any(|&w| w < 0.0) {
            return Err(BayesError::AllWeightsZero);
        }
        Ok(Self {
            constraints,
            axes,
            weights: weights.iter().map(|w| w / total).collect(),
        })
    }

    /// All mass on one parameter point.
    pub fn point(constraints: [AffineConstraint; 2], theta: [f64; 3]) -> Self {
        Self {
            constraints,
            axes: [vec![theta[0]], vec![theta[1]], vec![theta[2]]],
            weights: vec![1.0],
        }
    }

    pub fn axes(&self) -> &[Vec<f64>; 3] {
        &self.axes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn nodes(&self) -> impl Iterator<Item = (f64, f64, f64, f64)> + '_ {
        let [a, b, c] = &self.axes;
        let (gb, gc) = (b.len(), c.len());
        self.weights.iter().enumerate().map(move |(idx, &w)| {
            let i = idx / (gb * gc);
            let j = (idx / gc) % gb;
            let l = idx % gc;
            (w, a[i], b[j], c[l])
        })
    }

    /// Posterior mean of `(θ_Y, θ_0, θ_1)`.
    pub fn mean(&self) -> [f64; 3] {
        let mut m = [0.0; 3];
        for (w, a, b, c) in self.nodes() {
            m[0] += w * a;
            m[1] += w * b;
            m[2] += w * c;
        }
        m
    }
}

/// Posterior over the target anti-causal parameters given both samples.
pub fn grid_posterior_anticausal(
    unlabeled_t: &UnlabeledDataset,
    labeled_s: &LabeledDataset,
    plan: &EstimationPlan,
    templates: &DomainPair,
    prior: &PriorSpec,
) -> Result<PosteriorGrid> {
    let model = GridModel::from_pair(templates, prior)?;
    let counts = TrainingCounts::from_data(labeled_s, unlabeled_t, templates.k());
    model.posterior(&counts, plan)
}

/// `Σ w·θ_Y·p_1(x) / Σ w·P(x)` over the grid.
pub fn predictive_anticausal(g: &PosteriorGrid, x: usize) -> Result<f64> {
    let [c0, c1] = &g.constraints;
    let (mut num, mut den) = (0.0, 0.0);
    for (w, ty, t0, t1) in g.nodes() {
        if w == 0.0 {
            continue;
        }
        let one = ty * c1.prob_at(x, t1);
        num += w * one;
        den += w * (one + (1.0 - ty) * c0.prob_at(x, t0));
    }
    if den > 0.0 {
        Ok((num / den).clamp(0.0, 1.0))
    } else {
        Err(BayesError::ZeroMarginalMass { x })
    }
}
