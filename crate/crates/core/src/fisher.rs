//! Per-observation Fisher information for the toy families, finite-difference
//! cross-checks, and the asymptotic rate constants built from them.
//!
//! Anti-causal parameters are ordered `(θ_Y, θ_0, θ_1)`.

use crate::models::{
    AntiCausalParams, Categorical, CausalParams, Direction, DomainPair, ModelError, Scenario, ScenarioName,
};
use crate::risk::{excess_logloss_conditional, RiskError};
use nalgebra::DMatrix;
use serde::Serialize;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FisherError {
    #[error("parameter {index} = {value} sits on the boundary of its range")]
    BoundaryParameter { index: usize, value: f64 },
    #[error("finite-difference step {h} needs a margin of {needed} around parameter {index}, only {margin} available")]
    StepTooLarge {
        index: usize,
        h: f64,
        needed: f64,
        margin: f64,
    },
    #[error("weights cover {weights} cells but the model has {k}")]
    SizeMismatch { weights: usize, k: usize },
    #[error("target mass at x = {x} is not covered by the source")]
    UnsharedSupport { x: usize },
    #[error("{0} information matrix is singular")]
    Singular(&'static str),
    #[error(
        "{scenario} has no vanishing rate; risk plateaus at {no_source_plateau} without source labels \
         and {source_plateau} when predicting with the source mechanism"
    )]
    UnsupportedScenario {
        scenario: Scenario,
        no_source_plateau: f64,
        source_plateau: f64,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Risk(#[from] RiskError),
}

pub type Result<T> = std::result::Result<T, FisherError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FisherKind {
    LabeledSource,
    LabeledTarget,
    UnlabeledTarget,
}

impl fmt::Display for FisherKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FisherKind::LabeledSource => "labeled_source",
            FisherKind::LabeledTarget => "labeled_target",
            FisherKind::UnlabeledTarget => "unlabeled_target",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FisherReport {
    pub matrix: DMatrix<f64>,
    pub labels: Vec<String>,
    pub kind: FisherKind,
}

impl FisherReport {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.matrix)
    }
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// `‖a − b‖_F / ‖b‖_F`.
pub fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

fn anticausal_labels() -> Vec<String> {
    vec!["theta_y".into(), "theta_0".into(), "theta_1".into()]
}

fn check_interior(index: usize, value: f64, lo: f64, hi: f64) -> Result<()> {
    if value <= lo || value >= hi {
        return Err(FisherError::BoundaryParameter { index, value });
    }
    Ok(())
}

fn check_anticausal(p: &AntiCausalParams) -> Result<()> {
    check_interior(0, p.theta_y(), 0.0, 1.0)?;
    for y in 0..2 {
        let c = p.component(y);
        let (lo, hi) = c.constraint().feasible();
        check_interior(y + 1, c.theta(), lo, hi)?;
    }
    Ok(())
}

/// Fisher information of the label mechanisms `θ_{Y|x}` when `x` is drawn
/// from `weights`: `diag(w_x / (θ_x (1 − θ_x)))`.
pub fn fisher_causal_conditional(p: &CausalParams, weights: &Categorical) -> Result<FisherReport> {
    if weights.len() != p.k() {
        return Err(FisherError::SizeMismatch {
            weights: weights.len(),
            k: p.k(),
        });
    }
    let mut m = DMatrix::zeros(p.k(), p.k());
    for (x, &t) in p.theta_yx().iter().enumerate() {
        check_interior(x, t, 0.0, 1.0)?;
        m[(x, x)] = weights.prob(x) / (t * (1.0 - t));
    }
    Ok(FisherReport {
        matrix: m,
        labels: (0..p.k()).map(|x| format!("theta_y|x={x}")).collect(),
        kind: FisherKind::LabeledSource,
    })
}

/// Fisher information of one labeled anti-causal pair; block diagonal.
pub fn fisher_anticausal_labeled(p: &AntiCausalParams) -> Result<FisherReport> {
    check_anticausal(p)?;
    let ty = p.theta_y();
    let mut m = DMatrix::zeros(3, 3);
    m[(0, 0)] = 1.0 / (ty * (1.0 - ty));
    for y in 0..2 {
        let c = p.component(y);
        let coef = c.constraint().coef();
        let info: f64 = (0..p.k())
            .filter(|&x| c.prob(x) > 0.0)
            .map(|x| coef[x] * coef[x] / c.prob(x))
            .sum();
        m[(y + 1, y + 1)] = p.label_prob(y) * info;
    }
    Ok(FisherReport {
        matrix: m,
        labels: anticausal_labels(),
        kind: FisherKind::LabeledTarget,
    })
}

/// Fisher information of one unlabeled draw from the mixture marginal
/// `P(x) = (1 − θ_Y) p_0(x) + θ_Y p_1(x)`.
pub fn fisher_anticausal_unlabeled(p: &AntiCausalParams) -> Result<FisherReport> {
    check_anticausal(p)?;
    let ty = p.theta_y();
    let (c0, c1) = (p.component(0), p.component(1));
    let mut m = DMatrix::zeros(3, 3);
    for x in 0..p.k() {
        let px = p.marginal(x);
        if px <= 0.0 {
            continue;
        }
        let g = [
            c1.prob(x) - c0.prob(x),
            (1.0 - ty) * c0.constraint().coef()[x],
            ty * c1.constraint().coef()[x],
        ];
        for i in 0..3 {
            for j in 0..3 {
                m[(i, j)] += g[i] * g[j] / px;
            }
        }
    }
    Ok(FisherReport {
        matrix: m,
        labels: anticausal_labels(),
        kind: FisherKind::UnlabeledTarget,
    })
}

/// Finite-difference settings for [`numeric_fisher`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdOptions {
    pub h: f64,
    /// Combine steps `h` and `h/2` to cancel the `h²` truncation term.
    pub richardson: bool,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            h: 1e-5,
            richardson: false,
        }
    }
}

/// Negated central-difference Hessian of an expected log-density at `theta`.
///
/// `f(θ')` must return `E_θ[log P_θ'(Z) − log P_θ(Z)]`, i.e. it is measured
/// relative to the expansion point so that it is O(h²) there and round-off
/// stays small. `bounds` give the admissible range of each coordinate.
pub fn numeric_fisher<F>(f: F, theta: &[f64], bounds: &[(f64, f64)], opts: FdOptions) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let h = opts.h;
    for (i, (&t, &(lo, hi))) in theta.iter().zip(bounds).enumerate() {
        let margin = (t - lo).min(hi - t);
        if !(h > 0.0) || margin < 2.0 * h {
            return Err(FisherError::StepTooLarge {
                index: i,
                h,
                needed: 2.0 * h,
                margin,
            });
        }
    }
    let coarse = hessian(&f, theta, h);
    if !opts.richardson {
        return Ok(-coarse);
    }
    let fine = hessian(&f, theta, h / 2.0);
    Ok(-(fine * 4.0 - coarse) / 3.0)
}

fn hessian<F: Fn(&[f64]) -> f64>(f: &F, theta: &[f64], h: f64) -> DMatrix<f64> {
    let d = theta.len();
    let at = |steps: &[(usize, f64)]| {
        let mut t = theta.to_vec();
        for &(i, s) in steps {
            t[i] += s;
        }
        f(&t)
    };
    let f0 = f(theta);
    let mut hm = DMatrix::zeros(d, d);
    for i in 0..d {
        hm[(i, i)] = (at(&[(i, h)]) - 2.0 * f0 + at(&[(i, -h)])) / (h * h);
        for j in 0..i {
            let v = (at(&[(i, h), (j, h)]) - at(&[(i, h), (j, -h)]) - at(&[(i, -h), (j, h)]) + at(&[(i, -h), (j, -h)]))
                / (4.0 * h * h);
            hm[(i, j)] = v;
            hm[(j, i)] = v;
        }
    }
    hm
}

/// `p ln(1 + d/p)`, zero when `p = 0`.
fn weighted_log1p(weight: f64, base: f64, delta: f64) -> f64 {
    if weight == 0.0 {
        0.0
    } else {
        weight * (delta / base).ln_1p()
    }
}

fn anticausal_bounds(p: &AntiCausalParams) -> Vec<(f64, f64)> {
    vec![
        (0.0, 1.0),
        p.component(0).constraint().feasible(),
        p.component(1).constraint().feasible(),
    ]
}

fn anticausal_theta(p: &AntiCausalParams) -> Vec<f64> {
    vec![p.theta_y(), p.component(0).theta(), p.component(1).theta()]
}

/// [`numeric_fisher`] applied to the label mechanisms of a causal model.
pub fn numeric_fisher_causal(p: &CausalParams, weights: &Categorical, opts: FdOptions) -> Result<DMatrix<f64>> {
    let base = p.theta_yx().to_vec();
    let f = |t: &[f64]| -> f64 {
        (0..base.len())
            .map(|x| {
                let d = t[x] - base[x];
                let w = weights.prob(x);
                weighted_log1p(w * base[x], base[x], d) + weighted_log1p(w * (1.0 - base[x]), 1.0 - base[x], -d)
            })
            .sum()
    };
    numeric_fisher(f, &base, &vec![(0.0, 1.0); base.len()], opts)
}

/// [`numeric_fisher`] applied to the labeled anti-causal likelihood.
pub fn numeric_fisher_anticausal_labeled(p: &AntiCausalParams, opts: FdOptions) -> Result<DMatrix<f64>> {
    let theta = anticausal_theta(p);
    let f = |t: &[f64]| -> f64 {
        let dy = t[0] - theta[0];
        let mut s =
            weighted_log1p(p.label_prob(1), theta[0], dy) + weighted_log1p(p.label_prob(0), 1.0 - theta[0], -dy);
        for y in 0..2 {
            let c = p.component(y);
            let d = t[y + 1] - theta[y + 1];
            for x in 0..p.k() {
                let px = c.prob(x);
                if px > 0.0 {
                    s += weighted_log1p(p.label_prob(y) * px, px, c.constraint().coef()[x] * d);
                }
            }
        }
        s
    };
    numeric_fisher(f, &theta, &anticausal_bounds(p), opts)
}

/// [`numeric_fisher`] applied to the unlabeled mixture likelihood.
pub fn numeric_fisher_anticausal_unlabeled(p: &AntiCausalParams, opts: FdOptions) -> Result<DMatrix<f64>> {
    let theta = anticausal_theta(p);
    let (c0, c1) = (p.component(0), p.component(1));
    let f = |t: &[f64]| -> f64 {
        let (dy, d0, d1) = (t[0] - theta[0], t[1] - theta[1], t[2] - theta[2]);
        (0..p.k())
            .map(|x| {
                let px = p.marginal(x);
                if px <= 0.0 {
                    return 0.0;
                }
                let delta = dy * (c1.prob(x) - c0.prob(x))
                    + (1.0 - t[0]) * c0.constraint().coef()[x] * d0
                    + t[0] * c1.constraint().coef()[x] * d1;
                weighted_log1p(px, px, delta)
            })
            .sum()
    };
    numeric_fisher(f, &theta, &anticausal_bounds(p), opts)
}

/// Which sample size a rate constant multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeAxis {
    M,
    NPlusOne,
    MPlusN,
}

impl fmt::Display for SizeAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SizeAxis::M => "m",
            SizeAxis::NPlusOne => "n_plus_1",
            SizeAxis::MPlusN => "m_plus_n",
        })
    }
}

/// Limit of `risk × size` for one asymptotic term.
#[derive(Debug, Clone, PartialEq)]
pub struct RateConstant {
    pub scenario: Scenario,
    pub formula_id: &'static str,
    pub predicted_risk_times_size: f64,
    pub size_axis: SizeAxis,
}

impl RateConstant {
    /// Slope of `1/risk` against the size axis.
    pub fn reciprocal_slope(&self) -> f64 {
        1.0 / self.predicted_risk_times_size
    }
}

fn causal_parts(d: &DomainPair) -> (&CausalParams, &CausalParams) {
    (
        d.source().as_causal().expect("causal pair"),
        d.target().as_causal().expect("causal pair"),
    )
}

fn anticausal_parts(d: &DomainPair) -> (&AntiCausalParams, &AntiCausalParams) {
    (
        d.source().as_anticausal().expect("anti-causal pair"),
        d.target().as_anticausal().expect("anti-causal pair"),
    )
}

/// `Σ_x P_t(x) / P_s(x)`.
fn importance_trace(s: &CausalParams, t: &CausalParams) -> Result<f64> {
    let mut acc = 0.0;
    for x in 0..t.k() {
        let (pt, ps) = (t.theta_x().prob(x), s.theta_x().prob(x));
        if pt > 0.0 {
            if ps <= 0.0 {
                return Err(FisherError::UnsharedSupport { x });
            }
            acc += pt / ps;
        }
    }
    Ok(acc)
}

fn causal_plateaus(d: &DomainPair) -> Result<(f64, f64)> {
    let (s, _) = causal_parts(d);
    let no_source = excess_logloss_conditional(d.target(), &vec![0.5; d.k()])?;
    let source = excess_logloss_conditional(d.target(), s.theta_yx())?;
    Ok((no_source, source))
}

fn inverse(a: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    a.clone().try_inverse().ok_or(FisherError::Singular(what))
}

/// Indices of the anti-causal parameters estimated from target data only.
fn untied(name: ScenarioName) -> Vec<usize> {
    match name {
        ScenarioName::Target => vec![0],
        ScenarioName::Conditional => vec![1, 2],
        ScenarioName::Ssl => vec![],
        _ => vec![0, 1, 2],
    }
}

fn block(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| a[(idx[i], idx[j])])
}

/// `½ tr((I_XY − I_t) I_t⁻¹)` on the coordinates `idx`.
fn half_excess_trace(labeled: &DMatrix<f64>, unlabeled: &DMatrix<f64>, idx: &[usize]) -> Result<f64> {
    let (l, u) = (block(labeled, idx), block(unlabeled, idx));
    Ok(0.5 * ((l - &u) * inverse(&u, "unlabeled target")?).trace())
}

/// Asymptotic `risk × size` constants for a scenario.
///
/// Causal covariate shift and SSL: `½ Σ P_t/P_s` per labeled source example.
/// Anti-causal general shift: `½ tr((I_XY − I_t) I_t⁻¹)` per `n + 1`. For
/// anti-causal target and conditional shift the source pins the tied
/// parameters as `m → ∞`; the remaining risk at fixed `n` decays like the
/// general-shift constant restricted to the untied block. Anti-causal SSL
/// assumes the sweep grows `m = n` together.
pub fn rate_constants(s: &Scenario, d: &DomainPair) -> Result<Vec<RateConstant>> {
    crate::models::validate_scenario(s, d)?;
    let rc = |formula_id, value, size_axis| RateConstant {
        scenario: *s,
        formula_id,
        predicted_risk_times_size: value,
        size_axis,
    };
    match d.direction() {
        Direction::Causal => match s.name() {
            ScenarioName::Covariate | ScenarioName::Ssl => {
                let (src, tgt) = causal_parts(d);
                Ok(vec![rc(
                    "causal_importance_trace",
                    0.5 * importance_trace(src, tgt)?,
                    SizeAxis::M,
                )])
            }
            _ => {
                let (no_source_plateau, source_plateau) = causal_plateaus(d)?;
                Err(FisherError::UnsupportedScenario {
                    scenario: *s,
                    no_source_plateau,
                    source_plateau,
                })
            }
        },
        Direction::AntiCausal => {
            let (_, tgt) = anticausal_parts(d);
            let l = fisher_anticausal_labeled(tgt)?.matrix;
            let u = fisher_anticausal_unlabeled(tgt)?.matrix;
            match s.name() {
                ScenarioName::Ssl => {
                    let tr = ((&l - &u) * inverse(&(&u + &l), "pooled")?).trace();
                    Ok(vec![rc("anticausal_ssl_equal_sizes", tr, SizeAxis::MPlusN)])
                }
                name => {
                    let id = match name {
                        ScenarioName::Target => "anticausal_target_untied_block",
                        ScenarioName::Conditional => "anticausal_conditional_untied_block",
                        _ => "anticausal_general_trace",
                    };
                    Ok(vec![rc(
                        id,
                        half_excess_trace(&l, &u, &untied(name))?,
                        SizeAxis::NPlusOne,
                    )])
                }
            }
        }
    }
}

fn log_det(a: &DMatrix<f64>, what: &'static str) -> Result<f64> {
    let c = a.clone().cholesky().ok_or(FisherError::Singular(what))?;
    Ok(2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

/// Source labeled information about the parameters shared with the target.
fn tied_source_information(name: ScenarioName, src: &AntiCausalParams) -> Result<DMatrix<f64>> {
    let full = fisher_anticausal_labeled(src)?.matrix;
    let free = untied(name);
    Ok(DMatrix::from_fn(3, 3, |i, j| {
        if free.contains(&i) || free.contains(&j) {
            0.0
        } else {
            full[(i, j)]
        }
    }))
}

/// Finite-size risk predicted by the Laplace expansion of the mixture
/// regret, keeping the `+1` terms:
///
/// causal (covariate/SSL) `½ Σ_x ln(1 + P_t(x) / (m P_s(x)))`;
/// anti-causal `½ [ln det(n I_t + m J + I_XY) − ln det((n + 1) I_t + m J)]`
/// with `J` the source information on tied parameters. Causal general shift
/// and concept drift return the no-source plateau.
pub fn predicted_risk(s: &Scenario, d: &DomainPair, m: usize, n: usize) -> Result<f64> {
    crate::models::validate_scenario(s, d)?;
    let (m, n) = (m as f64, n as f64);
    match d.direction() {
        Direction::Causal => {
            let (src, tgt) = causal_parts(d);
            match s.name() {
                ScenarioName::Covariate | ScenarioName::Ssl => {
                    importance_trace(src, tgt)?;
                    Ok(0.5
                        * (0..tgt.k())
                            .filter(|&x| tgt.theta_x().prob(x) > 0.0)
                            .map(|x| (tgt.theta_x().prob(x) / (m * src.theta_x().prob(x))).ln_1p())
                            .sum::<f64>())
                }
                _ => Ok(causal_plateaus(d)?.0),
            }
        }
        Direction::AntiCausal => {
            let (src, tgt) = anticausal_parts(d);
            let l = fisher_anticausal_labeled(tgt)?.matrix;
            let u = fisher_anticausal_unlabeled(tgt)?.matrix;
            let j = tied_source_information(s.name(), src)? * m;
            let num = &u * n + &j + &l;
            let den = &u * (n + 1.0) + &j;
            Ok(0.5 * (log_det(&num, "posterior")? - log_det(&den, "prior-predictive")?))
        }
    }
}
