//! Curve fitting over risk sweeps and the direction advisor.

use crate::models::{Direction, Scenario, ScenarioName};
use crate::risk::RiskEstimate;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RatesError {
    #[error("risk at point {index} is {value}; reciprocal fits need positive risk")]
    NonPositiveRisk { index: usize, value: f64 },
    #[error("curve has {got} points, need at least {need}")]
    TooFewPoints { got: usize, need: usize },
    #[error("sizes must be strictly increasing (point {index})")]
    NotIncreasing { index: usize },
    #[error("no asymptote profile gives a positive r2")]
    DegenerateCurve,
    #[error("{scenario} does not belong to the {expected} direction")]
    WrongDirection { scenario: Scenario, expected: Direction },
    #[error("sample sizes must be positive")]
    NonPositiveSize,
}

pub type Result<T> = std::result::Result<T, RatesError>;

/// Which sample size a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveAxis {
    M,
    N,
    MPlusN,
}

impl fmt::Display for CurveAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CurveAxis::M => "m",
            CurveAxis::N => "n",
            CurveAxis::MPlusN => "m_plus_n",
        })
    }
}

pub const MIN_CURVE_POINTS: usize = 4;
pub const MIN_ASYMPTOTE_POINTS: usize = 5;
pub const LAMBDA_GRID: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct RiskCurve {
    axis: CurveAxis,
    points: Vec<(u64, RiskEstimate)>,
}

impl RiskCurve {
    pub fn new(axis: CurveAxis, points: Vec<(u64, RiskEstimate)>) -> Result<Self> {
        if points.len() < MIN_CURVE_POINTS {
            return Err(RatesError::TooFewPoints {
                got: points.len(),
                need: MIN_CURVE_POINTS,
            });
        }
        if let Some(i) = (1..points.len()).find(|&i| points[i].0 <= points[i - 1].0) {
            return Err(RatesError::NotIncreasing { index: i });
        }
        Ok(Self { axis, points })
    }

    pub fn axis(&self) -> CurveAxis {
        self.axis
    }

    pub fn points(&self) -> &[(u64, RiskEstimate)] {
        &self.points
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    ReciprocalLinear,
    Asymptote,
}

impl fmt::Display for FitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitKind::ReciprocalLinear => "reciprocal_linear",
            FitKind::Asymptote => "asymptote",
        })
    }
}

/// `1/(R − λ) ≈ slope·size + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitReport {
    pub kind: FitKind,
    pub slope: f64,
    pub intercept: f64,
    pub lambda: f64,
    /// Spacing of the λ profile grid; 0 for reciprocal-linear fits.
    pub lambda_step: f64,
    pub r2: f64,
}

struct Line {
    slope: f64,
    intercept: f64,
    r2: f64,
}

/// Weighted least squares of `y` on `x`. Zero total variation counts as a
/// perfect fit when the residuals vanish too.
fn weighted_line(x: &[f64], y: &[f64], w: &[f64]) -> Line {
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for ((&xi, &yi), &wi) in x.iter().zip(y).zip(w) {
        sxx += wi * (xi - mx) * (xi - mx);
        sxy += wi * (xi - mx) * (yi - my);
        syy += wi * (yi - my) * (yi - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((&xi, &yi), &wi)| wi * (yi - intercept - slope * xi).powi(2))
        .sum();
    let r2 = if syy > 0.0 {
        1.0 - ss_res / syy
    } else if ss_res <= f64::EPSILON * my.abs().max(1.0) {
        1.0
    } else {
        f64::NEG_INFINITY
    };
    Line { slope, intercept, r2 }
}

/// Delta-method weights `((R − λ)² / stderr)²`; equal weights when any
/// standard error is zero (exact or single-repeat curves).
fn reciprocal_fit(c: &RiskCurve, lambda: f64) -> Result<Line> {
    let mut x = Vec::with_capacity(c.points.len());
    let mut y = Vec::with_capacity(c.points.len());
    let mut w = Vec::with_capacity(c.points.len());
    let exact = c.points.iter().any(|(_, e)| e.stderr <= 0.0);
    for (i, (size, e)) in c.points.iter().enumerate() {
        let r = e.mean - lambda;
        if !(r > 0.0) {
            return Err(RatesError::NonPositiveRisk { index: i, value: r });
        }
        x.push(*size as f64);
        y.push(1.0 / r);
        w.push(if exact { 1.0 } else { (r * r / e.stderr).powi(2) });
    }
    Ok(weighted_line(&x, &y, &w))
}

pub fn fit_reciprocal_linear(c: &RiskCurve) -> Result<FitReport> {
    let l = reciprocal_fit(c, 0.0)?;
    Ok(FitReport {
        kind: FitKind::ReciprocalLinear,
        slope: l.slope,
        intercept: l.intercept,
        lambda: 0.0,
        lambda_step: 0.0,
        r2: l.r2,
    })
}

/// Fits `R = λ + 1/(slope·size + intercept)` by profiling `λ` over an even
/// grid on `[0, min R)` and keeping the best reciprocal-linear r2; ties go
/// to the smaller `λ`.
pub fn fit_asymptote(c: &RiskCurve) -> Result<FitReport> {
    if c.points.len() < MIN_ASYMPTOTE_POINTS {
        return Err(RatesError::TooFewPoints {
            got: c.points.len(),
            need: MIN_ASYMPTOTE_POINTS,
        });
    }
    let floor = c.points.iter().map(|(_, e)| e.mean).fold(f64::INFINITY, f64::min);
    if let Some((i, (_, e))) = c.points.iter().enumerate().find(|(_, (_, e))| !(e.mean > 0.0)) {
        return Err(RatesError::NonPositiveRisk {
            index: i,
            value: e.mean,
        });
    }
    let step = floor / LAMBDA_GRID as f64;
    let mut best: Option<(f64, Line)> = None;
    for i in 0..LAMBDA_GRID {
        let lambda = step * i as f64;
        let Ok(l) = reciprocal_fit(c, lambda) else { continue };
        if !(l.r2 > 0.0) {
            continue;
        }
        if best.as_ref().is_none_or(|(_, b)| l.r2 > b.r2) {
            best = Some((lambda, l));
        }
    }
    let (lambda, l) = best.ok_or(RatesError::DegenerateCurve)?;
    Ok(FitReport {
        kind: FitKind::Asymptote,
        slope: l.slope,
        intercept: l.intercept,
        lambda,
        lambda_step: step,
        r2: l.r2,
    })
}

/// Predicted order of the excess risk in one direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PredictedRate {
    Converges(f64),
    NonConvergent,
}

impl fmt::Display for PredictedRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredictedRate::Converges(r) => write!(f, "{r:.6e}"),
            PredictedRate::NonConvergent => f.write_str("non-convergent"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recommendation {
    pub causal: PredictedRate,
    pub anticausal: PredictedRate,
    pub choice: Direction,
}

/// Order of the excess risk for a scenario: causal `k/m` when the source
/// mechanism is shared and no convergence otherwise; anti-causal
/// `(1 + k')/n`, `1/n + k'/(n+m)`, `k'/n + 1/(n+m)` or `(k'+1)/(m+n)`.
pub fn predicted_rate(s: &Scenario, k: usize, kp: usize, m: u64, n: u64) -> PredictedRate {
    let (k, kp, m, n) = (k as f64, kp as f64, m as f64, n as f64);
    match (s.direction, s.name()) {
        (Direction::Causal, ScenarioName::Covariate | ScenarioName::Ssl) => PredictedRate::Converges(k / m),
        (Direction::Causal, _) => PredictedRate::NonConvergent,
        (Direction::AntiCausal, ScenarioName::Target) => PredictedRate::Converges(1.0 / n + kp / (n + m)),
        (Direction::AntiCausal, ScenarioName::Conditional) => PredictedRate::Converges(kp / n + 1.0 / (n + m)),
        (Direction::AntiCausal, ScenarioName::Ssl) => PredictedRate::Converges((kp + 1.0) / (m + n)),
        (Direction::AntiCausal, _) => PredictedRate::Converges((1.0 + kp) / n),
    }
}

/// Picks the modelling direction with the smaller predicted rate; ties and
/// a non-convergent causal rate go to the anti-causal direction.
pub fn compare_directions(
    k: usize,
    kp: usize,
    m: u64,
    n: u64,
    causal: &Scenario,
    anticausal: &Scenario,
) -> Result<Recommendation> {
    if m == 0 || n == 0 || k == 0 || kp == 0 {
        return Err(RatesError::NonPositiveSize);
    }
    for (s, want) in [(causal, Direction::Causal), (anticausal, Direction::AntiCausal)] {
        if s.direction != want {
            return Err(RatesError::WrongDirection {
                scenario: *s,
                expected: want,
            });
        }
    }
    let c = predicted_rate(causal, k, kp, m, n);
    let a = predicted_rate(anticausal, k, kp, m, n);
    let choice = match (c, a) {
        (PredictedRate::Converges(rc), PredictedRate::Converges(ra)) if rc < ra => Direction::Causal,
        (PredictedRate::Converges(_), PredictedRate::NonConvergent) => Direction::Causal,
        _ => Direction::AntiCausal,
    };
    Ok(Recommendation {
        causal: c,
        anticausal: a,
        choice,
    })
}
