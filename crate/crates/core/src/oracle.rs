//! Exact excess risk and exact conditional mutual information by exhaustive
//! enumeration of the training data.
//!
//! Every predictor in the lab is exchangeable in its training data, so the
//! enumeration runs over count vectors (multisets) weighted by their
//! multinomial probabilities instead of over raw sequences.

use crate::bayes::{BayesError, GridModel, PriorSpec};
use crate::estimators::{plan_from_scenario, TrainingCounts};
use crate::models::{validate_scenario, Direction, DomainPair, ModelError, Params, Scenario, LABELS};
use crate::par::{map_slice, pairwise_sum, ExecMode};
use crate::risk::{excess_01_conditional, excess_logloss_conditional, Loss, RiskError, Trainer};
use statrs::function::beta::ln_beta;
use statrs::function::factorial::ln_factorial;
use thiserror::Error;

/// Hard cap on the number of enumerated `(source, target)` count pairs.
pub const ENUMERATION_LIMIT: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("enumeration needs {count} dataset pairs, above the limit of {limit}")]
    EnumerationTooLarge { count: u128, limit: u128 },
    #[error("enumeration spec does not match the model: {0}")]
    SpecMismatch(String),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Bayes(#[from] BayesError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, OracleError>;

/// Sizes of one exhaustive enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumSpec {
    pub m: usize,
    pub n: usize,
    pub direction: Direction,
    pub k: usize,
    pub kp: usize,
}

impl EnumSpec {
    pub fn for_pair(d: &DomainPair, m: usize, n: usize) -> Self {
        Self {
            m,
            n,
            direction: d.direction(),
            k: d.k(),
            kp: LABELS,
        }
    }

    /// Number of `(source counts, target counts)` pairs: compositions of
    /// `m` into `k·k'` cells times compositions of `n` into `k` cells.
    pub fn size(&self) -> u128 {
        compositions_count(self.m, self.k * self.kp).saturating_mul(compositions_count(self.n, self.k))
    }

    pub fn check(&self, d: &DomainPair) -> Result<()> {
        if self.direction != d.direction() || self.k != d.k() || self.kp != LABELS {
            return Err(OracleError::SpecMismatch(format!(
                "spec is {} with k = {}, k' = {}; model is {} with k = {}, k' = {LABELS}",
                self.direction,
                self.k,
                self.kp,
                d.direction(),
                d.k()
            )));
        }
        let count = self.size();
        if count > ENUMERATION_LIMIT {
            return Err(OracleError::EnumerationTooLarge {
                count,
                limit: ENUMERATION_LIMIT,
            });
        }
        Ok(())
    }
}

/// `C(total + cells − 1, cells − 1)`, saturating.
pub fn compositions_count(total: usize, cells: usize) -> u128 {
    if cells == 0 {
        return u128::from(total == 0);
    }
    let (n, r) = ((total + cells - 1) as u128, (cells - 1) as u128);
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = match acc.checked_mul(n - i) {
            Some(v) => v / (i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// All count vectors of length `cells` summing to `total`, in lexicographic
/// order (first cell descending).
pub fn compositions(total: usize, cells: usize) -> Vec<Vec<u64>> {
    fn rec(rest: usize, cells: usize, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if cells == 1 {
            cur.push(rest as u64);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for v in (0..=rest).rev() {
            cur.push(v as u64);
            rec(rest - v, cells - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if cells == 0 {
        if total == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    rec(total, cells, &mut Vec::with_capacity(cells), &mut out);
    out
}

/// Log multinomial probability of `counts` under cell probabilities `p`.
pub fn log_multinomial(counts: &[u64], p: &[f64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let mut lp = ln_factorial(total);
    for (&c, &pi) in counts.iter().zip(p) {
        if c > 0 {
            lp += c as f64 * pi.ln() - ln_factorial(c);
        }
    }
    lp
}

fn source_cells(p: &Params) -> Vec<f64> {
    (0..p.k())
        .flat_map(|x| (0..LABELS).map(move |y| (x, y)))
        .map(|(x, y)| p.joint(x, y))
        .collect()
}

fn target_cells(p: &Params) -> Vec<f64> {
    (0..p.k()).map(|x| p.marginal_x(x)).collect()
}

/// Every training draw with positive probability and its probability.
struct Enumeration {
    source: Vec<(Vec<u64>, f64)>,
    target: Vec<(Vec<u64>, f64)>,
}

impl Enumeration {
    fn new(d: &DomainPair, spec: &EnumSpec) -> Result<Self> {
        spec.check(d)?;
        let ps = source_cells(d.source());
        let pt = target_cells(d.target());
        let keep = |cs: Vec<Vec<u64>>, p: &[f64]| -> Vec<(Vec<u64>, f64)> {
            cs.into_iter()
                .map(|c| {
                    let w = log_multinomial(&c, p).exp();
                    (c, w)
                })
                .filter(|(_, w)| *w > 0.0)
                .collect()
        };
        Ok(Self {
            source: keep(compositions(spec.m, spec.k * LABELS), &ps),
            target: keep(compositions(spec.n, spec.k), &pt),
        })
    }

    /// `Σ_D P(D)·f(D)` with the outer loop over source draws run by `mode`.
    fn expect<F>(&self, mode: ExecMode, f: F) -> Result<f64>
    where
        F: Fn(&TrainingCounts) -> Result<f64> + Sync + Send,
    {
        let outer: Vec<Result<f64>> = map_slice(mode, &self.source, |(s, ws)| {
            let mut terms = Vec::with_capacity(self.target.len());
            for (t, wt) in &self.target {
                let counts = TrainingCounts {
                    source: s.clone(),
                    target: t.clone(),
                };
                terms.push(ws * wt * f(&counts)?);
            }
            Ok(pairwise_sum(&terms))
        });
        let sums = outer.into_iter().collect::<Result<Vec<f64>>>()?;
        Ok(pairwise_sum(&sums))
    }

    fn total_probability(&self) -> f64 {
        let s: Vec<f64> = self.source.iter().map(|(_, w)| *w).collect();
        let t: Vec<f64> = self.target.iter().map(|(_, w)| *w).collect();
        pairwise_sum(&s) * pairwise_sum(&t)
    }
}

/// Total probability of the enumerated datasets; 1 up to round-off.
pub fn enumerated_mass(d: &DomainPair, spec: &EnumSpec) -> Result<f64> {
    Ok(Enumeration::new(d, spec)?.total_probability())
}

/// Exact expected excess log-loss of `trainer` at the sizes of `spec`.
pub fn exact_excess_risk(trainer: &Trainer, spec: &EnumSpec) -> Result<f64> {
    exact_expected_excess(trainer, spec, Loss::Log, ExecMode::Parallel)
}

/// Exact expected excess loss (log or 0-1) of `trainer`.
pub fn exact_expected_excess(trainer: &Trainer, spec: &EnumSpec, loss: Loss, mode: ExecMode) -> Result<f64> {
    let d = trainer.pair();
    let e = Enumeration::new(d, spec)?;
    let truth = d.target();
    e.expect(mode, |counts| {
        let q = trainer.predict(counts, 0)?;
        Ok(match loss {
            Loss::Log => excess_logloss_conditional(truth, &q)?,
            Loss::ZeroOne => excess_01_conditional(truth, &q)?,
        })
    })
}

/// `Σ_y p_y (ln p_y − ln q_y)` with `ln q_y` supplied directly.
fn kl_from_logs(p: f64, ln_q: [f64; 2]) -> std::result::Result<f64, ()> {
    let mut kl = 0.0;
    for (py, lq) in [(1.0 - p, ln_q[0]), (p, ln_q[1])] {
        if py > 0.0 {
            if lq == f64::NEG_INFINITY {
                return Err(());
            }
            kl += py * (py.ln() - lq);
        }
    }
    Ok(kl)
}

/// Exact `I(Y'; θ | D, X')` at the true parameters, as the expected log ratio
/// of the true conditional to the mixture predictive. The predictive is
/// formed from ratios of marginal likelihoods (Beta functions in the causal
/// direction, grid log-sum-exps in the anti-causal one), independently of
/// the posterior-weight route the Bayes predictor uses.
pub fn exact_cmi(d: &DomainPair, s: &Scenario, spec: &EnumSpec, prior: &PriorSpec) -> Result<f64> {
    prior.validate()?;
    match d.direction() {
        Direction::Causal => exact_cmi_causal(d, s, spec, prior),
        Direction::AntiCausal => exact_cmi_grid(d, s, spec, &GridModel::from_pair(d, prior)?),
    }
}

fn exact_cmi_causal(d: &DomainPair, s: &Scenario, spec: &EnumSpec, prior: &PriorSpec) -> Result<f64> {
    validate_scenario(s, d)?;
    let plan = plan_from_scenario(s);
    let e = Enumeration::new(d, spec)?;
    let truth = d.target();
    let (a, b) = (prior.causal_alpha, prior.causal_beta);
    e.expect(ExecMode::Parallel, |counts| {
        let mut total = 0.0;
        for x in 0..truth.k() {
            let px = truth.marginal_x(x);
            if px == 0.0 {
                continue;
            }
            let (z, o) = if plan.usable_source {
                (counts.source_cell(x, 0) as f64, counts.source_cell(x, 1) as f64)
            } else {
                (0.0, 0.0)
            };
            let evidence = ln_beta(a + o, b + z);
            let ln_q = [
                ln_beta(a + o, b + z + 1.0) - evidence,
                ln_beta(a + o + 1.0, b + z) - evidence,
            ];
            let p = truth.label_given_x(x)?;
            total += px * kl_from_logs(p, ln_q).map_err(|_| RiskError::InfiniteRisk { x })?;
        }
        Ok(total)
    })
}

/// [`exact_cmi`] for the anti-causal direction with an explicit prior grid.
pub fn exact_cmi_grid(d: &DomainPair, s: &Scenario, spec: &EnumSpec, grid: &GridModel) -> Result<f64> {
    validate_scenario(s, d)?;
    if d.direction() != Direction::AntiCausal {
        return Err(OracleError::SpecMismatch("grid priors are anti-causal only".into()));
    }
    let plan = plan_from_scenario(s);
    let e = Enumeration::new(d, spec)?;
    let truth = d.target();
    e.expect(ExecMode::Parallel, |counts| {
        let (joint, marg) = grid.log_evidence(counts, &plan);
        let mut total = 0.0;
        for x in 0..truth.k() {
            let px = truth.marginal_x(x);
            if px == 0.0 {
                continue;
            }
            if marg[x] == f64::NEG_INFINITY {
                return Err(RiskError::UndefinedPrediction { x }.into());
            }
            let ln_q = [joint[x][0] - marg[x], joint[x][1] - marg[x]];
            let p = truth.label_given_x(x)?;
            total += px * kl_from_logs(p, ln_q).map_err(|_| RiskError::InfiniteRisk { x })?;
        }
        Ok(total)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::PriorKind;
    use crate::models::{toy, Categorical, CausalParams};
    use crate::risk::{EstimatorKind, TrainerOptions};

    fn trainer(s: Scenario, kind: EstimatorKind, prior: PriorSpec) -> Trainer {
        let opts = TrainerOptions {
            prior,
            ..Default::default()
        };
        Trainer::new(toy::domain_pair(&s), s, kind, opts).unwrap()
    }

    fn small_prior() -> PriorSpec {
        PriorSpec::from_kind(PriorKind::Jeffreys, 21)
    }

    #[test]
    fn composition_counts() {
        assert_eq!(compositions_count(3, 8), 120);
        assert_eq!(compositions_count(0, 8), 1);
        assert_eq!(compositions(3, 8).len(), 120);
        assert_eq!(compositions(2, 3).len() as u128, compositions_count(2, 3));
        assert!(compositions(4, 3).iter().all(|c| c.iter().sum::<u64>() == 4));
    }

    #[test]
    fn guard_is_a_hard_error() {
        let s = Scenario::new(Direction::Causal, true, true);
        let d = toy::domain_pair(&s);
        let spec = EnumSpec::for_pair(&d, 40, 40);
        assert!(matches!(spec.check(&d), Err(OracleError::EnumerationTooLarge { .. })));
        assert!(EnumSpec::for_pair(&d, 8, 8).check(&d).is_ok());
    }

    #[test]
    fn dataset_probabilities_sum_to_one() {
        for s in Scenario::all() {
            let d = toy::domain_pair(&s);
            let mass = enumerated_mass(&d, &EnumSpec::for_pair(&d, 3, 3)).unwrap();
            assert!((mass - 1.0).abs() < 1e-12, "{s}: {mass}");
        }
    }

    #[test]
    fn empty_data_gives_prior_risk() {
        let s = Scenario::new(Direction::Causal, true, true);
        let t = trainer(s, EstimatorKind::BayesMixture, PriorSpec::default());
        let spec = EnumSpec::for_pair(t.pair(), 0, 0);
        let r = exact_excess_risk(&t, &spec).unwrap();
        assert!((r - 0.030638476).abs() < 1e-9);
        let c = exact_cmi(t.pair(), &s, &spec, &PriorSpec::default()).unwrap();
        assert!((c - r).abs() < 1e-12);
    }

    #[test]
    fn frozen_truth_has_zero_exact_risk() {
        for s in Scenario::all() {
            let t = trainer(s, EstimatorKind::FrozenTarget, small_prior());
            assert_eq!(exact_excess_risk(&t, &EnumSpec::for_pair(t.pair(), 2, 2)).unwrap(), 0.0);
        }
    }

    #[test]
    fn single_labeled_pair_by_hand() {
        // m = 1: eight possible pairs, each moving one cell's KT estimate.
        let s = Scenario::new(Direction::Causal, true, true);
        let t = trainer(s, EstimatorKind::BayesMixture, PriorSpec::default());
        let truth = toy::causal_target();
        let kl = |p: f64, q: f64| p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
        let mut want = 0.0;
        for x in 0..4 {
            for y in 0..2 {
                let px = 0.25;
                let pxy = px
                    * if y == 1 {
                        truth.theta_yx()[x]
                    } else {
                        1.0 - truth.theta_yx()[x]
                    };
                let risk: f64 = (0..4)
                    .map(|x2| {
                        let q = if x2 == x {
                            if y == 1 {
                                0.75
                            } else {
                                0.25
                            }
                        } else {
                            0.5
                        };
                        0.25 * kl(truth.theta_yx()[x2], q)
                    })
                    .sum();
                want += pxy * risk;
            }
        }
        let got = exact_excess_risk(&t, &EnumSpec::for_pair(t.pair(), 1, 0)).unwrap();
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn cmi_identity_on_all_scenarios() {
        for s in Scenario::all() {
            let t = trainer(s, EstimatorKind::BayesMixture, small_prior());
            for (m, n) in [(0, 0), (1, 1), (2, 1), (1, 2)] {
                let spec = EnumSpec::for_pair(t.pair(), m, n);
                let r = exact_excess_risk(&t, &spec).unwrap();
                let c = exact_cmi(t.pair(), &s, &spec, &small_prior()).unwrap();
                assert!((r - c).abs() < 1e-10, "{s} m={m} n={n}: {r} vs {c}");
                assert!(r >= 0.0);
            }
        }
    }

    #[test]
    fn point_prior_has_zero_cmi() {
        let s = Scenario::new(Direction::AntiCausal, true, true);
        let d = toy::domain_pair(&s);
        let grid = GridModel::from_axes(
            toy::constraints(),
            [vec![0.5], vec![0.05], vec![0.05]],
            [vec![1.0], vec![1.0], vec![1.0]],
        )
        .unwrap();
        let c = exact_cmi_grid(&d, &s, &EnumSpec::for_pair(&d, 2, 2), &grid).unwrap();
        assert!(c.abs() < 1e-14, "{c}");
    }

    /// Bayes risk averaged over truths drawn from the prior never increases
    /// with more labeled data. (At a fixed truth it can: one observation
    /// moves a p = ½ cell away from its optimal prediction.)
    #[test]
    fn prior_averaged_risk_is_monotone_in_m() {
        let prior = PriorSpec::from_kind(PriorKind::Uniform, 11);
        let s = Scenario::new(Direction::Causal, true, true);
        let nodes = 201;
        let risk_at = |m: usize| -> f64 {
            let vals: Vec<f64> = (0..nodes)
                .map(|i| {
                    let p = i as f64 / (nodes - 1) as f64;
                    let w = if i == 0 || i == nodes - 1 {
                        1.0
                    } else if i % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    let c = CausalParams::new(Categorical::new(vec![1.0]).unwrap(), vec![p]).unwrap();
                    let d = DomainPair::new(Params::Causal(c.clone()), Params::Causal(c)).unwrap();
                    let opts = TrainerOptions {
                        prior,
                        ..Default::default()
                    };
                    let t = Trainer::new(d, s, EstimatorKind::BayesMixture, opts).unwrap();
                    w * exact_excess_risk(&t, &EnumSpec::for_pair(t.pair(), m, 0)).unwrap()
                })
                .collect();
            pairwise_sum(&vals) / (3.0 * (nodes - 1) as f64)
        };
        let mut prev = risk_at(0);
        for m in 1..=8 {
            let r = risk_at(m);
            assert!(r <= prev + 1e-12, "m={m}: {r} > {prev}");
            prev = r;
        }
        // The fixed-truth version is not monotone.
        let c = CausalParams::new(Categorical::new(vec![1.0]).unwrap(), vec![0.5]).unwrap();
        let d = DomainPair::new(Params::Causal(c.clone()), Params::Causal(c)).unwrap();
        let t = Trainer::new(
            d,
            s,
            EstimatorKind::BayesMixture,
            TrainerOptions {
                prior,
                ..Default::default()
            },
        )
        .unwrap();
        let r0 = exact_excess_risk(&t, &EnumSpec::for_pair(t.pair(), 0, 0)).unwrap();
        let r1 = exact_excess_risk(&t, &EnumSpec::for_pair(t.pair(), 1, 0)).unwrap();
        assert!(r1 > r0);
    }

    #[test]
    fn spec_mismatch_is_reported() {
        let s = Scenario::new(Direction::Causal, true, true);
        let d = toy::domain_pair(&s);
        let mut spec = EnumSpec::for_pair(&d, 1, 1);
        spec.direction = Direction::AntiCausal;
        assert!(matches!(spec.check(&d), Err(OracleError::SpecMismatch(_))));
    }
}
