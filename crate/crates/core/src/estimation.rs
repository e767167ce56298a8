//! Maximum-likelihood preference estimation.
//!
//! Systematic utility is linear, `V_{i,c} = x_{i,c} . beta`. Two likelihoods are
//! available:
//!
//! - weak truth-telling: a rank-ordered (exploded) logit over each submitted
//!   list, where every position is a choice among the colleges not yet ranked;
//! - stability: a conditional logit of the assigned college within the
//!   applicant's ex-post feasible set.
//!
//! No location normalization is imposed: the covariates carry no free
//! intercept, so identification comes from utility differences alone.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::economy::McMarket;
use crate::model::{favorite_feasible, feasible_set, College, MatchOutcome, Rol};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("applicant {0} submitted an empty list")]
    EmptyRol(usize),
    #[error("applicant {applicant} is assigned to college {college} outside her feasible set")]
    AssignmentInfeasible { applicant: usize, college: College },
    #[error("non-finite systematic utility for applicant {0}")]
    NonFinite(usize),
    #[error("parameter vector has length {found}, covariates have {expected}")]
    DimensionMismatch { found: usize, expected: usize },
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("dataset has no usable observations")]
    NoObservations,
}

/// One applicant's observed data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceObs {
    /// Covariates, college-major: `x[c * dim + j]`.
    pub x: Vec<f64>,
    pub rol: Rol,
    pub assignment: Option<College>,
    pub feasible: Vec<College>,
    pub disadvantaged: bool,
    /// Whether the applicant got her favourite feasible college under her
    /// true preferences. Known only in simulated data.
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceDataset {
    pub n_colleges: usize,
    pub dim: usize,
    pub obs: Vec<ChoiceObs>,
}

/// Treatment of observations whose assignment is not the favourite feasible
/// college under true preferences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationPolicy {
    #[default]
    Keep,
    Drop,
}

impl ChoiceDataset {
    /// Builds the dataset a researcher would observe from one Monte Carlo sample.
    pub fn from_market(market: &McMarket, rols: &[Rol], outcome: &MatchOutcome) -> Self {
        let n = market.n_colleges();
        let obs = (0..market.applicants.len())
            .map(|i| {
                let theta = market.economy.applicant(i);
                let x = (0..n).flat_map(|c| market.covariates(i, c)).collect();
                ChoiceObs {
                    x,
                    rol: rols[i].clone(),
                    assignment: outcome.assignment[i],
                    feasible: feasible_set(theta.scores(), &outcome.cutoffs),
                    disadvantaged: market.applicants[i].disadvantaged,
                    stable: favorite_feasible(theta, &outcome.cutoffs) == outcome.assignment[i],
                }
            })
            .collect();
        Self { n_colleges: n, dim: 4, obs }
    }

    pub fn with_policy(&self, policy: ViolationPolicy) -> Self {
        match policy {
            ViolationPolicy::Keep => self.clone(),
            ViolationPolicy::Drop => Self { obs: self.obs.iter().filter(|o| o.stable).cloned().collect(), ..self.clone() },
        }
    }

    fn utilities(&self, i: usize, beta: &[f64]) -> Result<Vec<f64>, EstimationError> {
        let x = &self.obs[i].x;
        let v: Vec<f64> = (0..self.n_colleges).map(|c| x[c * self.dim..(c + 1) * self.dim].iter().zip(beta).map(|(a, b)| a * b).sum()).collect();
        if v.iter().all(|u| u.is_finite()) {
            Ok(v)
        } else {
            Err(EstimationError::NonFinite(i))
        }
    }

    fn check_dim(&self, beta: &[f64]) -> Result<(), EstimationError> {
        if beta.len() == self.dim {
            Ok(())
        } else {
            Err(EstimationError::DimensionMismatch { found: beta.len(), expected: self.dim })
        }
    }
}

/// Adds the contribution of choosing `chosen` from `set` to `ll` and `grad`.
fn logit_term(data: &ChoiceDataset, i: usize, v: &[f64], set: &[College], chosen: College, ll: &mut f64, grad: &mut [f64]) {
    let max = set.iter().map(|&c| v[c]).fold(f64::NEG_INFINITY, f64::max);
    let denom: f64 = set.iter().map(|&c| (v[c] - max).exp()).sum();
    *ll += v[chosen] - max - denom.ln();
    let x = &data.obs[i].x;
    let d = data.dim;
    for j in 0..d {
        let mean: f64 = set.iter().map(|&c| (v[c] - max).exp() * x[c * d + j]).sum::<f64>() / denom;
        grad[j] += x[chosen * d + j] - mean;
    }
}

/// Rank-ordered logit log-likelihood and its gradient.
pub fn wtt_loglik(beta: &[f64], data: &ChoiceDataset) -> Result<(f64, Vec<f64>), EstimationError> {
    data.check_dim(beta)?;
    let mut ll = 0.0;
    let mut grad = vec![0.0; data.dim];
    for (i, o) in data.obs.iter().enumerate() {
        if o.rol.is_empty() {
            return Err(EstimationError::EmptyRol(i));
        }
        let v = data.utilities(i, beta)?;
        let mut remaining: Vec<College> = (0..data.n_colleges).collect();
        for &c in o.rol.as_slice() {
            logit_term(data, i, &v, &remaining, c, &mut ll, &mut grad);
            remaining.retain(|&r| r != c);
        }
    }
    Ok((ll, grad))
}

/// Feasible-set conditional logit log-likelihood and its gradient.
/// Unassigned applicants carry no information and are skipped.
pub fn stability_loglik(beta: &[f64], data: &ChoiceDataset) -> Result<(f64, Vec<f64>), EstimationError> {
    data.check_dim(beta)?;
    let mut ll = 0.0;
    let mut grad = vec![0.0; data.dim];
    for (i, o) in data.obs.iter().enumerate() {
        let Some(m) = o.assignment else { continue };
        if !o.feasible.contains(&m) {
            return Err(EstimationError::AssignmentInfeasible { applicant: i, college: m });
        }
        let v = data.utilities(i, beta)?;
        logit_term(data, i, &v, &o.feasible, m, &mut ll, &mut grad);
    }
    Ok((ll, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Objective {
    Wtt,
    Stability,
}

impl Objective {
    pub fn eval(self, beta: &[f64], data: &ChoiceDataset) -> Result<(f64, Vec<f64>), EstimationError> {
        match self {
            Objective::Wtt => wtt_loglik(beta, data),
            Objective::Stability => stability_loglik(beta, data),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub objective: Objective,
    pub beta_hat: Vec<f64>,
    pub loglik: f64,
    /// Sup norm of the gradient at `beta_hat`.
    pub gradient_norm: f64,
    /// Inverse observed information; `None` when the Hessian is singular.
    pub covariance: Option<Vec<Vec<f64>>>,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood after each accepted step, starting at `init`.
    pub trajectory: Vec<f64>,
}

impl EstimationResult {
    pub fn std_errors(&self) -> Option<Vec<f64>> {
        self.covariance.as_ref().map(|m| (0..m.len()).map(|j| m[j][j].max(0.0).sqrt()).collect())
    }
}

/// Sup-norm tolerance on the per-observation score.
pub const DEFAULT_TOL: f64 = 1e-9;
pub const MAX_ITERATIONS: usize = 500;

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Central-difference Hessian of the analytic gradient, symmetrised.
fn numeric_hessian(objective: Objective, beta: &[f64], data: &ChoiceDataset) -> Result<DMatrix<f64>, EstimationError> {
    let d = beta.len();
    let mut h = DMatrix::zeros(d, d);
    for j in 0..d {
        let step = 1e-5 * beta[j].abs().max(1.0);
        let mut up = beta.to_vec();
        let mut down = beta.to_vec();
        up[j] += step;
        down[j] -= step;
        let (_, gu) = objective.eval(&up, data)?;
        let (_, gd) = objective.eval(&down, data)?;
        for r in 0..d {
            h[(r, j)] = (gu[r] - gd[r]) / (2.0 * step);
        }
    }
    Ok((&h + h.transpose()) * 0.5)
}

/// Maximises the chosen log-likelihood by damped Newton steps.
///
/// The Newton direction uses the numerical Hessian when it is negative
/// definite and falls back to the gradient otherwise; steps are halved until
/// the Armijo condition holds, so the log-likelihood never decreases.
/// Converges once the sup-norm of the score divided by the number of
/// observations is at most `tol`, or the predicted Newton gain falls below
/// the resolution of the log-likelihood.
pub fn fit(objective: Objective, data: &ChoiceDataset, init: &[f64], tol: f64) -> Result<EstimationResult, EstimationError> {
    if !(tol > 0.0) {
        return Err(EstimationError::BadTolerance(tol));
    }
    if data.obs.is_empty() {
        return Err(EstimationError::NoObservations);
    }
    let mut beta = init.to_vec();
    let (mut ll, mut grad) = objective.eval(&beta, data)?;
    let mut trajectory = vec![ll];
    let mut iterations = 0;
    // The tolerance applies to the average score so it does not tighten with
    // the sample size past what double precision can resolve.
    let gtol = tol * data.obs.len() as f64;
    let mut converged = sup_norm(&grad) <= gtol;
    while !converged && iterations < MAX_ITERATIONS {
        iterations += 1;
        let h = numeric_hessian(objective, &beta, data)?;
        let g = DVector::from_column_slice(&grad);
        let (direction, newton) = match (-&h).cholesky() {
            Some(chol) => (chol.solve(&g), true),
            None => (g.clone(), false),
        };
        let slope = g.dot(&direction);
        // Half the Newton decrement is the predicted gain; once it is below
        // what the log-likelihood can resolve, further steps are noise.
        if newton && 0.5 * slope <= 1e-13 * ll.abs().max(1.0) {
            converged = true;
            break;
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = beta.iter().zip(direction.iter()).map(|(b, d)| b + t * d).collect();
            let (tll, tgrad) = objective.eval(&trial, data)?;
            if tll >= ll + 1e-4 * t * slope {
                accepted = Some((trial, tll, tgrad));
                break;
            }
            t *= 0.5;
        }
        let Some((trial, tll, tgrad)) = accepted else { break };
        beta = trial;
        ll = tll;
        grad = tgrad;
        trajectory.push(ll);
        converged = sup_norm(&grad) <= gtol;
    }
    let h = numeric_hessian(objective, &beta, data)?;
    let covariance = (-h).try_inverse().map(|m| (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect());
    Ok(EstimationResult { objective, beta_hat: beta, loglik: ll, gradient_norm: sup_norm(&grad), covariance, iterations, converged, trajectory })
}
