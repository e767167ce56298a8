//! The priority reform and the ways of predicting its effect.
//!
//! Under the reform every disadvantaged applicant outranks every other
//! applicant at all colleges; order within each group is unchanged. An
//! approach predicts the post-reform match from some model of preferences:
//! the submitted lists taken at face value, utilities rebuilt from estimated
//! coefficients, or the true behaviour including mistakes.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::economy::McMarket;
use crate::engine::{run_da, EngineError};
use crate::model::{truthful_rol, College, CutoffVector, Economy, MatchOutcome, ModelError, Rol};
use crate::strategy::StrategyKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CounterfactualError {
    #[error("economy carries no group flags")]
    MissingGroups,
    #[error("{0:?} needs estimated coefficients")]
    MissingEstimates(Approach),
    #[error("{0:?} needs the reports applicants would submit under the reform")]
    MissingReports(Approach),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Approach {
    SubmittedRols,
    WttEst,
    StabilityEst,
    Truth,
}

impl Approach {
    pub const ALL: [Approach; 4] = [Approach::SubmittedRols, Approach::WttEst, Approach::StabilityEst, Approach::Truth];
}

/// Re-ranks applicants so the disadvantaged group comes first, keeping the
/// original order within each group. Priorities are read from college 0 and
/// re-encoded as `(position + 1) / k` at every college.
pub fn apply_priority_policy(economy: &Economy) -> Result<Economy, CounterfactualError> {
    let groups = economy.groups().ok_or(CounterfactualError::MissingGroups)?;
    let k = economy.n_applicants();
    let mut order: Vec<usize> = (0..k).collect();
    // Ascending priority: advantaged first, then disadvantaged.
    order.sort_by(|&a, &b| match groups[a].cmp(&groups[b]) {
        Ordering::Equal => economy.priority_cmp(0, a, b),
        other => other,
    });
    let n = economy.n_colleges();
    let mut scores = vec![Vec::new(); k];
    for (pos, &i) in order.iter().enumerate() {
        scores[i] = vec![(pos + 1) as f64 / k as f64; n];
    }
    Ok(economy.with_scores(&scores, format!("{}-policy", economy.label()))?)
}

/// Ordinal preferences used to judge welfare.
#[derive(Debug, Clone, PartialEq)]
pub enum Preferences {
    /// Cardinal utilities; being unassigned is worth zero.
    Utilities(Vec<Vec<f64>>),
    /// List order; unlisted colleges and being unassigned tie for last.
    Rols(Vec<Rol>),
}

impl Preferences {
    /// `Greater` when applicant `i` strictly prefers `a` to `b`.
    fn compare(&self, i: usize, a: Option<College>, b: Option<College>) -> Ordering {
        match self {
            Preferences::Utilities(u) => {
                let value = |x: Option<College>| x.map_or(0.0, |c| u[i][c]);
                value(a).total_cmp(&value(b))
            }
            Preferences::Rols(r) => {
                let rank = |x: Option<College>| x.and_then(|c| r[i].position(c)).unwrap_or(usize::MAX);
                rank(b).cmp(&rank(a))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Welfare {
    Better,
    Worse,
    Indifferent,
}

/// Compares each applicant's pre- and post-reform assignments.
pub fn welfare_classify(pre: &MatchOutcome, post: &MatchOutcome, prefs: &Preferences) -> Vec<Welfare> {
    pre.assignment
        .iter()
        .zip(&post.assignment)
        .enumerate()
        .map(|(i, (&a, &b))| {
            if a == b {
                return Welfare::Indifferent;
            }
            match prefs.compare(i, b, a) {
                Ordering::Greater => Welfare::Better,
                Ordering::Less => Welfare::Worse,
                Ordering::Equal => Welfare::Indifferent,
            }
        })
        .collect()
}

/// Share of the selected applicants whose predicted college differs from the truth.
pub fn misprediction_rate(predicted: &MatchOutcome, truth: &MatchOutcome, select: &[bool]) -> f64 {
    let (mut n, mut wrong) = (0usize, 0usize);
    for ((p, t), &s) in predicted.assignment.iter().zip(&truth.assignment).zip(select) {
        if s {
            n += 1;
            wrong += usize::from(p != t);
        }
    }
    if n == 0 {
        0.0
    } else {
        wrong as f64 / n as f64
    }
}

/// Truthful full lists under utilities rebuilt from `beta` and the sample's
/// own taste shocks.
pub fn estimated_rols(market: &McMarket, beta: &[f64]) -> Vec<Rol> {
    let u = market.shifted_utilities(beta);
    market
        .economy
        .with_utilities(&u)
        .expect("shifted utilities are finite")
        .applicants()
        .iter()
        .map(truthful_rol)
        .collect()
}

/// Inputs for a prediction.
pub struct PredictionInputs<'a> {
    pub market: &'a McMarket,
    pub policy_economy: &'a Economy,
    pub submitted: &'a [Rol],
    pub estimates: Option<&'a [f64]>,
    /// Reports under the reform generated by the true behavioural process.
    pub truth_reports: Option<&'a [Rol]>,
}

/// Runs DA on the reformed economy with the approach's reports.
pub fn predict_outcome(approach: Approach, inputs: &PredictionInputs<'_>) -> Result<MatchOutcome, CounterfactualError> {
    let rols: Vec<Rol> = match approach {
        Approach::SubmittedRols => inputs.submitted.to_vec(),
        Approach::WttEst | Approach::StabilityEst => {
            let beta = inputs.estimates.ok_or(CounterfactualError::MissingEstimates(approach))?;
            estimated_rols(inputs.market, beta)
        }
        Approach::Truth => inputs.truth_reports.ok_or(CounterfactualError::MissingReports(approach))?.to_vec(),
    };
    Ok(run_da(inputs.policy_economy, &rols)?)
}

/// The preferences an approach uses to judge welfare.
pub fn approach_preferences(approach: Approach, market: &McMarket, submitted: &[Rol], estimates: Option<&[f64]>) -> Result<Preferences, CounterfactualError> {
    match approach {
        Approach::SubmittedRols => Ok(Preferences::Rols(submitted.to_vec())),
        Approach::WttEst | Approach::StabilityEst => {
            let beta = estimates.ok_or(CounterfactualError::MissingEstimates(approach))?;
            Ok(Preferences::Utilities(market.shifted_utilities(beta)))
        }
        Approach::Truth => Ok(Preferences::Utilities(market.economy.applicants().iter().map(|a| a.utilities().to_vec()).collect())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WelfareShares {
    pub better: f64,
    pub worse: f64,
    pub indifferent: f64,
}

impl WelfareShares {
    pub fn of(labels: &[Welfare], select: &[bool]) -> Self {
        let mut counts = [0usize; 3];
        for (w, &s) in labels.iter().zip(select) {
            if s {
                counts[*w as usize] += 1;
            }
        }
        let n = counts.iter().sum::<usize>().max(1) as f64;
        Self { better: counts[0] as f64 / n, worse: counts[1] as f64 / n, indifferent: counts[2] as f64 / n }
    }
}

/// Per-group metrics; index 0 is the disadvantaged group, index 1 the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproachReport {
    pub approach: Approach,
    pub misprediction: [f64; 2],
    pub welfare: [WelfareShares; 2],
    pub predicted_cutoffs: CutoffVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualReport {
    pub seed: u64,
    pub sample: usize,
    pub dgp: StrategyKind,
    pub approaches: Vec<ApproachReport>,
}

impl CounterfactualReport {
    pub fn get(&self, approach: Approach) -> Option<&ApproachReport> {
        self.approaches.iter().find(|a| a.approach == approach)
    }
}

/// Evaluates every approach on one sample.
///
/// `factual` is the observed status-quo outcome, which is the welfare
/// baseline for every approach. The true post-reform outcome is the
/// misprediction benchmark.
pub fn evaluate(
    inputs: &PredictionInputs<'_>,
    factual: &MatchOutcome,
    estimates: [Option<&[f64]>; 2],
) -> Result<Vec<ApproachReport>, CounterfactualError> {
    let groups = inputs.market.economy.groups().ok_or(CounterfactualError::MissingGroups)?;
    let masks: [Vec<bool>; 2] = [groups.to_vec(), groups.iter().map(|g| !g).collect()];
    let truth = predict_outcome(Approach::Truth, inputs)?;
    Approach::ALL
        .iter()
        .map(|&approach| {
            let est = match approach {
                Approach::WttEst => estimates[0],
                Approach::StabilityEst => estimates[1],
                _ => None,
            };
            let local = PredictionInputs { estimates: est, ..*inputs };
            let predicted = if approach == Approach::Truth { truth.clone() } else { predict_outcome(approach, &local)? };
            let prefs = approach_preferences(approach, inputs.market, inputs.submitted, est)?;
            let labels = welfare_classify(factual, &predicted, &prefs);
            Ok(ApproachReport {
                approach,
                misprediction: [misprediction_rate(&predicted, &truth, &masks[0]), misprediction_rate(&predicted, &truth, &masks[1])],
                welfare: [WelfareShares::of(&labels, &masks[0]), WelfareShares::of(&labels, &masks[1])],
                predicted_cutoffs: predicted.cutoffs,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::economy::{sample_mc_market, EconomySpec};
    use crate::model::ApplicantType;
    use crate::rng::substream;

    fn two() -> Economy {
        let a = |s: f64| ApplicantType::new(vec![1.0, 2.0], vec![s, s]).unwrap();
        Economy::new(vec![a(0.5), a(1.0)], vec![1, 1], "two").unwrap()
    }

    #[test]
    fn policy_reverses_order_across_groups() {
        let e = two().with_groups(vec![true, false]).unwrap();
        let p = apply_priority_policy(&e).unwrap();
        assert_eq!(p.priority_cmp(0, 0, 1), Ordering::Greater);
        assert_eq!(p.score(0, 1), 1.0);
        assert_eq!(p.score(1, 0), 0.5);
    }

    #[test]
    fn policy_without_groups_fails() {
        assert_eq!(apply_priority_policy(&two()), Err(CounterfactualError::MissingGroups));
    }

    #[test]
    fn policy_with_one_group_keeps_order() {
        for g in [true, false] {
            let e = two().with_groups(vec![g, g]).unwrap();
            let p = apply_priority_policy(&e).unwrap();
            assert_eq!(p.priority_cmp(0, 1, 0), Ordering::Greater);
        }
    }

    #[test]
    fn mc_policy_moves_ranks_in_the_right_direction() {
        let spec = EconomySpec::mc_geography(1);
        let m = sample_mc_market(&spec, 1800, &mut substream(2, 1, 0, 0)).unwrap();
        let p = apply_priority_policy(&m.economy).unwrap();
        let groups = m.economy.groups().unwrap();
        for i in 0..1800 {
            if groups[i] {
                assert!(p.score(i, 0) >= m.economy.score(i, 0));
            } else {
                assert!(p.score(i, 0) <= m.economy.score(i, 0));
            }
            for j in 0..1800 {
                if groups[i] == groups[j] {
                    assert_eq!(p.priority_cmp(0, i, j), m.economy.priority_cmp(0, i, j));
                }
            }
        }
    }

    #[test]
    fn welfare_and_misprediction_basics() {
        let o = MatchOutcome { assignment: vec![Some(0), None, Some(1)], cutoffs: CutoffVector::zeros(2), rounds: 1 };
        let prefs = Preferences::Utilities(vec![vec![1.0, 2.0]; 3]);
        assert!(welfare_classify(&o, &o, &prefs).iter().all(|w| *w == Welfare::Indifferent));
        assert_eq!(misprediction_rate(&o, &o, &[true; 3]), 0.0);
        let post = MatchOutcome { assignment: vec![Some(1), Some(0), None], ..o.clone() };
        assert_eq!(welfare_classify(&o, &post, &prefs), vec![Welfare::Better, Welfare::Better, Welfare::Worse]);
        let rols = Preferences::Rols(vec![Rol::new(vec![0], 2).unwrap(); 3]);
        assert_eq!(welfare_classify(&o, &post, &rols), vec![Welfare::Worse, Welfare::Better, Welfare::Indifferent]);
        assert!((misprediction_rate(&o, &post, &[true, true, false]) - 1.0).abs() < 1e-12);
        let s = WelfareShares::of(&welfare_classify(&o, &post, &prefs), &[true; 3]);
        assert!((s.better + s.worse + s.indifferent - 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_inputs_are_errors() {
        let spec = EconomySpec::mc_geography(1);
        let m = sample_mc_market(&spec, 60, &mut substream(2, 1, 0, 0)).unwrap();
        let rols = m.truthful_rols();
        let inputs = PredictionInputs { market: &m, policy_economy: &m.economy, submitted: &rols, estimates: None, truth_reports: None };
        assert_eq!(predict_outcome(Approach::WttEst, &inputs), Err(CounterfactualError::MissingEstimates(Approach::WttEst)));
        assert_eq!(predict_outcome(Approach::Truth, &inputs), Err(CounterfactualError::MissingReports(Approach::Truth)));
    }
}
