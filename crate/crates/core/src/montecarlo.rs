//! The end-to-end Monte Carlo design.
//!
//! A cutoff distribution is simulated once under truth-telling. Each
//! estimation sample then draws a fresh geography market, generates reports
//! under every requested data-generating process, runs DA, fits both
//! likelihoods and evaluates the priority reform.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::counterfactual::{apply_priority_policy, evaluate, Approach, ApproachReport, CounterfactualError, CounterfactualReport, PredictionInputs};
use crate::economy::{sample_mc_market, simulate_cutoff_distribution, simulate_cutoff_distribution_with, EconomyError, EconomySpec, McMarket, MC_K};
use crate::engine::{run_da, stability_fraction, EngineError};
use crate::estimation::{fit, ChoiceDataset, EstimationError, EstimationResult, Objective, ViolationPolicy, DEFAULT_TOL};
use crate::model::{truthful_rol, Economy, MatchOutcome, Rol};
use crate::rng::{self, tag};
use crate::strategy::{apply_mistakes, is_wtt, match_probabilities, CutoffDistribution, MistakeDraws, StrategyKind, StrategyParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McError {
    #[error("{0:?} is not a data-generating process")]
    NotADgp(StrategyKind),
    #[error(transparent)]
    Economy(#[from] EconomyError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Counterfactual(#[from] CounterfactualError),
}

/// Which cutoff distribution drives mistakes in the post-reform benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TruthDistribution {
    /// Simulated under truth-telling with the reform in place.
    #[default]
    Policy,
    /// The status-quo distribution.
    Factual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub k: usize,
    pub n_samples: usize,
    pub n_cutoff_samples: usize,
    pub seed: u64,
    pub params: StrategyParams,
    pub dgps: Vec<StrategyKind>,
    pub estimate: bool,
    pub counterfactual: bool,
    pub truth_distribution: TruthDistribution,
    pub violation_policy: ViolationPolicy,
    pub tol: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            k: MC_K,
            n_samples: 150,
            n_cutoff_samples: 1000,
            seed: 2024,
            params: StrategyParams::default(),
            dgps: vec![StrategyKind::Tt, StrategyKind::Pim, StrategyKind::Prm],
            estimate: true,
            counterfactual: true,
            truth_distribution: TruthDistribution::Policy,
            violation_policy: ViolationPolicy::Keep,
            tol: DEFAULT_TOL,
        }
    }
}

/// Shared state for all samples of one run.
pub struct McDesign {
    pub spec: EconomySpec,
    pub config: McConfig,
    pub dist: CutoffDistribution,
    pub policy_dist: Option<CutoffDistribution>,
}

impl McDesign {
    pub fn build(config: McConfig) -> Result<Self, McError> {
        if let Some(&bad) = config.dgps.iter().find(|k| !matches!(k, StrategyKind::Tt | StrategyKind::Pim | StrategyKind::Prm)) {
            return Err(McError::NotADgp(bad));
        }
        let spec = EconomySpec::mc_geography(config.seed);
        // Truth-telling reports never consult match probabilities.
        let needs_dist = config.counterfactual || config.dgps.iter().any(|&k| k != StrategyKind::Tt);
        let dist = if needs_dist {
            simulate_cutoff_distribution(&spec, config.k, config.n_cutoff_samples, config.seed)?
        } else {
            CutoffDistribution { samples: Vec::new(), admit_prob: Vec::new(), match_freq: Vec::new() }
        };
        let policy_dist = if config.counterfactual && config.truth_distribution == TruthDistribution::Policy {
            Some(simulate_cutoff_distribution_with(&spec, config.k, config.n_cutoff_samples, config.seed, tag::POLICY_CUTOFF_SAMPLE, |e| {
                apply_priority_policy(&e).map_err(|err| match err {
                    CounterfactualError::Model(m) => EconomyError::Model(m),
                    _ => unreachable!("geography economies carry group flags"),
                })
            })?)
        } else {
            None
        };
        Ok(Self { spec, config, dist, policy_dist })
    }

    pub fn market(&self, sample: usize) -> Result<McMarket, McError> {
        let mut rng = rng::substream(self.config.seed, tag::ESTIMATION_SAMPLE, sample as u64, 0);
        Ok(sample_mc_market(&self.spec, self.config.k, &mut rng)?)
    }

    pub fn draws(&self, sample: usize, n_applicants: usize) -> Vec<MistakeDraws> {
        (0..n_applicants)
            .map(|i| MistakeDraws::draw(&mut rng::substream(self.config.seed, tag::STRATEGY, sample as u64, i as u64), self.spec.n_colleges))
            .collect()
    }
}

/// Reports for every applicant of `economy` under a process, with match
/// probabilities taken from `dist`.
pub fn dgp_reports(economy: &Economy, kind: StrategyKind, params: &StrategyParams, dist: &CutoffDistribution, draws: &[MistakeDraws]) -> Vec<Rol> {
    economy
        .applicants()
        .iter()
        .zip(draws)
        .map(|(theta, d)| {
            let truth = truthful_rol(theta);
            if kind == StrategyKind::Tt {
                return truth;
            }
            apply_mistakes(&truth, &match_probabilities(theta, dist), kind, params, d)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpMetrics {
    pub mean_length: f64,
    pub wtt_share: f64,
    pub stability: f64,
    /// Share omitting at least one college: all, disadvantaged, others.
    pub omit_share: [f64; 3],
}

pub fn dgp_metrics(economy: &Economy, rols: &[Rol], outcome: &MatchOutcome) -> DgpMetrics {
    let k = rols.len() as f64;
    let n = economy.n_colleges();
    let groups = economy.groups();
    let mut omit = [0usize; 3];
    let mut sizes = [k as usize, 0, 0];
    for (i, r) in rols.iter().enumerate() {
        let g = if groups.is_some_and(|g| g[i]) { 1 } else { 2 };
        sizes[g] += 1;
        if r.len() < n {
            omit[0] += 1;
            omit[g] += 1;
        }
    }
    let share = |j: usize| if sizes[j] == 0 { 0.0 } else { omit[j] as f64 / sizes[j] as f64 };
    DgpMetrics {
        mean_length: rols.iter().map(Rol::len).sum::<usize>() as f64 / k,
        wtt_share: rols.iter().enumerate().filter(|(i, r)| is_wtt(r, economy.applicant(*i))).count() as f64 / k,
        stability: stability_fraction(outcome, economy),
        omit_share: [share(0), share(1), share(2)],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSampleResult {
    pub dgp: StrategyKind,
    pub metrics: DgpMetrics,
    /// WTT and stability fits.
    pub estimates: Option<[EstimationResult; 2]>,
    pub counterfactual: Option<CounterfactualReport>,
    pub cutoffs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub sample: usize,
    pub dgps: Vec<DgpSampleResult>,
}

/// Raw data of one sample under one process, for persistence.
pub struct SampleArtifacts {
    pub market: McMarket,
    pub reports: Vec<(StrategyKind, Vec<Rol>, MatchOutcome)>,
}

/// Generates a sample's markets, reports and outcomes without fitting.
pub fn sample_artifacts(design: &McDesign, sample: usize) -> Result<SampleArtifacts, McError> {
    let market = design.market(sample)?;
    let draws = design.draws(sample, market.applicants.len());
    let mut reports = Vec::new();
    for &kind in &design.config.dgps {
        let rols = dgp_reports(&market.economy, kind, &design.config.params, &design.dist, &draws);
        let outcome = run_da(&market.economy, &rols)?;
        reports.push((kind, rols, outcome));
    }
    Ok(SampleArtifacts { market, reports })
}

/// Runs the full pipeline on one estimation sample.
pub fn run_sample(design: &McDesign, sample: usize) -> Result<SampleResult, McError> {
    let cfg = &design.config;
    let market = design.market(sample)?;
    let draws = design.draws(sample, market.applicants.len());
    let policy_economy = if cfg.counterfactual { Some(apply_priority_policy(&market.economy)?) } else { None };
    let mut out = Vec::new();
    for &kind in &cfg.dgps {
        let rols = dgp_reports(&market.economy, kind, &cfg.params, &design.dist, &draws);
        let outcome = run_da(&market.economy, &rols)?;
        let metrics = dgp_metrics(&market.economy, &rols, &outcome);

        let estimates = if cfg.estimate {
            let data = ChoiceDataset::from_market(&market, &rols, &outcome);
            let wtt = fit(Objective::Wtt, &data, &[0.0; 4], cfg.tol)?;
            let st = fit(Objective::Stability, &data.with_policy(cfg.violation_policy), &[0.0; 4], cfg.tol)?;
            Some([wtt, st])
        } else {
            None
        };

        let counterfactual = match &policy_economy {
            Some(policy_economy) => {
                let truth_dist = design.policy_dist.as_ref().unwrap_or(&design.dist);
                let truth_reports = dgp_reports(policy_economy, kind, &cfg.params, truth_dist, &draws);
                let inputs =
                    PredictionInputs { market: &market, policy_economy, submitted: &rols, estimates: None, truth_reports: Some(&truth_reports) };
                let est = estimates.as_ref().map(|[w, s]| [Some(w.beta_hat.as_slice()), Some(s.beta_hat.as_slice())]).unwrap_or([None, None]);
                Some(CounterfactualReport { seed: cfg.seed, sample, dgp: kind, approaches: evaluate(&inputs, &outcome, est)? })
            }
            None => None,
        };
        out.push(DgpSampleResult { dgp: kind, metrics, estimates, counterfactual, cutoffs: outcome.cutoffs.as_slice().to_vec() });
    }
    Ok(SampleResult { sample, dgps: out })
}

/// Runs every sample, in parallel.
pub fn run_all(design: &McDesign) -> Result<Vec<SampleResult>, McError> {
    (0..design.config.n_samples).into_par_iter().map(|s| run_sample(design, s)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    pub fn of(xs: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = xs.into_iter().collect();
        if v.is_empty() {
            return Self::default();
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = if v.len() > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
        Self { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproachSummary {
    pub approach: Approach,
    /// Indexed by group (disadvantaged, others).
    pub better: [MeanSd; 2],
    pub worse: [MeanSd; 2],
    pub indifferent: [MeanSd; 2],
    pub misprediction: [MeanSd; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSummary {
    pub dgp: StrategyKind,
    pub mean_length: MeanSd,
    pub wtt_share: MeanSd,
    pub stability: MeanSd,
    pub omit_share: [MeanSd; 3],
    /// Per objective (WTT, stability), per coefficient.
    pub beta: Option<[Vec<MeanSd>; 2]>,
    pub converged_share: Option<[f64; 2]>,
    pub approaches: Vec<ApproachSummary>,
}

/// Averages over samples, per process.
pub fn summarize(results: &[SampleResult]) -> Vec<DgpSummary> {
    let Some(first) = results.first() else { return Vec::new() };
    first
        .dgps
        .iter()
        .enumerate()
        .map(|(j, d0)| {
            let rows: Vec<&DgpSampleResult> = results.iter().map(|r| &r.dgps[j]).collect();
            let ms = |f: &dyn Fn(&DgpSampleResult) -> f64| MeanSd::of(rows.iter().map(|r| f(r)));
            let beta = d0.estimates.as_ref().map(|_| {
                let per = |o: usize| {
                    (0..4).map(|p| MeanSd::of(rows.iter().map(|r| r.estimates.as_ref().expect("uniform config")[o].beta_hat[p]))).collect()
                };
                [per(0), per(1)]
            });
            let converged_share = d0.estimates.as_ref().map(|_| {
                let share = |o: usize| rows.iter().filter(|r| r.estimates.as_ref().expect("uniform config")[o].converged).count() as f64 / rows.len() as f64;
                [share(0), share(1)]
            });
            let approaches = d0
                .counterfactual
                .as_ref()
                .map(|report| {
                    report
                        .approaches
                        .iter()
                        .enumerate()
                        .map(|(a, rep)| {
                            let pick = |f: &dyn Fn(&ApproachReport) -> f64| {
                                MeanSd::of(rows.iter().map(|r| f(&r.counterfactual.as_ref().expect("uniform config").approaches[a])))
                            };
                            ApproachSummary {
                                approach: rep.approach,
                                better: [pick(&|x| x.welfare[0].better), pick(&|x| x.welfare[1].better)],
                                worse: [pick(&|x| x.welfare[0].worse), pick(&|x| x.welfare[1].worse)],
                                indifferent: [pick(&|x| x.welfare[0].indifferent), pick(&|x| x.welfare[1].indifferent)],
                                misprediction: [pick(&|x| x.misprediction[0]), pick(&|x| x.misprediction[1])],
                            }
                        })
                        .collect()
                })
                .unwrap_or_default();
            DgpSummary {
                dgp: d0.dgp,
                mean_length: ms(&|r| r.metrics.mean_length),
                wtt_share: ms(&|r| r.metrics.wtt_share),
                stability: ms(&|r| r.metrics.stability),
                omit_share: [ms(&|r| r.metrics.omit_share[0]), ms(&|r| r.metrics.omit_share[1]), ms(&|r| r.metrics.omit_share[2])],
                beta,
                converged_share,
                approaches,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> McConfig {
        McConfig { k: 180, n_samples: 2, n_cutoff_samples: 30, ..McConfig::default() }
    }

    #[test]
    fn tt_reports_are_full_and_stable() {
        let design = McDesign::build(McConfig { dgps: vec![StrategyKind::Tt], estimate: false, counterfactual: false, ..small() }).unwrap();
        let r = run_sample(&design, 0).unwrap();
        let m = &r.dgps[0].metrics;
        assert_eq!(m.mean_length, 12.0);
        assert_eq!(m.wtt_share, 1.0);
        assert_eq!(m.stability, 1.0);
    }

    #[test]
    fn rejects_non_dgp_kinds() {
        assert!(matches!(McDesign::build(McConfig { dgps: vec![StrategyKind::Theorem1], ..small() }), Err(McError::NotADgp(_))));
    }

    #[test]
    fn pipeline_is_deterministic() {
        let design = McDesign::build(small()).unwrap();
        let a = run_sample(&design, 1).unwrap();
        let b = run_sample(&design, 1).unwrap();
        assert_eq!(a, b);
        for d in &a.dgps {
            for rep in &d.counterfactual.as_ref().unwrap().approaches {
                for w in rep.welfare {
                    assert!((w.better + w.worse + w.indifferent - 1.0).abs() < 1e-12);
                }
                if rep.approach == Approach::Truth {
                    assert_eq!(rep.misprediction, [0.0, 0.0]);
                }
            }
        }
    }

    #[test]
    fn identity_reform_reproduces_factual_outcome() {
        let design = McDesign::build(McConfig { counterfactual: false, estimate: false, ..small() }).unwrap();
        let market = design.market(0).unwrap();
        let draws = design.draws(0, market.applicants.len());
        for kind in [StrategyKind::Tt, StrategyKind::Pim, StrategyKind::Prm] {
            let factual = dgp_reports(&market.economy, kind, &design.config.params, &design.dist, &draws);
            let again = dgp_reports(&market.economy.clone(), kind, &design.config.params, &design.dist, &draws);
            let a = run_da(&market.economy, &factual).unwrap();
            let b = run_da(&market.economy, &again).unwrap();
            assert_eq!(a, b);
        }
    }
}
