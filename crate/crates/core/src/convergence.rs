//! Unilateral-deviation sweeps and cutoff convergence curves.
//!
//! A sweep draws one economy and one report profile, runs DA, then re-runs it
//! once per sampled deviator with that applicant switched to her truthful
//! list. Distances are sup norms to a reference cutoff vector.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::economy::{sample_economy, EconomyError, EconomySpec, Family};
use crate::engine::run_da;
use crate::model::{truthful_rol, CutoffVector, Economy, Rol};
use crate::rng::{self, tag, Rng};
use crate::strategy::{appendix_b_rols, example1_economy, theorem1_strategy, StrategyKind, StrategyProfileSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConvergenceError {
    #[error("{0:?} reports cannot be generated inside a deviation sweep")]
    UnsupportedProfile(StrategyKind),
    #[error("deviator {index} is outside 0..={k}")]
    DeviatorOutOfRange { index: usize, k: usize },
    #[error("k grid must be strictly increasing")]
    GridNotIncreasing,
    #[error("need at least one seed")]
    NoSeeds,
    #[error(transparent)]
    Economy(#[from] EconomyError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationSweepResult {
    pub k: usize,
    /// 1-based applicant indices; 0 is the undeviated run.
    pub deviators: Vec<usize>,
    pub baseline_cutoffs: CutoffVector,
    /// Cutoffs per entry of `deviators`.
    pub deviation_cutoffs: Vec<CutoffVector>,
    pub reference: CutoffVector,
    /// `max_i |P_(i) - reference|_inf` over the sampled deviators.
    pub sup_distance: f64,
    /// Deviator's true utility before and after switching to truth-telling.
    pub payoffs: Vec<(f64, f64)>,
}

/// Draws an economy and its report profile for one seed. The Example-1
/// family always uses the example's reports.
pub fn draw_instance(
    spec: &EconomySpec,
    profile: &StrategyProfileSpec,
    k: usize,
    p_bar: &CutoffVector,
    seed: u64,
) -> Result<(Economy, Vec<Rol>), ConvergenceError> {
    let mut rng = rng::substream(spec.seed ^ seed, tag::ECONOMY, k as u64, 0);
    if spec.family == Family::Example1 {
        // The example fixes its own reports; the profile kind does not apply.
        return Ok(example1_economy(k, &mut rng));
    }
    let economy = sample_economy(spec, k, &mut rng)?;
    let rols = profile_rols(&economy, profile, p_bar, spec.seed ^ seed, &mut rng)?;
    Ok((economy, rols))
}

fn profile_rols(
    economy: &Economy,
    profile: &StrategyProfileSpec,
    p_bar: &CutoffVector,
    seed: u64,
    rng: &mut Rng,
) -> Result<Vec<Rol>, ConvergenceError> {
    let k = economy.n_applicants() as u64;
    match profile.kind {
        StrategyKind::Tt => Ok(economy.applicants().iter().map(truthful_rol).collect()),
        StrategyKind::Theorem1 => Ok(economy
            .applicants()
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut r = rng::substream(seed, tag::STRATEGY, k, i as u64);
                theorem1_strategy(t, p_bar, profile.params.delta, profile.params.gamma, &mut r)
            })
            .collect()),
        StrategyKind::AppendixB => Ok(appendix_b_rols(economy, profile.params.gamma, rng)),
        other => Err(ConvergenceError::UnsupportedProfile(other)),
    }
}

/// Index 0 plus `min(k, n)` distinct applicant indices drawn uniformly from `1..=k`.
pub fn sample_deviators(k: usize, n: usize, rng: &mut Rng) -> Vec<usize> {
    let mut out = vec![0];
    let mut picked: Vec<usize> = index::sample(rng, k, n.min(k)).into_iter().map(|i| i + 1).collect();
    picked.sort_unstable();
    out.extend(picked);
    out
}

/// Runs DA once per deviator on a fixed instance.
pub fn sweep_instance(economy: &Economy, rols: &[Rol], deviators: &[usize], reference: &CutoffVector) -> Result<DeviationSweepResult, ConvergenceError> {
    let k = economy.n_applicants();
    if let Some(&index) = deviators.iter().find(|&&i| i > k) {
        return Err(ConvergenceError::DeviatorOutOfRange { index, k });
    }
    let baseline = run_da(economy, rols).expect("reports reference valid colleges");
    let runs: Vec<(CutoffVector, (f64, f64))> = deviators
        .par_iter()
        .map(|&d| {
            if d == 0 {
                return (baseline.cutoffs.clone(), (0.0, 0.0));
            }
            let i = d - 1;
            let mut dev = rols.to_vec();
            dev[i] = truthful_rol(economy.applicant(i));
            let out = run_da(economy, &dev).expect("truthful list is valid");
            let t = economy.applicant(i);
            (out.cutoffs, (t.utility_of(baseline.assignment[i]), t.utility_of(out.assignment[i])))
        })
        .collect();
    let sup_distance = runs.iter().map(|(p, _)| p.sup_distance(reference)).fold(0.0, f64::max);
    let (deviation_cutoffs, payoffs) = runs.into_iter().unzip();
    Ok(DeviationSweepResult {
        k,
        deviators: deviators.to_vec(),
        baseline_cutoffs: baseline.cutoffs,
        deviation_cutoffs,
        reference: reference.clone(),
        sup_distance,
        payoffs,
    })
}

/// One seeded sweep: draw the instance, sample deviators, re-run DA.
pub fn deviation_sweep(
    spec: &EconomySpec,
    profile: &StrategyProfileSpec,
    k: usize,
    n_deviators: usize,
    reference: &CutoffVector,
    seed: u64,
) -> Result<DeviationSweepResult, ConvergenceError> {
    let (economy, rols) = draw_instance(spec, profile, k, reference, seed)?;
    let mut rng = rng::substream(spec.seed ^ seed, tag::DEVIATORS, k as u64, 0);
    let deviators = sample_deviators(k.min(economy.n_applicants()), n_deviators, &mut rng);
    sweep_instance(&economy, &rols, &deviators, reference)
}

/// Mean truth-telling cutoffs at size `k` over `n_seeds` draws.
pub fn estimate_reference(spec: &EconomySpec, k: usize, n_seeds: usize, seed: u64) -> Result<CutoffVector, ConvergenceError> {
    if n_seeds == 0 {
        return Err(ConvergenceError::NoSeeds);
    }
    let cutoffs: Vec<CutoffVector> = (0..n_seeds)
        .into_par_iter()
        .map(|s| {
            let mut rng = rng::substream(seed, tag::REFERENCE, k as u64, s as u64);
            let economy = sample_economy(spec, k, &mut rng)?;
            let rols: Vec<Rol> = economy.applicants().iter().map(truthful_rol).collect();
            Ok(run_da(&economy, &rols).expect("truthful lists are valid").cutoffs)
        })
        .collect::<Result<_, EconomyError>>()?;
    Ok(CutoffVector::mean(&cutoffs).expect("n_seeds >= 1"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub mean_sup_distance: f64,
    pub sd_sup_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCurve {
    pub points: Vec<CurvePoint>,
    /// `(k, seed, sweep)` for every run behind the points.
    pub sweeps: Vec<(usize, u64, DeviationSweepResult)>,
}

impl ConvergenceCurve {
    /// Least-squares slope of `ln(mean distance)` on `ln k`.
    pub fn log_log_slope(&self) -> f64 {
        let xs: Vec<f64> = self.points.iter().map(|p| (p.k as f64).ln()).collect();
        let ys: Vec<f64> = self.points.iter().map(|p| p.mean_sup_distance.ln()).collect();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        sxy / sxx
    }
}

/// Aggregates sweeps over `n_seeds` seeds at each grid size.
pub fn convergence_curve(
    spec: &EconomySpec,
    profile: &StrategyProfileSpec,
    k_grid: &[usize],
    n_seeds: usize,
    n_deviators: usize,
    reference: &CutoffVector,
) -> Result<ConvergenceCurve, ConvergenceError> {
    if k_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ConvergenceError::GridNotIncreasing);
    }
    if n_seeds == 0 {
        return Err(ConvergenceError::NoSeeds);
    }
    let mut points = Vec::new();
    let mut sweeps = Vec::new();
    for &k in k_grid {
        let runs: Vec<DeviationSweepResult> =
            (0..n_seeds as u64).map(|s| deviation_sweep(spec, profile, k, n_deviators, reference, s)).collect::<Result<_, _>>()?;
        let d: Vec<f64> = runs.iter().map(|r| r.sup_distance).collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let var = if d.len() > 1 { d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64 } else { 0.0 };
        points.push(CurvePoint { k, mean_sup_distance: mean, sd_sup_distance: var.sqrt() });
        sweeps.extend(runs.into_iter().enumerate().map(|(s, r)| (k, s as u64, r)));
    }
    Ok(ConvergenceCurve { points, sweeps })
}
