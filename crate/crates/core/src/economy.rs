//! Economy samplers.
//!
//! Two families matter for the experiments: the abstract full-support economy
//! (i.i.d. uniform utilities and scores) and the geography economy used in
//! the Monte Carlo design, where utilities depend on college quality,
//! distance, a group-by-college interaction and college size.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, Gumbel};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::run_da;
use crate::model::{truthful_rol, ApplicantType, Economy, ModelError, Rol};
use crate::rng::{self, Rng};
use crate::strategy::{example1_economy, CutoffDistribution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EconomyError {
    #[error("need at least two colleges, got {0}")]
    TooFewColleges(usize),
    #[error("capacity share {value} of college {college} is outside (0, 1)")]
    BadShare { college: usize, value: f64 },
    #[error("spec lists {shares} capacity shares for {colleges} colleges")]
    ShareCount { shares: usize, colleges: usize },
    #[error("utility bounds ({0}, {1}) need lower < upper and upper > 0")]
    BadBounds(f64, f64),
    #[error("economy size must be at least 1")]
    EmptyEconomy,
    #[error("sample count must be at least 1")]
    NoSamples,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Family {
    FullSupport,
    McGeography,
    Example1,
    AppendixB,
}

/// Monte Carlo seat counts at `k = 1800`.
pub const MC_CAPACITIES: [usize; 12] = [150, 75, 150, 150, 75, 150, 150, 75, 150, 150, 75, 150];
pub const MC_K: usize = 1800;
pub const MC_BETAS: [f64; 4] = [0.3, -1.0, 2.0, 0.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconomySpec {
    pub family: Family,
    pub n_colleges: usize,
    /// Seats per applicant at each college; capacities are `floor(k * share)`,
    /// at least one.
    pub capacity_shares: Vec<f64>,
    pub betas: [f64; 4],
    pub u_bounds: (f64, f64),
    pub seed: u64,
}

impl EconomySpec {
    pub fn full_support(capacity_shares: Vec<f64>, seed: u64) -> Self {
        Self { family: Family::FullSupport, n_colleges: capacity_shares.len(), capacity_shares, betas: MC_BETAS, u_bounds: (-1.0, 1.0), seed }
    }

    pub fn mc_geography(seed: u64) -> Self {
        let shares = MC_CAPACITIES.iter().map(|&q| q as f64 / MC_K as f64).collect();
        Self { family: Family::McGeography, n_colleges: 12, capacity_shares: shares, betas: MC_BETAS, u_bounds: (-1.0, 1.0), seed }
    }

    pub fn example1(seed: u64) -> Self {
        Self { family: Family::Example1, n_colleges: 3, capacity_shares: vec![1.0 / 3.0; 3], betas: MC_BETAS, u_bounds: (-1.0, 1.0), seed }
    }

    pub fn appendix_b(seed: u64) -> Self {
        Self { family: Family::AppendixB, n_colleges: 2, capacity_shares: vec![0.25; 2], betas: MC_BETAS, u_bounds: (-1.0, 1.0), seed }
    }

    pub fn validate(&self) -> Result<(), EconomyError> {
        if self.n_colleges < 2 {
            return Err(EconomyError::TooFewColleges(self.n_colleges));
        }
        if self.capacity_shares.len() != self.n_colleges {
            return Err(EconomyError::ShareCount { shares: self.capacity_shares.len(), colleges: self.n_colleges });
        }
        if let Some((c, &v)) = self.capacity_shares.iter().enumerate().find(|(_, v)| !(**v > 0.0 && **v < 1.0)) {
            return Err(EconomyError::BadShare { college: c, value: v });
        }
        let (lo, hi) = self.u_bounds;
        if !(lo < hi && hi > 0.0) {
            return Err(EconomyError::BadBounds(lo, hi));
        }
        Ok(())
    }

    pub fn capacities(&self, k: usize) -> Vec<usize> {
        self.capacity_shares.iter().map(|s| ((k as f64 * s + 1e-9).floor() as usize).max(1)).collect()
    }
}

/// Geography draws for one Monte Carlo applicant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McApplicant {
    pub location: (f64, f64),
    pub disadvantaged: bool,
    pub distances: Vec<f64>,
    pub epsilon: Vec<f64>,
}

/// College position on the radius-1/2 circle, equally spaced.
pub fn college_position(c: usize, n_colleges: usize) -> (f64, f64) {
    let angle = 2.0 * PI * c as f64 / n_colleges as f64;
    (0.5 * angle.cos(), 0.5 * angle.sin())
}

/// One realised Monte Carlo sample: draws, college attributes and the
/// resulting economy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McMarket {
    pub applicants: Vec<McApplicant>,
    /// `A_c`: 1 for odd 1-based college numbers.
    pub a: Vec<f64>,
    /// `Small_c`: 1 for the smallest colleges.
    pub small: Vec<f64>,
    pub betas: [f64; 4],
    /// Economy with utilities shifted per applicant so that every college is
    /// acceptable (see [`McMarket::raw_utility`]).
    pub economy: Economy,
}

impl McMarket {
    pub fn n_colleges(&self) -> usize {
        self.a.len()
    }

    /// `x_{i,c} = (c, d_{i,c}, T_i * A_c, Small_c)` with `c` 1-based.
    pub fn covariates(&self, i: usize, c: usize) -> [f64; 4] {
        let t = if self.applicants[i].disadvantaged { 1.0 } else { 0.0 };
        [(c + 1) as f64, self.applicants[i].distances[c], t * self.a[c], self.small[c]]
    }

    /// Systematic utility `x_{i,c} . beta`.
    pub fn systematic(&self, i: usize, c: usize, beta: &[f64]) -> f64 {
        self.covariates(i, c).iter().zip(beta).map(|(x, b)| x * b).sum()
    }

    /// `x_{i,c} . beta + eps_{i,c}` without any shift.
    pub fn raw_utility(&self, i: usize, c: usize, beta: &[f64]) -> f64 {
        self.systematic(i, c, beta) + self.applicants[i].epsilon[c]
    }

    /// Utilities under `beta` with the sample's own taste shocks, shifted so
    /// the applicant's least preferred college sits at 1. The shift is the
    /// same for every college of an applicant, so ordinal preferences are
    /// exactly those of the raw utilities.
    pub fn shifted_utilities(&self, beta: &[f64]) -> Vec<Vec<f64>> {
        (0..self.applicants.len())
            .map(|i| {
                let raw: Vec<f64> = (0..self.n_colleges()).map(|c| self.raw_utility(i, c, beta)).collect();
                let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
                raw.into_iter().map(|u| u - min + 1.0).collect()
            })
            .collect()
    }

    pub fn truthful_rols(&self) -> Vec<Rol> {
        self.economy.applicants().iter().map(truthful_rol).collect()
    }
}

/// Draws one Monte Carlo sample of size `k` for a geography spec.
///
/// Applicant `i` (0-based) has score `(i + 1) / k` at every college, so higher
/// indices have higher priority. Applicants in the lower half are
/// disadvantaged with probability 2/3; the upper half never are.
pub fn sample_mc_market(spec: &EconomySpec, k: usize, rng: &mut Rng) -> Result<McMarket, EconomyError> {
    spec.validate()?;
    if k == 0 {
        return Err(EconomyError::EmptyEconomy);
    }
    let n = spec.n_colleges;
    let capacities = spec.capacities(k);
    let min_cap = *capacities.iter().min().expect("n >= 2");
    let a: Vec<f64> = (0..n).map(|c| if c % 2 == 0 { 1.0 } else { 0.0 }).collect();
    let small: Vec<f64> = capacities.iter().map(|&q| if q == min_cap && capacities.iter().any(|&x| x != q) { 1.0 } else { 0.0 }).collect();
    let positions: Vec<(f64, f64)> = (0..n).map(|c| college_position(c, n)).collect();
    let gumbel = Gumbel::new(0.0, 1.0).expect("unit scale");

    let applicants: Vec<McApplicant> = (0..k)
        .map(|i| {
            let disadvantaged = i < k / 2 && rng.random::<f64>() < 2.0 / 3.0;
            let r = rng.random::<f64>().sqrt();
            let angle = 2.0 * PI * rng.random::<f64>();
            let location = (r * angle.cos(), r * angle.sin());
            let distances = positions.iter().map(|(x, y)| ((location.0 - x).powi(2) + (location.1 - y).powi(2)).sqrt()).collect();
            let epsilon = (0..n).map(|_| gumbel.sample(rng)).collect();
            McApplicant { location, disadvantaged, distances, epsilon }
        })
        .collect();

    // Placeholder utilities; replaced below once covariates are available.
    let placeholder: Vec<ApplicantType> = (0..k)
        .map(|i| ApplicantType::new(vec![1.0; n], vec![(i + 1) as f64 / k as f64; n]))
        .collect::<Result<_, _>>()?;
    let groups = applicants.iter().map(|x| x.disadvantaged).collect();
    let economy = Economy::new(placeholder, capacities, format!("mc-geography-k{k}"))?.with_groups(groups)?;
    let mut market = McMarket { applicants, a, small, betas: spec.betas, economy };
    let utilities = market.shifted_utilities(&spec.betas);
    market.economy = market.economy.with_utilities(&utilities)?;
    Ok(market)
}

/// Draws an economy of size `k` from the spec's family.
pub fn sample_economy(spec: &EconomySpec, k: usize, rng: &mut Rng) -> Result<Economy, EconomyError> {
    spec.validate()?;
    if k == 0 {
        return Err(EconomyError::EmptyEconomy);
    }
    match spec.family {
        Family::McGeography => Ok(sample_mc_market(spec, k, rng)?.economy),
        Family::Example1 => Ok(example1_economy(k, rng).0),
        Family::FullSupport => {
            let (lo, hi) = spec.u_bounds;
            let n = spec.n_colleges;
            let apps = (0..k)
                .map(|_| {
                    let u = (0..n).map(|_| rng.random_range(lo..hi)).collect();
                    let s = (0..n).map(|_| rng.random::<f64>()).collect();
                    ApplicantType::new(u, s)
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Economy::new(apps, spec.capacities(k), format!("full-support-k{k}"))?)
        }
        Family::AppendixB => {
            let apps = (0..k)
                .map(|_| {
                    let u = if rng.random::<bool>() { vec![2.0, 1.0] } else { vec![1.0, 2.0] };
                    let s = vec![rng.random::<f64>(), rng.random::<f64>()];
                    ApplicantType::new(u, s)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let cap = (k / 4).max(1);
            Ok(Economy::new(apps, vec![cap, cap], format!("appendix-b-k{k}"))?)
        }
    }
}

/// Simulates truth-telling cutoffs on `n_samples` fresh economies.
///
/// Sample `s` draws its economy from substream `(stream_tag, s, 0)` of `seed`,
/// then `transform` is applied before running DA. Besides the cutoffs, the
/// result records per applicant index how often that index cleared each
/// cutoff and how often it was matched there.
pub fn simulate_cutoff_distribution_with<F>(
    spec: &EconomySpec,
    k: usize,
    n_samples: usize,
    seed: u64,
    stream_tag: u64,
    transform: F,
) -> Result<CutoffDistribution, EconomyError>
where
    F: Fn(Economy) -> Result<Economy, EconomyError> + Sync,
{
    if n_samples == 0 {
        return Err(EconomyError::NoSamples);
    }
    let runs: Vec<(Economy, crate::model::MatchOutcome)> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = rng::substream(seed, stream_tag, s as u64, 0);
            let economy = transform(sample_economy(spec, k, &mut rng)?)?;
            let rols: Vec<Rol> = economy.applicants().iter().map(truthful_rol).collect();
            let outcome = run_da(&economy, &rols).expect("truthful lists are in range");
            Ok((economy, outcome))
        })
        .collect::<Result<_, EconomyError>>()?;

    let n = spec.n_colleges;
    let mut admit = vec![vec![0.0; n]; k];
    let mut matched = vec![vec![0.0; n]; k];
    let w = 1.0 / n_samples as f64;
    for (economy, outcome) in &runs {
        for i in 0..k {
            for c in 0..n {
                if economy.score(i, c) >= outcome.cutoffs.get(c) {
                    admit[i][c] += w;
                }
            }
            if let Some(c) = outcome.assignment[i] {
                matched[i][c] += w;
            }
        }
    }
    Ok(CutoffDistribution { samples: runs.into_iter().map(|(_, o)| o.cutoffs).collect(), admit_prob: admit, match_freq: matched })
}

/// Truth-telling cutoff distribution under the status-quo priorities.
pub fn simulate_cutoff_distribution(spec: &EconomySpec, k: usize, n_samples: usize, seed: u64) -> Result<CutoffDistribution, EconomyError> {
    simulate_cutoff_distribution_with(spec, k, n_samples, seed, rng::tag::CUTOFF_SAMPLE, Ok)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn mc_constants() {
        let spec = EconomySpec::mc_geography(1);
        assert_eq!(spec.capacities(MC_K), MC_CAPACITIES.to_vec());
        assert_eq!(MC_CAPACITIES.iter().sum::<usize>(), 1500);
        assert_eq!(spec.betas, [0.3, -1.0, 2.0, 0.0]);
    }

    #[test]
    fn mc_market_shape() {
        let spec = EconomySpec::mc_geography(1);
        let m = sample_mc_market(&spec, MC_K, &mut substream(1, 1, 0, 0)).unwrap();
        assert_eq!(m.a, vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        assert_eq!(m.small, vec![0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0]);
        assert!(m.applicants[900..].iter().all(|a| !a.disadvantaged));
        let share = m.applicants[..900].iter().filter(|a| a.disadvantaged).count() as f64 / 900.0;
        assert!((share - 2.0 / 3.0).abs() < 0.05);
        for (i, a) in m.applicants.iter().enumerate() {
            assert!(a.location.0.hypot(a.location.1) <= 1.0);
            for c in 0..12 {
                let (x, y) = college_position(c, 12);
                assert!((a.distances[c] - (a.location.0 - x).hypot(a.location.1 - y)).abs() < 1e-12);
                assert!((0.0..=1.5).contains(&a.distances[c]));
            }
            assert_eq!(truthful_rol(m.economy.applicant(i)).len(), 12);
            assert_eq!(m.economy.score(i, 3), (i + 1) as f64 / 1800.0);
        }
        // Shifted and raw utilities order colleges identically.
        let i = 17;
        let mut raw: Vec<usize> = (0..12).collect();
        raw.sort_by(|&x, &y| m.raw_utility(i, y, &spec.betas).total_cmp(&m.raw_utility(i, x, &spec.betas)));
        assert_eq!(truthful_rol(m.economy.applicant(i)).as_slice(), raw.as_slice());
    }

    #[test]
    fn colleges_equally_spaced() {
        for c in 0..12 {
            let (x, y) = college_position(c, 12);
            let (x2, y2) = college_position((c + 1) % 12, 12);
            assert!((x.hypot(y) - 0.5).abs() < 1e-12);
            assert!(((x - x2).hypot(y - y2) - 2.0 * 0.5 * (PI / 12.0).sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        for spec in [EconomySpec::mc_geography(3), EconomySpec::full_support(vec![0.25; 3], 3), EconomySpec::appendix_b(3)] {
            let a = sample_economy(&spec, 200, &mut substream(9, 1, 0, 0)).unwrap();
            let b = sample_economy(&spec, 200, &mut substream(9, 1, 0, 0)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn spec_validation() {
        assert!(matches!(EconomySpec::full_support(vec![0.5], 1).validate(), Err(EconomyError::TooFewColleges(1))));
        assert!(matches!(EconomySpec::full_support(vec![0.5, 1.5], 1).validate(), Err(EconomyError::BadShare { college: 1, .. })));
        let mut s = EconomySpec::full_support(vec![0.5, 0.5], 1);
        s.u_bounds = (1.0, -1.0);
        assert!(matches!(s.validate(), Err(EconomyError::BadBounds(..))));
    }

    #[test]
    fn no_rationing_means_zero_cutoffs() {
        let spec = EconomySpec::full_support(vec![0.99, 0.99], 1);
        let d = simulate_cutoff_distribution(&spec, 50, 5, 1).unwrap();
        assert!(d.samples.iter().all(|p| p.as_slice().iter().all(|&x| x == 0.0)));
        assert!(d.admit_prob.iter().flatten().all(|&x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn admission_is_monotone_in_rank() {
        let spec = EconomySpec::mc_geography(1);
        let d = simulate_cutoff_distribution(&spec, MC_K, 20, 5).unwrap();
        for c in 0..12 {
            for r in 1..MC_K {
                assert!(d.admit_prob[r][c] >= d.admit_prob[r - 1][c]);
            }
        }
    }
}
