//! Reporting strategies.
//!
//! Covers truth-telling, stable-response strategies (SRS), the robust profile
//! that mixes truth-telling with non-truthful SRS reports, the two mistake
//! processes used in the Monte Carlo design, the block-alternating profile
//! whose cutoffs cycle, and the replicated rejection-chain economy.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{favorite_feasible, truthful_rol, ApplicantType, College, CutoffVector, Economy, Rol};
use crate::rng::Rng;

pub const ENUMERATE_MAX_COLLEGES: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrategyError {
    #[error("enumeration supports at most {max} colleges, got {found}")]
    TooManyColleges { found: usize, max: usize },
    #[error("no SRS report violates weak truth-telling for this type")]
    NoNonWttSrs,
    #[error("{0:?} reports need a simulated cutoff distribution")]
    MissingDistribution(StrategyKind),
    #[error("parameter {name} = {value} is out of range")]
    InvalidParam { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StrategyKind {
    Tt,
    Theorem1,
    Pim,
    Prm,
    AppendixB,
    Custom,
}

/// Tunable strategy parameters. Defaults are the calibrated Monte Carlo values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyParams {
    /// Half-width of the score band around the reference cutoffs inside which
    /// the robust profile always tells the truth.
    pub delta: f64,
    /// Probability of truth-telling outside the band (regularity floor).
    pub gamma: f64,
    /// Probability that a sometimes-matched applicant omits never-matched colleges.
    pub omission_prob: f64,
    /// Probability that an omitter drops each eligible college.
    pub drop_share: f64,
    /// Extra omission probability added on top of the payoff-irrelevant process.
    pub prm_extra_prob: f64,
    /// Share of omitters who also drop low-probability colleges.
    pub prm_share: f64,
    /// Match-probability threshold below which a college counts as low-probability.
    pub prm_threshold: f64,
}

impl Default for StrategyParams {
    fn default() -> Self {
        Self {
            delta: 0.05,
            gamma: 0.2,
            omission_prob: 0.45,
            drop_share: 0.85,
            prm_extra_prob: 0.08,
            prm_share: 0.65,
            prm_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyProfileSpec {
    pub kind: StrategyKind,
    #[serde(default)]
    pub params: StrategyParams,
}

impl StrategyProfileSpec {
    pub fn new(kind: StrategyKind) -> Self {
        Self { kind, params: StrategyParams::default() }
    }

    pub fn validate(&self) -> Result<(), StrategyError> {
        let p = &self.params;
        let open = |name, value: f64| if value > 0.0 && value < 1.0 { Ok(()) } else { Err(StrategyError::InvalidParam { name, value }) };
        let unit = |name, value: f64| if (0.0..=1.0).contains(&value) { Ok(()) } else { Err(StrategyError::InvalidParam { name, value }) };
        open("delta", p.delta)?;
        if !(p.gamma > 0.0 && p.gamma <= 1.0) {
            return Err(StrategyError::InvalidParam { name: "gamma", value: p.gamma });
        }
        open("prm_threshold", p.prm_threshold)?;
        unit("omission_prob", p.omission_prob)?;
        unit("drop_share", p.drop_share)?;
        unit("prm_extra_prob", p.prm_extra_prob)?;
        unit("prm_share", p.prm_share)
    }
}

/// True when the report demands the favourite feasible college: it is listed
/// and no other feasible college is listed ahead of it. A type with no
/// feasible acceptable college must not demand any feasible college, so she
/// stays unassigned against `p`.
pub fn is_srs(rol: &Rol, theta: &ApplicantType, p: &CutoffVector) -> bool {
    rol.first_feasible(|c| theta.scores()[c] >= p.get(c)) == favorite_feasible(theta, p)
}

/// Weak truth-telling: the report is a prefix of the truthful ROL.
pub fn is_wtt(rol: &Rol, theta: &ApplicantType) -> bool {
    rol.is_prefix_of(&truthful_rol(theta))
}

/// Every ordered subset of the colleges, the empty list included.
pub fn all_rols(n_colleges: usize) -> Result<Vec<Rol>, StrategyError> {
    if n_colleges > ENUMERATE_MAX_COLLEGES {
        return Err(StrategyError::TooManyColleges { found: n_colleges, max: ENUMERATE_MAX_COLLEGES });
    }
    let mut out = vec![Rol::empty()];
    let mut frontier: Vec<Vec<College>> = vec![Vec::new()];
    for _ in 0..n_colleges {
        let mut next = Vec::new();
        for prefix in &frontier {
            for c in (0..n_colleges).filter(|c| !prefix.contains(c)) {
                let mut v = prefix.clone();
                v.push(c);
                out.push(Rol::from_vec_unchecked(v.clone()));
                next.push(v);
            }
        }
        frontier = next;
    }
    Ok(out)
}

/// All SRS reports for `theta` against `p`.
pub fn enumerate_srs(theta: &ApplicantType, p: &CutoffVector) -> Result<Vec<Rol>, StrategyError> {
    Ok(all_rols(theta.n_colleges())?.into_iter().filter(|r| is_srs(r, theta, p)).collect())
}

/// An SRS report that is neither truthful nor a truthful prefix.
///
/// If the top choice is infeasible it is dropped and the rest kept in true
/// order. If it is feasible it stays first and the remainder is shuffled into
/// a non-identity order. Short lists fall back to moving an infeasible college
/// to the front or appending an unacceptable one.
pub fn make_non_wtt_srs(theta: &ApplicantType, p: &CutoffVector, rng: &mut Rng) -> Result<Rol, StrategyError> {
    let truth = truthful_rol(theta).into_vec();
    let feasible = |c: College| theta.scores()[c] >= p.get(c);
    if let Some((&head, rest)) = truth.split_first() {
        if !feasible(head) && !rest.is_empty() {
            return Ok(Rol::from_vec_unchecked(rest.to_vec()));
        }
        if feasible(head) && rest.len() >= 2 {
            let mut tail = rest.to_vec();
            while tail == rest {
                tail.shuffle(rng);
            }
            let mut v = vec![head];
            v.extend(tail);
            return Ok(Rol::from_vec_unchecked(v));
        }
        if feasible(head) {
            if let Some(&x) = rest.iter().find(|&&c| !feasible(c)) {
                let mut v = vec![x];
                v.extend(truth.iter().copied().filter(|&c| c != x));
                return Ok(Rol::from_vec_unchecked(v));
            }
        }
    }
    // Appending a college keeps the report SRS as long as it is never demanded
    // against `p`: anything works after a feasible favourite, otherwise it
    // must be infeasible.
    let has_favorite = favorite_feasible(theta, p).is_some();
    let unacceptable: Vec<College> = (0..theta.n_colleges()).filter(|&c| !truth.contains(&c) && (has_favorite || !feasible(c))).collect();
    match unacceptable.choose(rng) {
        Some(&x) => {
            let mut v = truth;
            v.push(x);
            Ok(Rol::from_vec_unchecked(v))
        }
        None => Err(StrategyError::NoNonWttSrs),
    }
}

/// True when some score lies within `delta` of the reference cutoff.
pub fn in_boundary_band(theta: &ApplicantType, p_bar: &CutoffVector, delta: f64) -> bool {
    theta.scores().iter().zip(p_bar.as_slice()).any(|(s, p)| (s - p).abs() <= delta)
}

/// The robust profile: truthful inside the boundary band, otherwise truthful
/// with probability `gamma` and a non-truthful SRS report against `p_bar`
/// the rest of the time.
pub fn theorem1_strategy(theta: &ApplicantType, p_bar: &CutoffVector, delta: f64, gamma: f64, rng: &mut Rng) -> Rol {
    if in_boundary_band(theta, p_bar, delta) || rng.random::<f64>() < gamma {
        return truthful_rol(theta);
    }
    make_non_wtt_srs(theta, p_bar, rng).unwrap_or_else(|_| truthful_rol(theta))
}

/// Cutoffs simulated under truth-telling, used by the mistake processes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffDistribution {
    pub samples: Vec<CutoffVector>,
    /// `admit_prob[r][c]`: share of samples in which the applicant holding
    /// priority rank `r` clears the cutoff at `c`.
    pub admit_prob: Vec<Vec<f64>>,
    /// `match_freq[r][c]`: share of samples in which rank `r` was matched with `c`.
    pub match_freq: Vec<Vec<f64>>,
}

impl CutoffDistribution {
    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn n_colleges(&self) -> usize {
        self.samples.first().map_or(0, CutoffVector::len)
    }
}

/// Per college, the share of cutoff samples in which it would be this type's
/// favourite feasible college, i.e. her DA assignment if she takes the
/// sample's cutoffs as given and reports truthfully.
pub fn match_probabilities(theta: &ApplicantType, dist: &CutoffDistribution) -> Vec<f64> {
    let mut counts = vec![0usize; theta.n_colleges()];
    for p in &dist.samples {
        if let Some(c) = favorite_feasible(theta, p) {
            counts[c] += 1;
        }
    }
    let n = dist.n_samples().max(1) as f64;
    counts.into_iter().map(|x| x as f64 / n).collect()
}

/// Uniform draws behind one applicant's mistake process. Drawing them up
/// front in a fixed order lets the two mistake processes and the
/// counterfactual benchmark share them.
#[derive(Debug, Clone, PartialEq)]
pub struct MistakeDraws {
    omit: f64,
    relevant: f64,
    per_college: Vec<f64>,
}

impl MistakeDraws {
    pub fn draw(rng: &mut Rng, n_colleges: usize) -> Self {
        let omit = rng.random();
        let relevant = rng.random();
        let per_college = (0..n_colleges).map(|_| rng.random()).collect();
        Self { omit, relevant, per_college }
    }
}

/// Applies a mistake process to a truthful ROL given match probabilities.
///
/// Payoff-irrelevant omissions: an applicant never matched anywhere keeps a
/// random non-empty subset of her list. Otherwise, with probability
/// `omission_prob`, she drops a random non-empty subset of her zero-probability
/// colleges. Payoff-relevant omissions add `prm_extra_prob` more omitters (a
/// superset of the payoff-irrelevant ones), and a `prm_share` of omitters also
/// drop every college whose match probability is positive but below
/// `prm_threshold`. The college she is most likely to get is never dropped.
pub fn apply_mistakes(truth: &Rol, probs: &[f64], kind: StrategyKind, params: &StrategyParams, draws: &MistakeDraws) -> Rol {
    let relevant = match kind {
        StrategyKind::Pim => false,
        StrategyKind::Prm => true,
        _ => return truth.clone(),
    };
    let list = truth.as_slice();
    if list.is_empty() {
        return truth.clone();
    }
    let never_matched = list.iter().all(|&c| probs[c] == 0.0);
    if never_matched {
        let mut kept: Vec<College> = list.iter().copied().filter(|&c| draws.per_college[c] >= params.drop_share).collect();
        if kept.is_empty() {
            let keep = *list.iter().max_by(|&&a, &&b| draws.per_college[a].total_cmp(&draws.per_college[b])).expect("non-empty");
            kept.push(keep);
        }
        return Rol::from_vec_unchecked(kept);
    }

    let omit_rate = if relevant { params.omission_prob + params.prm_extra_prob } else { params.omission_prob };
    if draws.omit >= omit_rate {
        return truth.clone();
    }
    let zero: Vec<College> = list.iter().copied().filter(|&c| probs[c] == 0.0).collect();
    let mut dropped: Vec<College> = zero.iter().copied().filter(|&c| draws.per_college[c] < params.drop_share).collect();
    if dropped.is_empty() {
        if let Some(&c) = zero.iter().min_by(|&&a, &&b| draws.per_college[a].total_cmp(&draws.per_college[b])) {
            dropped.push(c);
        }
    }
    if relevant && draws.relevant < params.prm_share {
        let best = list.iter().copied().max_by(|&a, &b| probs[a].total_cmp(&probs[b]).then(b.cmp(&a))).expect("non-empty");
        dropped.extend(
            list.iter()
                .copied()
                .filter(|&c| c != best && probs[c] > 0.0 && probs[c] < params.prm_threshold),
        );
    }
    Rol::from_vec_unchecked(list.iter().copied().filter(|c| !dropped.contains(c)).collect())
}

/// The report a type submits under a data-generating process.
pub fn dgp_rol(
    theta: &ApplicantType,
    spec: &StrategyProfileSpec,
    dist: Option<&CutoffDistribution>,
    rng: &mut Rng,
) -> Result<Rol, StrategyError> {
    let truth = truthful_rol(theta);
    match spec.kind {
        StrategyKind::Pim | StrategyKind::Prm => {
            let dist = dist.ok_or(StrategyError::MissingDistribution(spec.kind))?;
            let draws = MistakeDraws::draw(rng, theta.n_colleges());
            let probs = match_probabilities(theta, dist);
            Ok(apply_mistakes(&truth, &probs, spec.kind, &spec.params, &draws))
        }
        _ => Ok(truth),
    }
}

/// Strategy label in the block-alternating profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BlockStrategy {
    Tt,
    EmptyOrTt,
}

/// Block boundary `k_m = ceil(1000 / gamma^m)`.
pub fn appendix_b_boundary(gamma: f64, m: i32) -> u64 {
    let x = 1000.0 / gamma.powi(m);
    // Guard against representation error in gamma pushing an exact integer up.
    (x * (1.0 - 1e-12)).ceil() as u64
}

/// Strategy of the applicant with 1-based `index`. Indices up to `k_1` and in
/// `(k_{2m}, k_{2m+1}]` mix; indices in `(k_{2m-1}, k_{2m}]` tell the truth.
pub fn appendix_b_profile(index: u64, gamma: f64) -> BlockStrategy {
    let mut m = 1;
    while index > appendix_b_boundary(gamma, m) {
        m += 1;
    }
    // Now k_{m-1} < index <= k_m (with k_0 treated as 0 for m = 1).
    if m % 2 == 0 {
        BlockStrategy::Tt
    } else {
        BlockStrategy::EmptyOrTt
    }
}

/// Reports under the block-alternating profile. Applicant `i` (0-based) has
/// index `i + 1`.
pub fn appendix_b_rols(economy: &Economy, gamma: f64, rng: &mut Rng) -> Vec<Rol> {
    economy
        .applicants()
        .iter()
        .enumerate()
        .map(|(i, t)| match appendix_b_profile(i as u64 + 1, gamma) {
            BlockStrategy::Tt => truthful_rol(t),
            BlockStrategy::EmptyOrTt => {
                if rng.random::<f64>() < gamma {
                    truthful_rol(t)
                } else {
                    Rol::empty()
                }
            }
        })
        .collect()
}

/// Colleges in the rejection-chain example.
pub mod example1 {
    pub const A: usize = 0;
    pub const B: usize = 1;
    pub const C3: usize = 2;
    /// Utilities of the three types over `(a, b, c3)`.
    pub const UTILITIES: [[f64; 3]; 3] = [[2.0, 3.0, 1.0], [3.0, 2.0, 1.0], [3.0, 2.0, 1.0]];
}

/// The three-applicant economy: scores at a are `(1, 0, 0.5)`, at b
/// `(0, 1, 0.5)`, at c3 `(0.3, 0.6, 0.9)`; one seat each. The third type
/// lists only c3; the others tell the truth.
pub fn example1_exact() -> (Economy, Vec<Rol>) {
    let scores = [[1.0, 0.0, 0.3], [0.0, 1.0, 0.6], [0.5, 0.5, 0.9]];
    let apps = (0..3)
        .map(|t| ApplicantType::new(example1::UTILITIES[t].to_vec(), scores[t].to_vec()).expect("valid constants"))
        .collect();
    let economy = Economy::new(apps, vec![1, 1, 1], "example1-exact").expect("valid constants");
    let rols = example1_rols(&economy, 1);
    (economy, rols)
}

fn example1_rols(economy: &Economy, k: usize) -> Vec<Rol> {
    economy
        .applicants()
        .iter()
        .enumerate()
        .map(|(i, t)| if i / k == 2 { Rol::from_vec_unchecked(vec![example1::C3]) } else { truthful_rol(t) })
        .collect()
}

/// Score band for a type at a college, by its rank there (0 = top).
fn band(rank: usize) -> (f64, f64) {
    match rank {
        0 => (2.0 / 3.0, 1.0),
        1 => (1.0 / 3.0, 2.0 / 3.0),
        _ => (0.0, 1.0 / 3.0),
    }
}

/// `k` replicas of each of the three types with seats `(k, k, k)`.
///
/// Applicants `0..k` are type one, `k..2k` type two and `2k..3k` type three.
/// College a ranks types 1, 3, 2; college b ranks 2, 3, 1; scores at c3 are
/// uniform. Types one and two tell the truth and type three lists only c3.
pub fn example1_economy(k: usize, rng: &mut Rng) -> (Economy, Vec<Rol>) {
    // Rank of each type at a and b.
    const RANK_A: [usize; 3] = [0, 2, 1];
    const RANK_B: [usize; 3] = [2, 0, 1];
    let mut apps = Vec::with_capacity(3 * k);
    for t in 0..3 {
        for _ in 0..k {
            let draw = |rng: &mut Rng, (lo, hi): (f64, f64)| {
                let x: f64 = rng.random_range(lo..hi);
                x.min(hi)
            };
            let sa = draw(rng, band(RANK_A[t]));
            let sb = draw(rng, band(RANK_B[t]));
            let sc: f64 = rng.random();
            apps.push(ApplicantType::new(example1::UTILITIES[t].to_vec(), vec![sa, sb, sc]).expect("scores in bands"));
        }
    }
    let economy = Economy::new(apps, vec![k; 3], format!("example1-k{k}")).expect("k >= 1");
    let rols = example1_rols(&economy, k);
    (economy, rols)
}
