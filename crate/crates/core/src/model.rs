//! Domain types shared by every other module.
//!
//! An applicant's type is a pair of per-college vectors: cardinal utilities and
//! priority scores in `[0, 1]`. Being unassigned is worth zero, so a truthful
//! rank-order list contains exactly the colleges with positive utility.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Zero-based college index.
pub type College = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("utility/score vectors have lengths {utilities} and {scores}")]
    LengthMismatch { utilities: usize, scores: usize },
    #[error("non-finite utility at college {0}")]
    NonFiniteUtility(College),
    #[error("score {value} at college {college} is outside [0, 1]")]
    ScoreOutOfRange { college: College, value: f64 },
    #[error("cutoff {value} at college {college} is outside [0, 1]")]
    CutoffOutOfRange { college: College, value: f64 },
    #[error("rank-order list lists college {0} twice")]
    DuplicateCollege(College),
    #[error("rank-order list references college {college} but there are only {n_colleges}")]
    CollegeOutOfRange { college: College, n_colleges: usize },
    #[error("college {0} has zero capacity")]
    ZeroCapacity(College),
    #[error("an economy needs at least one applicant")]
    NoApplicants,
    #[error("applicant {applicant} has {found} colleges, economy has {expected}")]
    ApplicantWidth { applicant: usize, found: usize, expected: usize },
    #[error("group flags cover {found} applicants, economy has {expected}")]
    FlagCount { found: usize, expected: usize },
}

/// An applicant type `(u, s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplicantType {
    utilities: Vec<f64>,
    scores: Vec<f64>,
}

impl ApplicantType {
    pub fn new(utilities: Vec<f64>, scores: Vec<f64>) -> Result<Self, ModelError> {
        if utilities.len() != scores.len() {
            return Err(ModelError::LengthMismatch { utilities: utilities.len(), scores: scores.len() });
        }
        if let Some(c) = utilities.iter().position(|u| !u.is_finite()) {
            return Err(ModelError::NonFiniteUtility(c));
        }
        if let Some(c) = scores.iter().position(|s| !(0.0..=1.0).contains(s)) {
            return Err(ModelError::ScoreOutOfRange { college: c, value: scores[c] });
        }
        Ok(Self { utilities, scores })
    }

    pub fn utilities(&self) -> &[f64] {
        &self.utilities
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn n_colleges(&self) -> usize {
        self.utilities.len()
    }

    /// Utility of an assignment; being unassigned is worth zero.
    pub fn utility_of(&self, assignment: Option<College>) -> f64 {
        assignment.map_or(0.0, |c| self.utilities[c])
    }
}

/// A submitted rank-order list: distinct colleges, most preferred first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Rol(Vec<College>);

impl Rol {
    pub fn new(entries: Vec<College>, n_colleges: usize) -> Result<Self, ModelError> {
        let mut seen = vec![false; n_colleges];
        for &c in &entries {
            if c >= n_colleges {
                return Err(ModelError::CollegeOutOfRange { college: c, n_colleges });
            }
            if std::mem::replace(&mut seen[c], true) {
                return Err(ModelError::DuplicateCollege(c));
            }
        }
        Ok(Self(entries))
    }

    /// Skips validation; callers guarantee distinct, in-range entries.
    pub(crate) fn from_vec_unchecked(entries: Vec<College>) -> Self {
        Self(entries)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn as_slice(&self) -> &[College] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, c: College) -> bool {
        self.0.contains(&c)
    }

    pub fn position(&self, c: College) -> Option<usize> {
        self.0.iter().position(|&x| x == c)
    }

    /// True when `self` is a prefix of `other`.
    pub fn is_prefix_of(&self, other: &Rol) -> bool {
        other.0.starts_with(&self.0)
    }

    /// The first college in the list that satisfies `feasible`.
    pub fn first_feasible(&self, mut feasible: impl FnMut(College) -> bool) -> Option<College> {
        self.0.iter().copied().find(|&c| feasible(c))
    }

    pub fn into_vec(self) -> Vec<College> {
        self.0
    }
}

impl std::fmt::Display for Rol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|c| c.to_string()).collect();
        write!(f, "[{}]", parts.join("-"))
    }
}

/// A vector of college cutoffs, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffVector(Vec<f64>);

impl CutoffVector {
    pub fn new(values: Vec<f64>) -> Result<Self, ModelError> {
        if let Some(c) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(ModelError::CutoffOutOfRange { college: c, value: values[c] });
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, c: College) -> f64 {
        self.0[c]
    }

    /// `max_c |self_c - other_c|`.
    pub fn sup_distance(&self, other: &CutoffVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Componentwise `self <= other`.
    pub fn le(&self, other: &CutoffVector) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// Componentwise mean of a non-empty collection.
    pub fn mean<'a>(vectors: impl IntoIterator<Item = &'a CutoffVector>) -> Option<CutoffVector> {
        let mut sum: Option<Vec<f64>> = None;
        let mut n = 0usize;
        for v in vectors {
            let s = sum.get_or_insert_with(|| vec![0.0; v.len()]);
            for (acc, x) in s.iter_mut().zip(&v.0) {
                *acc += x;
            }
            n += 1;
        }
        sum.map(|s| CutoffVector(s.into_iter().map(|x| (x / n as f64).clamp(0.0, 1.0)).collect()))
    }
}

/// A realised finite market. Applicant index is its identity; colleges rank
/// applicants by score, with ties going to the higher applicant index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Economy {
    applicants: Vec<ApplicantType>,
    capacities: Vec<usize>,
    label: String,
    /// Optional group flag per applicant (`true` = disadvantaged, `T = 1`).
    disadvantaged: Option<Vec<bool>>,
}

impl Economy {
    pub fn new(applicants: Vec<ApplicantType>, capacities: Vec<usize>, label: impl Into<String>) -> Result<Self, ModelError> {
        if applicants.is_empty() {
            return Err(ModelError::NoApplicants);
        }
        if let Some(c) = capacities.iter().position(|&q| q == 0) {
            return Err(ModelError::ZeroCapacity(c));
        }
        let n = capacities.len();
        if let Some((i, a)) = applicants.iter().enumerate().find(|(_, a)| a.n_colleges() != n) {
            return Err(ModelError::ApplicantWidth { applicant: i, found: a.n_colleges(), expected: n });
        }
        Ok(Self { applicants, capacities, label: label.into(), disadvantaged: None })
    }

    pub fn with_groups(mut self, disadvantaged: Vec<bool>) -> Result<Self, ModelError> {
        if disadvantaged.len() != self.applicants.len() {
            return Err(ModelError::FlagCount { found: disadvantaged.len(), expected: self.applicants.len() });
        }
        self.disadvantaged = Some(disadvantaged);
        Ok(self)
    }

    pub fn applicants(&self) -> &[ApplicantType] {
        &self.applicants
    }

    pub fn applicant(&self, i: usize) -> &ApplicantType {
        &self.applicants[i]
    }

    pub fn capacities(&self) -> &[usize] {
        &self.capacities
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn groups(&self) -> Option<&[bool]> {
        self.disadvantaged.as_deref()
    }

    pub fn n_applicants(&self) -> usize {
        self.applicants.len()
    }

    pub fn n_colleges(&self) -> usize {
        self.capacities.len()
    }

    pub fn score(&self, i: usize, c: College) -> f64 {
        self.applicants[i].scores[c]
    }

    /// Priority comparison at college `c`: `Greater` means `i` ranks above `j`.
    pub fn priority_cmp(&self, c: College, i: usize, j: usize) -> Ordering {
        self.score(i, c).total_cmp(&self.score(j, c)).then(i.cmp(&j))
    }

    /// Same economy with every applicant's utilities replaced.
    pub fn with_utilities(&self, utilities: &[Vec<f64>]) -> Result<Self, ModelError> {
        let applicants = self
            .applicants
            .iter()
            .zip(utilities)
            .map(|(a, u)| ApplicantType::new(u.clone(), a.scores.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { applicants, capacities: self.capacities.clone(), label: self.label.clone(), disadvantaged: self.disadvantaged.clone() })
    }

    /// Same economy with every applicant's scores replaced.
    pub fn with_scores(&self, scores: &[Vec<f64>], label: impl Into<String>) -> Result<Self, ModelError> {
        let applicants = self
            .applicants
            .iter()
            .zip(scores)
            .map(|(a, s)| ApplicantType::new(a.utilities.clone(), s.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { applicants, capacities: self.capacities.clone(), label: label.into(), disadvantaged: self.disadvantaged.clone() })
    }
}

/// The result of running a mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchOutcome {
    pub assignment: Vec<Option<College>>,
    pub cutoffs: CutoffVector,
    pub rounds: usize,
}

impl MatchOutcome {
    /// Builds an outcome whose cutoffs follow from the assignment: a full
    /// college's cutoff is its lowest admitted score, any other college's is 0.
    pub fn from_assignment(economy: &Economy, assignment: Vec<Option<College>>, rounds: usize) -> Self {
        let cutoffs = cutoffs_of(economy, &assignment);
        Self { assignment, cutoffs, rounds }
    }

    pub fn counts(&self, n_colleges: usize) -> Vec<usize> {
        let mut counts = vec![0; n_colleges];
        for c in self.assignment.iter().flatten() {
            counts[*c] += 1;
        }
        counts
    }
}

pub fn cutoffs_of(economy: &Economy, assignment: &[Option<College>]) -> CutoffVector {
    let n = economy.n_colleges();
    let mut count = vec![0usize; n];
    let mut lowest = vec![f64::INFINITY; n];
    for (i, a) in assignment.iter().enumerate() {
        if let Some(c) = *a {
            count[c] += 1;
            lowest[c] = lowest[c].min(economy.score(i, c));
        }
    }
    let values = (0..n).map(|c| if count[c] >= economy.capacities()[c] { lowest[c] } else { 0.0 }).collect();
    CutoffVector(values)
}

/// Colleges listed by descending utility, keeping only positive utilities.
/// Equal utilities go to the lower college index first.
pub fn truthful_rol(theta: &ApplicantType) -> Rol {
    let mut acceptable: Vec<College> = (0..theta.n_colleges()).filter(|&c| theta.utilities[c] > 0.0).collect();
    acceptable.sort_by(|&a, &b| theta.utilities[b].total_cmp(&theta.utilities[a]).then(a.cmp(&b)));
    Rol(acceptable)
}

/// `{c : scores[c] >= p[c]}`.
pub fn feasible_set(scores: &[f64], p: &CutoffVector) -> Vec<College> {
    (0..scores.len()).filter(|&c| scores[c] >= p.0[c]).collect()
}

/// Most preferred feasible college with positive utility, if any.
pub fn favorite_feasible(theta: &ApplicantType, p: &CutoffVector) -> Option<College> {
    let mut best: Option<College> = None;
    for c in 0..theta.n_colleges() {
        let u = theta.utilities[c];
        if u > 0.0 && theta.scores[c] >= p.0[c] && best.is_none_or(|b| u > theta.utilities[b]) {
            best = Some(c);
        }
    }
    best
}
