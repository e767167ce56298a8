//! Deferred acceptance, cutoff tatonnement and stability diagnostics.
//!
//! Colleges rank applicants by score at that college. Equal scores go to the
//! higher applicant index, so every college holds a strict order and results
//! are reproducible bit for bit.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{cutoffs_of, favorite_feasible, truthful_rol, College, CutoffVector, Economy, MatchOutcome, Rol};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("expected one ROL per applicant ({expected}), got {found}")]
    RolCount { expected: usize, found: usize },
    #[error("applicant {applicant} lists college {college}, economy has {n_colleges}")]
    CollegeOutOfRange { applicant: usize, college: College, n_colleges: usize },
    #[error("instance with {applicants} applicants and {colleges} colleges exceeds the enumeration limit ({max_applicants}x{max_colleges})")]
    TooLarge { applicants: usize, colleges: usize, max_applicants: usize, max_colleges: usize },
}

fn check(economy: &Economy, rols: &[Rol]) -> Result<(), EngineError> {
    if rols.len() != economy.n_applicants() {
        return Err(EngineError::RolCount { expected: economy.n_applicants(), found: rols.len() });
    }
    let n = economy.n_colleges();
    for (i, r) in rols.iter().enumerate() {
        if let Some(&c) = r.as_slice().iter().find(|&&c| c >= n) {
            return Err(EngineError::CollegeOutOfRange { applicant: i, college: c, n_colleges: n });
        }
    }
    Ok(())
}

/// Priority key at one college; larger is better.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Priority {
    score: f64,
    applicant: usize,
}

impl Eq for Priority {}

impl Ord for Priority {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score.total_cmp(&other.score).then(self.applicant.cmp(&other.applicant))
    }
}

impl PartialOrd for Priority {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Applicant-proposing deferred acceptance on submitted ROLs.
///
/// Every free applicant proposes to her next listed college in each round;
/// colleges keep their best `capacity` proposals so far.
pub fn run_da(economy: &Economy, rols: &[Rol]) -> Result<MatchOutcome, EngineError> {
    check(economy, rols)?;
    let caps = economy.capacities();
    let mut next = vec![0usize; rols.len()];
    let mut held: Vec<BinaryHeap<Reverse<Priority>>> = caps.iter().map(|&q| BinaryHeap::with_capacity(q + 1)).collect();
    let mut free: Vec<usize> = (0..rols.len()).filter(|&i| !rols[i].is_empty()).collect();
    let mut rejected = Vec::new();
    let mut rounds = 0;
    while !free.is_empty() {
        rounds += 1;
        for &i in &free {
            let c = rols[i].as_slice()[next[i]];
            next[i] += 1;
            held[c].push(Reverse(Priority { score: economy.score(i, c), applicant: i }));
            if held[c].len() > caps[c] {
                let Reverse(out) = held[c].pop().expect("heap over capacity is non-empty");
                rejected.push(out.applicant);
            }
        }
        free.clear();
        free.extend(rejected.drain(..).filter(|&j| next[j] < rols[j].len()));
    }
    let mut assignment = vec![None; rols.len()];
    for (c, heap) in held.iter().enumerate() {
        for Reverse(p) in heap {
            assignment[p.applicant] = Some(c);
        }
    }
    Ok(MatchOutcome::from_assignment(economy, assignment, rounds.max(1)))
}

/// College-proposing deferred acceptance on submitted ROLs.
///
/// Each college offers seats down its priority list among applicants who
/// listed it; an applicant holds the offer she ranks highest.
pub fn run_cpda(economy: &Economy, rols: &[Rol]) -> Result<MatchOutcome, EngineError> {
    check(economy, rols)?;
    let n = economy.n_colleges();
    let caps = economy.capacities();
    let mut lists: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, r) in rols.iter().enumerate() {
        for &c in r.as_slice() {
            lists[c].push(i);
        }
    }
    for (c, list) in lists.iter_mut().enumerate() {
        list.sort_by(|&a, &b| economy.priority_cmp(c, b, a));
    }
    let mut ptr = vec![0usize; n];
    let mut held_count = vec![0usize; n];
    let mut holding: Vec<Option<College>> = vec![None; rols.len()];
    let mut offers: Vec<(College, usize)> = Vec::new();
    let mut rounds = 0;
    loop {
        offers.clear();
        for c in 0..n {
            let open = caps[c] - held_count[c];
            let end = (ptr[c] + open).min(lists[c].len());
            offers.extend(lists[c][ptr[c]..end].iter().map(|&i| (c, i)));
            ptr[c] = end;
        }
        if offers.is_empty() {
            break;
        }
        rounds += 1;
        for &(c, i) in &offers {
            let better = match holding[i] {
                None => true,
                Some(h) => rols[i].position(c) < rols[i].position(h),
            };
            if better {
                if let Some(h) = holding[i] {
                    held_count[h] -= 1;
                }
                holding[i] = Some(c);
                held_count[c] += 1;
            }
        }
    }
    Ok(MatchOutcome::from_assignment(economy, holding, rounds.max(1)))
}

/// Share of applicants whose first feasible listed college is `c`.
pub fn demand(economy: &Economy, rols: &[Rol], p: &CutoffVector) -> Vec<f64> {
    let mut counts = vec![0usize; economy.n_colleges()];
    for (i, r) in rols.iter().enumerate() {
        if let Some(c) = r.first_feasible(|c| economy.score(i, c) >= p.get(c)) {
            counts[c] += 1;
        }
    }
    let k = economy.n_applicants() as f64;
    counts.into_iter().map(|n| n as f64 / k).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Direction {
    ApplicantProposing,
    CollegeProposing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TatonnementTrace {
    pub direction: Direction,
    pub iterates: Vec<CutoffVector>,
    /// First `m` with `iterates[m] == iterates[m - 1]`.
    pub converged_at: usize,
}

impl TatonnementTrace {
    pub fn fixed_point(&self) -> &CutoffVector {
        self.iterates.last().expect("trace always holds the starting point")
    }
}

/// One tatonnement step: each college's new cutoff is the highest `p_c` at
/// which its demand, holding the other cutoffs fixed, still fills its seats.
///
/// With finite data the demand for `c` is a right-continuous step function of
/// `p_c` that jumps at the scores of the applicants who would reach `c` on
/// their list. The supremum is therefore the `capacity`-th highest such score,
/// or 0 when fewer applicants can reach `c`. This is computed exactly.
pub fn tatonnement_step(economy: &Economy, rols: &[Rol], p: &CutoffVector) -> CutoffVector {
    let n = economy.n_colleges();
    let mut reach: Vec<Vec<f64>> = vec![Vec::new(); n];
    for (i, r) in rols.iter().enumerate() {
        for &c in r.as_slice() {
            let s = economy.score(i, c);
            reach[c].push(s);
            if s >= p.get(c) {
                break;
            }
        }
    }
    let values = reach
        .into_iter()
        .zip(economy.capacities())
        .map(|(mut scores, &cap)| {
            if scores.len() < cap {
                0.0
            } else {
                let idx = scores.len() - cap;
                *scores.select_nth_unstable_by(idx, f64::total_cmp).1
            }
        })
        .collect();
    CutoffVector::new(values).expect("scores lie in [0, 1]")
}

/// Iterates the cutoff map from the bottom (applicant-proposing, starting at 0)
/// or the top (college-proposing, starting at 1) until it stops moving.
pub fn tatonnement(economy: &Economy, rols: &[Rol], direction: Direction) -> Result<TatonnementTrace, EngineError> {
    check(economy, rols)?;
    let n = economy.n_colleges();
    let start = match direction {
        Direction::ApplicantProposing => CutoffVector::zeros(n),
        Direction::CollegeProposing => CutoffVector::ones(n),
    };
    let limit = n * economy.n_applicants() + 2;
    let mut iterates = vec![start];
    loop {
        let last = iterates.last().expect("non-empty");
        let next = tatonnement_step(economy, rols, last);
        let done = &next == last;
        iterates.push(next);
        if done || iterates.len() > limit {
            break;
        }
    }
    let converged_at = iterates.len() - 1;
    Ok(TatonnementTrace { direction, iterates, converged_at })
}

/// The lowest-priority admitted applicant at each college, if it is full.
fn marginal_admits(economy: &Economy, outcome: &MatchOutcome) -> Vec<Option<usize>> {
    let n = economy.n_colleges();
    let counts = outcome.counts(n);
    let mut worst: Vec<Option<usize>> = vec![None; n];
    for (i, a) in outcome.assignment.iter().enumerate() {
        if let Some(c) = *a {
            if worst[c].is_none_or(|w| economy.priority_cmp(c, i, w) == Ordering::Less) {
                worst[c] = Some(i);
            }
        }
    }
    (0..n).map(|c| if counts[c] >= economy.capacities()[c] { worst[c] } else { None }).collect()
}

fn blocking_with(economy: &Economy, outcome: &MatchOutcome, prefers: impl Fn(usize, College, Option<College>) -> bool) -> Vec<(usize, College)> {
    let marginal = marginal_admits(economy, outcome);
    let mut pairs = Vec::new();
    for (i, &mine) in outcome.assignment.iter().enumerate() {
        for (c, m) in marginal.iter().enumerate() {
            if Some(c) == mine || !prefers(i, c, mine) {
                continue;
            }
            let admissible = m.is_none_or(|w| economy.priority_cmp(c, i, w) == Ordering::Greater);
            if admissible {
                pairs.push((i, c));
            }
        }
    }
    pairs
}

/// Pairs `(i, c)` where `i` strictly prefers `c` to her match under true
/// utilities and `c` has a free seat or admits someone of lower priority.
pub fn blocking_pairs(outcome: &MatchOutcome, economy: &Economy) -> Vec<(usize, College)> {
    blocking_with(economy, outcome, |i, c, mine| {
        let t = economy.applicant(i);
        t.utilities()[c] > t.utility_of(mine)
    })
}

/// Blocking pairs when each submitted ROL is read as the applicant's
/// preferences; unlisted colleges are unacceptable.
pub fn blocking_pairs_reported(outcome: &MatchOutcome, economy: &Economy, rols: &[Rol]) -> Vec<(usize, College)> {
    blocking_with(economy, outcome, |i, c, mine| match (rols[i].position(c), mine.and_then(|m| rols[i].position(m))) {
        (None, _) => false,
        (Some(_), None) => true,
        (Some(a), Some(b)) => a < b,
    })
}

/// Share of applicants matched with their favourite feasible college under
/// the outcome's own cutoffs.
pub fn stability_fraction(outcome: &MatchOutcome, economy: &Economy) -> f64 {
    let hits = outcome
        .assignment
        .iter()
        .enumerate()
        .filter(|&(i, &a)| favorite_feasible(economy.applicant(i), &outcome.cutoffs) == a)
        .count();
    hits as f64 / economy.n_applicants() as f64
}

pub const BRUTE_FORCE_MAX_APPLICANTS: usize = 8;
pub const BRUTE_FORCE_MAX_COLLEGES: usize = 4;

/// Every stable matching of a small economy under true preferences.
#[derive(Debug, Clone, PartialEq)]
pub struct StableSet {
    pub matchings: Vec<Vec<Option<College>>>,
    /// Index of the matching every applicant weakly prefers.
    pub applicant_optimal: Option<usize>,
    /// Index of the matching every applicant weakly disprefers.
    pub college_optimal: Option<usize>,
}

/// Enumerates all individually rational matchings and keeps those without a
/// blocking pair. Preferences are the truthful ROLs.
pub fn brute_force_stable(economy: &Economy) -> Result<StableSet, EngineError> {
    let k = economy.n_applicants();
    let n = economy.n_colleges();
    if k > BRUTE_FORCE_MAX_APPLICANTS || n > BRUTE_FORCE_MAX_COLLEGES {
        return Err(EngineError::TooLarge {
            applicants: k,
            colleges: n,
            max_applicants: BRUTE_FORCE_MAX_APPLICANTS,
            max_colleges: BRUTE_FORCE_MAX_COLLEGES,
        });
    }
    let prefs: Vec<Rol> = economy.applicants().iter().map(truthful_rol).collect();
    // Rank of an option: position in the truthful ROL, unmatched last.
    let rank = |i: usize, a: Option<College>| a.and_then(|c| prefs[i].position(c)).unwrap_or(n);

    let mut matchings = Vec::new();
    let mut current = vec![None; k];
    let mut load = vec![0usize; n];
    enumerate(economy, &prefs, 0, &mut current, &mut load, &mut matchings);

    let optimal = |better: &dyn Fn(usize, usize) -> bool| {
        (0..matchings.len()).find(|&a| {
            (0..matchings.len()).all(|b| (0..k).all(|i| better(rank(i, matchings[a][i]), rank(i, matchings[b][i]))))
        })
    };
    let applicant_optimal = optimal(&|x, y| x <= y);
    let college_optimal = optimal(&|x, y| x >= y);
    Ok(StableSet { matchings, applicant_optimal, college_optimal })
}

fn enumerate(
    economy: &Economy,
    prefs: &[Rol],
    i: usize,
    current: &mut Vec<Option<College>>,
    load: &mut Vec<usize>,
    out: &mut Vec<Vec<Option<College>>>,
) {
    if i == current.len() {
        let outcome = MatchOutcome { assignment: current.clone(), cutoffs: cutoffs_of(economy, current), rounds: 1 };
        if blocking_pairs(&outcome, economy).is_empty() {
            out.push(current.clone());
        }
        return;
    }
    current[i] = None;
    enumerate(economy, prefs, i + 1, current, load, out);
    for &c in prefs[i].as_slice() {
        if load[c] < economy.capacities()[c] {
            load[c] += 1;
            current[i] = Some(c);
            enumerate(economy, prefs, i + 1, current, load, out);
            load[c] -= 1;
        }
    }
    current[i] = None;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ApplicantType;
    use proptest::prelude::*;

    fn theta(u: &[f64], s: &[f64]) -> ApplicantType {
        ApplicantType::new(u.to_vec(), s.to_vec()).unwrap()
    }

    /// Colleges a, b, c3 with unit capacity.
    fn roth() -> Economy {
        Economy::new(
            vec![
                theta(&[2.0, 3.0, 1.0], &[1.0, 0.0, 0.3]),
                theta(&[3.0, 2.0, 1.0], &[0.0, 1.0, 0.6]),
                theta(&[3.0, 2.0, 1.0], &[0.5, 0.5, 0.9]),
            ],
            vec![1, 1, 1],
            "roth",
        )
        .unwrap()
    }

    fn rols(v: &[&[usize]]) -> Vec<Rol> {
        v.iter().map(|r| Rol::new(r.to_vec(), 3).unwrap()).collect()
    }

    #[test]
    fn roth_baseline_is_unstable() {
        let e = roth();
        let out = run_da(&e, &rols(&[&[1, 0, 2], &[0, 1, 2], &[2]])).unwrap();
        assert_eq!(out.assignment, vec![Some(1), Some(0), Some(2)]);
        assert_eq!(&out.cutoffs.as_slice()[..2], &[0.0, 0.0]);
        let bp = blocking_pairs(&out, &e);
        assert!(bp.contains(&(2, 0)) && bp.contains(&(2, 1)));
    }

    #[test]
    fn roth_deviation_raises_cutoffs() {
        let e = roth();
        let out = run_da(&e, &rols(&[&[1, 0, 2], &[0, 1, 2], &[0, 1, 2]])).unwrap();
        assert_eq!(out.assignment, vec![Some(0), Some(1), Some(2)]);
        assert_eq!(&out.cutoffs.as_slice()[..2], &[1.0, 1.0]);
        assert!(blocking_pairs(&out, &e).is_empty());
        let set = brute_force_stable(&e).unwrap();
        assert_eq!(set.matchings, vec![vec![Some(0), Some(1), Some(2)]]);
    }

    #[test]
    fn empty_rols_leave_everyone_unmatched() {
        let e = roth();
        let empty = vec![Rol::empty(); 3];
        for out in [run_da(&e, &empty).unwrap(), run_cpda(&e, &empty).unwrap()] {
            assert_eq!(out.assignment, vec![None; 3]);
            assert_eq!(out.cutoffs.as_slice(), &[0.0; 3]);
            assert_eq!(out.rounds, 1);
        }
        let t = tatonnement(&e, &empty, Direction::ApplicantProposing).unwrap();
        assert_eq!(t.converged_at, 1);
        assert_eq!(t.fixed_point().as_slice(), &[0.0; 3]);
    }

    #[test]
    fn roth_tatonnement_matches_da() {
        let e = roth();
        let r = rols(&[&[1, 0, 2], &[0, 1, 2], &[2]]);
        let t = tatonnement(&e, &r, Direction::ApplicantProposing).unwrap();
        assert_eq!(t.fixed_point(), &run_da(&e, &r).unwrap().cutoffs);
        let q = run_cpda(&e, &r).unwrap();
        assert!(run_da(&e, &r).unwrap().cutoffs.le(&q.cutoffs));
    }

    #[test]
    fn rejects_bad_inputs() {
        let e = roth();
        assert!(matches!(run_da(&e, &[Rol::empty()]), Err(EngineError::RolCount { .. })));
        let bad = vec![Rol::empty(), Rol::empty(), Rol::new(vec![5], 6).unwrap()];
        assert!(matches!(run_da(&e, &bad), Err(EngineError::CollegeOutOfRange { applicant: 2, .. })));
        let big = Economy::new(vec![theta(&[1.0], &[0.5]); 9], vec![1], "big").unwrap();
        assert!(matches!(brute_force_stable(&big), Err(EngineError::TooLarge { .. })));
    }

    #[test]
    fn singleton_match() {
        let e = Economy::new(vec![theta(&[1.0], &[0.2])], vec![1], "one").unwrap();
        let set = brute_force_stable(&e).unwrap();
        assert_eq!(set.matchings, vec![vec![Some(0)]]);
    }

    #[test]
    fn empty_list_when_favorite_exists_costs_one_applicant() {
        let e = Economy::new(
            vec![theta(&[1.0, 2.0], &[0.1, 0.2]), theta(&[2.0, 1.0], &[0.3, 0.4]), theta(&[1.0, 1.5], &[0.5, 0.6])],
            vec![2, 2],
            "x",
        )
        .unwrap();
        let mut r: Vec<Rol> = e.applicants().iter().map(truthful_rol).collect();
        assert_eq!(stability_fraction(&run_da(&e, &r).unwrap(), &e), 1.0);
        r[0] = Rol::empty();
        let f = stability_fraction(&run_da(&e, &r).unwrap(), &e);
        assert!((f - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn demand_at_extremes() {
        let e = roth();
        let r = rols(&[&[1, 0, 2], &[0, 1, 2], &[0, 1, 2]]);
        let d = demand(&e, &r, &CutoffVector::zeros(3));
        assert_eq!(d, vec![2.0 / 3.0, 1.0 / 3.0, 0.0]);
        let e2 = Economy::new(vec![theta(&[1.0, 1.0], &[0.5, 0.9]); 2], vec![1, 1], "x").unwrap();
        let r2 = vec![Rol::new(vec![0, 1], 2).unwrap(); 2];
        assert_eq!(demand(&e2, &r2, &CutoffVector::ones(2)), vec![0.0, 0.0]);
    }

    /// Greedy pick-in-priority-order oracle for common scores.
    fn serial_dictatorship(economy: &Economy, rols: &[Rol]) -> Vec<Option<College>> {
        let mut order: Vec<usize> = (0..economy.n_applicants()).collect();
        order.sort_by(|&a, &b| economy.priority_cmp(0, b, a));
        let mut left = economy.capacities().to_vec();
        let mut out = vec![None; order.len()];
        for i in order {
            if let Some(c) = rols[i].first_feasible(|c| left[c] > 0) {
                left[c] -= 1;
                out[i] = Some(c);
            }
        }
        out
    }

    /// Exhaustive `O(kC)` scan for blocking pairs.
    fn scan_blocking(economy: &Economy, out: &MatchOutcome) -> Vec<(usize, College)> {
        let mut pairs = Vec::new();
        for i in 0..economy.n_applicants() {
            let t = economy.applicant(i);
            for c in 0..economy.n_colleges() {
                if t.utilities()[c] <= t.utility_of(out.assignment[i]) || out.assignment[i] == Some(c) {
                    continue;
                }
                let members: Vec<usize> = (0..economy.n_applicants()).filter(|&j| out.assignment[j] == Some(c)).collect();
                let vacancy = members.len() < economy.capacities()[c];
                let displaces = members.iter().any(|&j| economy.priority_cmp(c, i, j) == Ordering::Greater);
                if vacancy || displaces {
                    pairs.push((i, c));
                }
            }
        }
        pairs
    }

    fn arb_economy(max_k: usize, max_c: usize) -> impl Strategy<Value = Economy> {
        (1..=max_k, 1..=max_c).prop_flat_map(|(k, n)| {
            (
                prop::collection::vec((prop::collection::vec(-0.5f64..1.0, n), prop::collection::vec(0.0f64..1.0, n)), k),
                prop::collection::vec(1usize..=3, n),
            )
                .prop_map(|(types, caps)| {
                    let apps = types.into_iter().map(|(u, s)| ApplicantType::new(u, s).unwrap()).collect();
                    Economy::new(apps, caps, "prop").unwrap()
                })
        })
    }

    fn truthful(e: &Economy) -> Vec<Rol> {
        e.applicants().iter().map(truthful_rol).collect()
    }

    proptest! {
        #[test]
        fn da_matches_brute_force(e in arb_economy(6, 3)) {
            let r = truthful(&e);
            let set = brute_force_stable(&e).unwrap();
            let da = run_da(&e, &r).unwrap();
            let cp = run_cpda(&e, &r).unwrap();
            prop_assert!(set.matchings.contains(&da.assignment));
            prop_assert_eq!(&set.matchings[set.applicant_optimal.unwrap()], &da.assignment);
            prop_assert_eq!(&set.matchings[set.college_optimal.unwrap()], &cp.assignment);
        }

        #[test]
        fn blocking_pairs_agree_with_scan(e in arb_economy(7, 4), seed in 0u64..1000) {
            let mut r = truthful(&e);
            // Perturb a few lists so outcomes are not always stable.
            for (i, rol) in r.iter_mut().enumerate() {
                if (seed >> (i % 8)) & 1 == 1 && rol.len() > 1 {
                    let mut v = rol.clone().into_vec();
                    v.reverse();
                    *rol = Rol::new(v, e.n_colleges()).unwrap();
                }
            }
            let out = run_da(&e, &r).unwrap();
            prop_assert_eq!(blocking_pairs(&out, &e), scan_blocking(&e, &out));
            prop_assert!(blocking_pairs_reported(&out, &e, &r).is_empty());
        }

        #[test]
        fn tatonnement_reaches_engine_cutoffs(e in arb_economy(8, 4)) {
            let r = truthful(&e);
            let da = run_da(&e, &r).unwrap();
            let cp = run_cpda(&e, &r).unwrap();
            let up = tatonnement(&e, &r, Direction::ApplicantProposing).unwrap();
            let down = tatonnement(&e, &r, Direction::CollegeProposing).unwrap();
            prop_assert_eq!(up.fixed_point(), &da.cutoffs);
            prop_assert_eq!(down.fixed_point(), &cp.cutoffs);
            prop_assert!(da.cutoffs.le(&cp.cutoffs));
            prop_assert!(up.converged_at <= e.n_colleges() * e.n_applicants() + 1);
            for w in up.iterates.windows(2) { prop_assert!(w[0].le(&w[1])); }
            for w in down.iterates.windows(2) { prop_assert!(w[1].le(&w[0])); }
        }

        #[test]
        fn demand_matches_scan(e in arb_economy(8, 4), p in prop::collection::vec(0.0f64..=1.0, 4)) {
            let r = truthful(&e);
            let p = CutoffVector::new(p[..e.n_colleges()].to_vec()).unwrap();
            let d = demand(&e, &r, &p);
            for c in 0..e.n_colleges() {
                let n = (0..e.n_applicants())
                    .filter(|&i| r[i].as_slice().iter().copied().find(|&x| e.score(i, x) >= p.get(x)) == Some(c))
                    .count();
                prop_assert_eq!(d[c], n as f64 / e.n_applicants() as f64);
            }
            prop_assert!(d.iter().sum::<f64>() <= 1.0 + 1e-12);
        }

        #[test]
        fn serial_dictatorship_is_da(e in arb_economy(8, 4), common in prop::collection::vec(0.0f64..1.0, 8)) {
            let n = e.n_colleges();
            let scores: Vec<Vec<f64>> = (0..e.n_applicants()).map(|i| vec![common[i]; n]).collect();
            let e = e.with_scores(&scores, "sd").unwrap();
            let r = truthful(&e);
            prop_assert_eq!(run_da(&e, &r).unwrap().assignment, serial_dictatorship(&e, &r));
        }
    }
}
