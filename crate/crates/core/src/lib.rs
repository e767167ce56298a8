//! Matching-market laboratory built around score-based deferred acceptance.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: applicant types, rank-order lists, economies, cutoffs and outcomes.
//! - [`engine`]: applicant- and college-proposing DA, demand, cutoff tatonnement,
//!   stability diagnostics and a brute-force stable-matching oracle.
//! - [`strategy`]: truth-telling, stable-response strategies, the robust-equilibrium
//!   profile, mistake processes and the replica/cycling constructions.
//! - [`economy`]: samplers for the full-support and geography economies.
//! - [`convergence`]: unilateral-deviation sweeps and sup-norm cutoff curves.
//! - [`estimation`]: rank-ordered logit and feasible-set conditional logit.
//! - [`counterfactual`]: the priority reform and the prediction approaches.
//! - [`montecarlo`]: the end-to-end simulation design tying the above together.
//! - [`io`]: CSV/JSON persistence for every result type.

pub mod convergence;
pub mod counterfactual;
pub mod economy;
pub mod engine;
pub mod estimation;
pub mod io;
pub mod model;
pub mod montecarlo;
pub mod rng;
pub mod strategy;

pub use model::{ApplicantType, College, CutoffVector, Economy, MatchOutcome, ModelError, Rol};
