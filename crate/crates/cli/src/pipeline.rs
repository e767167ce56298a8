//! The five pipelines behind the subcommands.
//!
//! Computation fans out over rayon; all files are written from the calling
//! thread once results are in.

use matchlab::convergence::{convergence_curve, deviation_sweep, draw_instance, estimate_reference, sweep_instance, ConvergenceError};
use matchlab::counterfactual::CounterfactualReport;
use matchlab::economy::Family;
use matchlab::engine::{run_da, EngineError};
use matchlab::estimation::Objective;
use matchlab::io::{
    fmt_f64, variant_name, write_counterfactual_csv, write_cutoff_distribution_csv, write_economy_csv, write_json, write_outcome_csv,
    write_rols_csv, write_table, IoError, GROUPS,
};
use matchlab::montecarlo::{dgp_metrics, run_all, sample_artifacts, summarize, DgpMetrics, McConfig, McDesign, McError, MeanSd, SampleResult};
use matchlab::strategy::StrategyKind;
use matchlab::{CutoffVector, Economy, MatchOutcome, Rol};
use rayon::prelude::*;
use serde_json::json;
use thiserror::Error;

use crate::config::{Command, RunConfig};
use crate::output::Outputs;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    MonteCarlo(#[from] McError),
    #[error(transparent)]
    Convergence(#[from] ConvergenceError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

pub fn run(cfg: &RunConfig, out: &mut Outputs) -> Result<(), PipelineError> {
    match cfg.command {
        Command::Simulate => simulate(cfg, out),
        Command::Estimate => estimate(cfg, out),
        Command::Counterfactual => counterfactual(cfg, out),
        Command::Converge => converge(cfg, out),
        Command::Replicate => replicate(cfg, out),
    }
}

fn mc_config(cfg: &RunConfig, dgps: Vec<StrategyKind>, estimate: bool, counterfactual: bool) -> McConfig {
    McConfig {
        k: cfg.k(),
        n_samples: cfg.n_samples,
        n_cutoff_samples: cfg.n_cutoff_samples,
        seed: cfg.seed,
        params: cfg.strategy.params.clone(),
        dgps,
        estimate,
        counterfactual,
        truth_distribution: cfg.truth_distribution,
        ..McConfig::default()
    }
}

fn metric_row(sample: usize, m: &DgpMetrics) -> Vec<String> {
    let mut row = vec![sample.to_string(), fmt_f64(m.mean_length), fmt_f64(m.wtt_share), fmt_f64(m.stability)];
    row.extend(m.omit_share.iter().map(|x| fmt_f64(*x)));
    row
}

const METRIC_HEADER: [&str; 7] = ["sample", "mean_length", "wtt_share", "stability", "omit_share_all", "omit_share_t1", "omit_share_t0"];

fn write_sample(out: &mut Outputs, s: usize, economy: &Economy, rols: &[Rol], outcome: &MatchOutcome) -> Result<(), IoError> {
    write_economy_csv(&out.file(format!("economy_{s}.csv")), economy)?;
    write_rols_csv(&out.file(format!("rols_{s}.csv")), rols)?;
    write_outcome_csv(&out.file(format!("outcome_{s}.csv")), outcome)
}

fn simulate(cfg: &RunConfig, out: &mut Outputs) -> Result<(), PipelineError> {
    let kind = cfg.strategy.kind;
    let mut metrics = Vec::new();
    if cfg.economy.family == Family::McGeography {
        let design = McDesign::build(mc_config(cfg, vec![kind], false, false))?;
        if kind != StrategyKind::Tt {
            write_cutoff_distribution_csv(&out.file("cutoff_distribution.csv"), &design.dist)?;
        }
        let samples = (0..cfg.n_samples).into_par_iter().map(|s| sample_artifacts(&design, s)).collect::<Result<Vec<_>, _>>()?;
        for (s, a) in samples.iter().enumerate() {
            let (_, rols, outcome) = &a.reports[0];
            write_sample(out, s, &a.market.economy, rols, outcome)?;
            metrics.push(metric_row(s, &dgp_metrics(&a.market.economy, rols, outcome)));
        }
    } else {
        let spec = cfg.spec();
        let k = cfg.k();
        let p_bar = if kind == StrategyKind::Theorem1 {
            estimate_reference(&spec, k, cfg.reference_seeds, cfg.seed)?
        } else {
            CutoffVector::zeros(spec.n_colleges)
        };
        let samples = (0..cfg.n_samples)
            .into_par_iter()
            .map(|s| {
                let (economy, rols) = draw_instance(&spec, &cfg.strategy, k, &p_bar, s as u64)?;
                let outcome = run_da(&economy, &rols)?;
                Ok((economy, rols, outcome))
            })
            .collect::<Result<Vec<_>, PipelineError>>()?;
        for (s, (economy, rols, outcome)) in samples.iter().enumerate() {
            write_sample(out, s, economy, rols, outcome)?;
            metrics.push(metric_row(s, &dgp_metrics(economy, rols, outcome)));
        }
    }
    write_table(&out.file("metrics.csv"), &METRIC_HEADER, metrics)?;
    Ok(())
}

fn objective_index(o: Objective) -> usize {
    match o {
        Objective::Wtt => 0,
        Objective::Stability => 1,
    }
}

fn estimate(cfg: &RunConfig, out: &mut Outputs) -> Result<(), PipelineError> {
    let design = McDesign::build(mc_config(cfg, vec![cfg.strategy.kind], true, false))?;
    let results = run_all(&design)?;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for r in &results {
        let d = &r.dgps[0];
        let fits = d.estimates.as_ref().expect("estimation enabled");
        for &o in &cfg.assumptions {
            let fit = &fits[objective_index(o)];
            let se = fit.std_errors();
            for (j, b) in fit.beta_hat.iter().enumerate() {
                let se = se.as_ref().map_or(String::new(), |s| fmt_f64(s[j]));
                rows.push(vec![r.sample.to_string(), variant_name(&d.dgp), variant_name(&o), j.to_string(), fmt_f64(*b), se, fit.converged.to_string()]);
            }
            records.push(json!({ "sample": r.sample, "dgp": d.dgp, "result": fit }));
        }
    }
    write_table(&out.file("estimates.csv"), &["sample", "dgp", "objective", "param", "estimate", "std_error", "converged"], rows)?;
    write_json(&out.file("estimates.json"), &records)?;
    let summary: Vec<_> = cfg
        .assumptions
        .iter()
        .map(|&o| {
            let beta: Vec<MeanSd> = (0..4)
                .map(|j| MeanSd::of(results.iter().map(|r| r.dgps[0].estimates.as_ref().expect("estimation enabled")[objective_index(o)].beta_hat[j])))
                .collect();
            json!({ "dgp": cfg.strategy.kind, "objective": o, "beta": beta })
        })
        .collect();
    write_json(&out.file("summary.json"), &summary)?;
    Ok(())
}

fn reports(results: &[SampleResult]) -> Vec<CounterfactualReport> {
    results.iter().flat_map(|r| r.dgps.iter().filter_map(|d| d.counterfactual.clone())).collect()
}

/// Predicted minus true cutoff per college, sample and approach.
fn cutoff_errors(results: &[SampleResult]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for rep in reports(results) {
        let truth = rep.get(matchlab::counterfactual::Approach::Truth).expect("truth approach is always evaluated").predicted_cutoffs.clone();
        for a in &rep.approaches {
            for (c, (p, t)) in a.predicted_cutoffs.as_slice().iter().zip(truth.as_slice()).enumerate() {
                rows.push(vec![variant_name(&rep.dgp), variant_name(&a.approach), c.to_string(), rep.sample.to_string(), fmt_f64(p - t)]);
            }
        }
    }
    rows
}

const CUTOFF_ERROR_HEADER: [&str; 5] = ["dgp", "approach", "college", "sample", "error"];

fn counterfactual(cfg: &RunConfig, out: &mut Outputs) -> Result<(), PipelineError> {
    let design = McDesign::build(mc_config(cfg, vec![cfg.strategy.kind], true, true))?;
    let results = run_all(&design)?;
    write_counterfactual_csv(&out.file("counterfactual.csv"), &reports(&results))?;
    write_table(&out.file("cutoff_errors.csv"), &CUTOFF_ERROR_HEADER, cutoff_errors(&results))?;
    write_json(&out.file("summary.json"), &summarize(&results))?;
    Ok(())
}

fn ms(m: MeanSd) -> [String; 2] {
    [fmt_f64(m.mean), fmt_f64(m.sd)]
}

/// Probability that a disadvantaged applicant equidistant from colleges 10
/// and 11 (1-based) prefers college 11, under logit utilities with `beta`.
fn reversal_probability(beta: &[f64], a: &[f64], small: &[f64]) -> f64 {
    let diff = beta[0] + beta[2] * (a[10] - a[9]) + beta[3] * (small[10] - small[9]);
    1.0 / (1.0 + (-diff).exp())
}

fn replicate(cfg: &RunConfig, out: &mut Outputs) -> Result<(), PipelineError> {
    let dgps = vec![StrategyKind::Tt, StrategyKind::Pim, StrategyKind::Prm];
    let design = McDesign::build(mc_config(cfg, dgps, true, true))?;
    let results = run_all(&design)?;
    let summary = summarize(&results);
    let objectives = [Objective::Wtt, Objective::Stability];

    let mut t1 = Vec::new();
    let mut d2 = Vec::new();
    let mut d1 = Vec::new();
    for d in &summary {
        let dgp = variant_name(&d.dgp);
        let metrics = [
            ("mean_length", d.mean_length),
            ("wtt_share", d.wtt_share),
            ("stability", d.stability),
            ("omit_share_all", d.omit_share[0]),
            ("omit_share_t1", d.omit_share[1]),
            ("omit_share_t0", d.omit_share[2]),
        ];
        for (name, m) in metrics {
            t1.push([vec![dgp.clone(), name.to_string()], ms(m).to_vec()].concat());
        }
        if let Some(beta) = &d.beta {
            for (o, obj) in objectives.iter().enumerate() {
                for (j, m) in beta[o].iter().enumerate() {
                    d2.push([vec![dgp.clone(), variant_name(obj), j.to_string()], ms(*m).to_vec()].concat());
                }
            }
        }
        for a in &d.approaches {
            for (g, group) in GROUPS.iter().enumerate() {
                for (name, m) in [("better", a.better[g]), ("worse", a.worse[g]), ("indifferent", a.indifferent[g]), ("misprediction", a.misprediction[g])] {
                    d1.push([vec![dgp.clone(), variant_name(&a.approach), group.to_string(), name.to_string()], ms(m).to_vec()].concat());
                }
            }
        }
    }
    write_table(&out.file("report_stats.csv"), &["dgp", "metric", "mean", "sd"], t1)?;
    write_table(&out.file("estimate_stats.csv"), &["dgp", "objective", "param", "mean", "sd"], d2)?;
    write_table(&out.file("counterfactual_stats.csv"), &["dgp", "approach", "group", "metric", "mean", "sd"], d1)?;

    let market = design.market(0)?;
    let mut beta1_rows = Vec::new();
    let mut reversal_rows = Vec::new();
    for r in &results {
        for d in &r.dgps {
            let fits = d.estimates.as_ref().expect("estimation enabled");
            for (o, obj) in objectives.iter().enumerate() {
                let key = [variant_name(&d.dgp), variant_name(obj), r.sample.to_string()];
                beta1_rows.push([key.to_vec(), vec![fmt_f64(fits[o].beta_hat[0])]].concat());
                reversal_rows.push([key.to_vec(), vec![fmt_f64(reversal_probability(&fits[o].beta_hat, &market.a, &market.small))]].concat());
            }
        }
    }
    write_table(&out.file("beta1_by_sample.csv"), &["dgp", "objective", "sample", "beta1"], beta1_rows)?;
    write_table(&out.file("reversal_probability.csv"), &["dgp", "objective", "sample", "probability"], reversal_rows)?;
    write_table(&out.file("cutoff_errors.csv"), &CUTOFF_ERROR_HEADER, cutoff_errors(&results))?;
    write_counterfactual_csv(&out.file("counterfactual.csv"), &reports(&results))?;
    write_json(&out.file("summary.json"), &summary)?;
    Ok(())
}

fn converge(cfg: &RunConfig, out: &mut Outputs) -> Result<(), PipelineError> {
    let spec = cfg.spec();
    let grid = cfg.k_grid();
    let seeds: Vec<u64> = (0..cfg.n_samples as u64).collect();
    let zeros = CutoffVector::zeros(spec.n_colleges);
    match spec.family {
        Family::Example1 => {
            let mut rows = Vec::new();
            let mut summary = Vec::new();
            for &k in &grid {
                let sweeps = seeds
                    .par_iter()
                    .map(|&s| {
                        let (economy, rols) = draw_instance(&spec, &cfg.strategy, k, &zeros, s)?;
                        // The first theta-3 replica switches to truth-telling.
                        sweep_instance(&economy, &rols, &[0, 2 * k + 1], &zeros)
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let mut jumps = 0;
                for (s, r) in seeds.iter().zip(&sweeps) {
                    let (before, after) = (&r.baseline_cutoffs, &r.deviation_cutoffs[1]);
                    if (0..2).all(|c| before.get(c) < 1.0 / 3.0 && after.get(c) > 2.0 / 3.0) {
                        jumps += 1;
                    }
                    for c in 0..spec.n_colleges {
                        rows.push(vec![k.to_string(), s.to_string(), c.to_string(), fmt_f64(before.get(c)), fmt_f64(after.get(c))]);
                    }
                }
                summary.push(json!({ "k": k, "seeds": seeds.len(), "jump_share": jumps as f64 / seeds.len() as f64 }));
            }
            write_table(&out.file("cutoffs.csv"), &["k", "seed", "college", "baseline_cutoff", "deviation_cutoff"], rows)?;
            write_json(&out.file("summary.json"), &summary)?;
        }
        Family::AppendixB => {
            let mut rows = Vec::new();
            let mut summary = Vec::new();
            for &k in &grid {
                let cutoffs = seeds
                    .par_iter()
                    .map(|&s| deviation_sweep(&spec, &cfg.strategy, k, 0, &zeros, s).map(|r| r.baseline_cutoffs))
                    .collect::<Result<Vec<_>, _>>()?;
                for (s, p) in seeds.iter().zip(&cutoffs) {
                    for c in 0..spec.n_colleges {
                        rows.push(vec![k.to_string(), s.to_string(), c.to_string(), fmt_f64(p.get(c))]);
                    }
                }
                summary.push(json!({ "k": k, "mean_cutoffs": CutoffVector::mean(&cutoffs) }));
            }
            write_table(&out.file("cutoffs.csv"), &["k", "seed", "college", "cutoff"], rows)?;
            write_json(&out.file("summary.json"), &summary)?;
        }
        Family::FullSupport | Family::McGeography => {
            let reference = estimate_reference(&spec, *grid.last().expect("validated grid"), cfg.reference_seeds, cfg.seed)?;
            let curve = convergence_curve(&spec, &cfg.strategy, &grid, cfg.n_samples, cfg.n_deviators, &reference)?;
            let points = curve.points.iter().map(|p| vec![p.k.to_string(), fmt_f64(p.mean_sup_distance), fmt_f64(p.sd_sup_distance)]);
            write_table(&out.file("curve.csv"), &["k", "mean_sup_distance", "sd_sup_distance"], points)?;
            let mut rows = Vec::new();
            for (k, s, r) in &curve.sweeps {
                for (d, p) in r.deviators.iter().zip(&r.deviation_cutoffs) {
                    for c in 0..spec.n_colleges {
                        rows.push(vec![k.to_string(), s.to_string(), d.to_string(), c.to_string(), fmt_f64(p.get(c)), fmt_f64(reference.get(c))]);
                    }
                }
            }
            write_table(&out.file("sweeps.csv"), &["k", "seed", "deviator", "college", "cutoff", "reference"], rows)?;
            let slope = if curve.points.len() > 1 { Some(curve.log_log_slope()) } else { None };
            write_json(&out.file("summary.json"), &json!({ "reference": reference, "points": curve.points, "log_log_slope": slope }))?;
        }
    }
    Ok(())
}
