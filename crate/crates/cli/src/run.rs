//! Fit, predict and score one method of an experiment.

use opidmd_core::snapshots::SnapshotMatrix;
use opidmd_core::spectral::{evaluate, predict, summary_of};
use opidmd_core::Result;

use crate::config::{EvalSpec, ExperimentConfig, MethodSpec};
use crate::data::Prepared;
use crate::methods::{fit, FitOutcome, FittedModel};
use crate::report::{r2_text, EigenReport, RunReport, Timing, UpdateTiming};

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub prediction: SnapshotMatrix,
    /// May be non-finite or hugely negative for a blown-up model.
    pub r2: f64,
    pub r_used: usize,
    pub eigen: EigenReport,
}

/// Modal prediction over the test window from the split's initial state.
pub fn evaluate_model(model: &FittedModel, data: &Prepared, eval: &EvalSpec) -> Result<Evaluation> {
    let test = &data.split.test;
    let horizon = eval.horizon.unwrap_or(test.n_time()).min(test.n_time());
    let r_used = eval.r_used.unwrap_or(model.n_modes()).min(model.n_modes());
    let (vals, modes) = model.spectrum()?;
    let md = opidmd_core::spectral::from_eigenpairs(&vals, modes.as_ref(), r_used, &data.split.init_state)?;
    let prediction = predict(&md, horizon, data.dt)?;
    let truth = test.columns(0, horizon);
    let scored = evaluate(prediction.values(), truth.values(), &md.eigenvalues, eval.per_channel)?;
    let mut all = vals;
    all.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    Ok(Evaluation { prediction, r2: scored.r2, r_used: md.r_used, eigen: EigenReport::from(&summary_of(all)) })
}

/// Everything produced for one method; `outcome` is absent when fitting failed.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub report: RunReport,
    pub outcome: Option<FitOutcome>,
    pub evaluation: Option<Evaluation>,
    /// The failure that prevented a score, if any.
    pub failure: Option<String>,
}

pub fn run_method(cfg: &ExperimentConfig, data: &Prepared, method: &MethodSpec, record_trace: bool) -> MethodRun {
    let horizon = cfg.eval.horizon.unwrap_or(data.split.test.n_time());
    let mut report = RunReport {
        experiment: cfg.name.clone(),
        method: method.id().to_string(),
        label: method.label(),
        constraint: method.constraint().map(|c| c.id().to_string()),
        r2: None,
        r2_text: r2_text(None, None),
        r_used: None,
        horizon,
        n_state: data.split.train.n_state(),
        n_train_pairs: data.split.train.len(),
        diverged: false,
        divergence: None,
        error: None,
        eigen: None,
        timing: Timing { fit_seconds: 0.0, per_update: None },
        hash: String::new(),
    };
    let outcome = match fit(method, data, record_trace) {
        Ok(o) => o,
        Err(e) => {
            report.error = Some(e.to_string());
            return MethodRun { report: report.seal(), outcome: None, evaluation: None, failure: Some(e.to_string()) };
        }
    };
    report.timing = Timing { fit_seconds: outcome.fit_seconds, per_update: UpdateTiming::from_seconds(&outcome.update_seconds) };
    report.diverged = outcome.divergence.is_some();
    report.divergence = outcome.divergence.clone();
    let evaluation = match evaluate_model(&outcome.model, data, &cfg.eval) {
        Ok(ev) => {
            report.r2 = ev.r2.is_finite().then_some(ev.r2);
            report.r2_text = r2_text(report.r2, Some(ev.r2));
            report.r_used = Some(ev.r_used);
            report.eigen = Some(ev.eigen.clone());
            Some(ev)
        }
        Err(e) => {
            report.error = Some(e.to_string());
            None
        }
    };
    let failure = report.error.clone();
    MethodRun { report: report.seal(), outcome: Some(outcome), evaluation, failure }
}

/// Runs every method of `cfg` in order, optionally across a thread pool.
pub fn run_all(cfg: &ExperimentConfig, data: &Prepared, pool: Option<&rayon::ThreadPool>) -> Vec<RunReport> {
    let one = |m: &MethodSpec| run_method(cfg, data, m, false).report;
    match pool {
        Some(pool) => pool.install(|| {
            use rayon::prelude::*;
            cfg.methods.par_iter().map(one).collect()
        }),
        None => cfg.methods.iter().map(one).collect(),
    }
}
