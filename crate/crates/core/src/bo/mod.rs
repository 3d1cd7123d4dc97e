//! Bayesian optimization over the mixed domain.

pub mod acquisition;
pub mod design;
pub mod encoder;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use acquisition::{
    expected_improvement, maximize_acquisition, AcquisitionConfig, AuxiliaryCandidate, ConstraintSurrogates,
};
pub use encoder::{decode, encode, EncoderKind};

use crate::constraints::ConstraintBody;
use crate::direct_search::SearchError;
use crate::domain::Point;
use crate::gp::{fit_hyperparameters, GpModel, KernelConfig};
use crate::problem::Problem;
use crate::runtime::{best_of, EvalError, EvaluationRecord, Evaluator};

#[derive(Debug, Clone, PartialEq)]
pub struct BoConfig {
    pub budget: usize,
    pub seed: u64,
    /// Starting kernel configuration; also selects the categorical mode.
    pub kernel: KernelConfig,
    pub acquisition: AcquisitionConfig,
    /// Refit hyperparameters every iteration up to this many samples...
    pub refit_all_until: usize,
    /// ...and every this many iterations afterwards.
    pub refit_every: usize,
}

impl Default for BoConfig {
    fn default() -> Self {
        BoConfig {
            budget: 150,
            seed: 0,
            kernel: KernelConfig::default(),
            acquisition: AcquisitionConfig::default(),
            refit_all_until: 50,
            refit_every: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionLogRow {
    pub iteration: usize,
    pub meta: String,
    pub ei: f64,
    pub surrogate_feasible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoStop {
    Budget,
    /// Every candidate of the auxiliary domain has been evaluated.
    Exhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoOutcome {
    pub best: Option<EvaluationRecord>,
    pub history: Vec<EvaluationRecord>,
    pub log: Vec<AcquisitionLogRow>,
    pub stop: BoStop,
    pub kernel: KernelConfig,
}

pub fn run_bo(problem: &Problem, cfg: &BoConfig) -> Result<BoOutcome, SearchError> {
    if cfg.budget == 0 {
        return Err(SearchError::Config("budget must be positive".into()));
    }
    let ev = Evaluator::new(problem, cfg.budget)?;
    run_bo_with(&ev, cfg, |_| {})
}

/// Samples usable by a GP: first occurrence of every finite evaluation.
fn gp_samples(history: &[EvaluationRecord], value: impl Fn(&EvaluationRecord) -> Option<f64>) -> Vec<(Point, f64)> {
    history
        .iter()
        .filter(|r| !r.cached)
        .filter_map(|r| value(r).filter(|v| v.is_finite()).map(|v| (r.point.clone(), v)))
        .collect()
}

fn fit_or_default(problem: &Problem, samples: &[(Point, f64)], cfg: &KernelConfig) -> Option<GpModel> {
    GpModel::fit(&problem.domain, samples, cfg)
        .or_else(|_| {
            let fallback = KernelConfig {
                categorical: cfg.categorical,
                ..KernelConfig::default()
            };
            GpModel::fit(&problem.domain, samples, &fallback)
        })
        .ok()
}

/// Runs the loop against an existing evaluator whose budget is the total
/// budget. `observer` receives each acquisition log row.
pub fn run_bo_with(
    ev: &Evaluator,
    cfg: &BoConfig,
    mut observer: impl FnMut(&AcquisitionLogRow),
) -> Result<BoOutcome, SearchError> {
    let problem = ev.problem();
    let domain = &problem.domain;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = Vec::new();
    let mut kernel = cfg.kernel.clone();
    let mut constraint_kernels: BTreeMap<String, KernelConfig> = BTreeMap::new();
    let finish = |log, stop, kernel| BoOutcome {
        best: best_of(&ev.history()),
        history: ev.history(),
        log,
        stop,
        kernel,
    };

    for p in design::initial_design(domain, &mut rng)? {
        match ev.evaluate(&p) {
            Ok(_) => {}
            Err(EvalError::BudgetExhausted(_)) => return Ok(finish(log, BoStop::Budget, kernel)),
            Err(e) => return Err(e.into()),
        }
    }

    let blackbox_constraints: Vec<String> = problem
        .constraints
        .constraints()
        .iter()
        .filter(|c| c.body == ConstraintBody::Blackbox)
        .map(|c| c.id.clone())
        .collect();

    let mut iteration = 0;
    while !ev.budget().exhausted() {
        iteration += 1;
        let history = ev.history();
        let samples = gp_samples(&history, |r| Some(r.objective));
        let refit = samples.len() <= cfg.refit_all_until || iteration % cfg.refit_every.max(1) == 0;
        let seed = cfg.seed.wrapping_add(iteration as u64);
        if refit && samples.len() >= 2 {
            if let Ok((k, _)) = fit_hyperparameters(domain, &samples, &kernel, seed) {
                kernel = k;
            }
        }
        let point = match fit_or_default(problem, &samples, &kernel) {
            None => {
                // No usable observation yet: fall back to a uniform draw.
                let (tm, _) = crate::direct_search::global_search_step(domain, &mut rng)?;
                design::uniform_point(domain, &tm, &mut rng)?
            }
            Some(model) => {
                let mut models = BTreeMap::new();
                for id in &blackbox_constraints {
                    let cs = gp_samples(&history, |r| r.constraints.get(id).copied());
                    if cs.is_empty() {
                        continue;
                    }
                    let base = constraint_kernels.get(id).cloned().unwrap_or_else(|| KernelConfig {
                        categorical: kernel.categorical,
                        ..KernelConfig::default()
                    });
                    let ck = if refit && cs.len() >= 2 {
                        fit_hyperparameters(domain, &cs, &base, seed)
                            .map(|r| r.0)
                            .unwrap_or(base)
                    } else {
                        base
                    };
                    if let Some(m) = fit_or_default(problem, &cs, &ck) {
                        models.insert(id.clone(), m);
                    }
                    constraint_kernels.insert(id.clone(), ck);
                }
                let surrogates = ConstraintSurrogates {
                    system: &problem.constraints,
                    models,
                };
                let f_star = best_of(&history)
                    .map(|r| r.objective)
                    .unwrap_or_else(|| samples.iter().map(|s| s.1).fold(f64::INFINITY, f64::min));
                let anchors = anchors(&history);
                let excluded = |p: &Point| ev.is_cached(p);
                let cand = maximize_acquisition(
                    domain,
                    &model,
                    &surrogates,
                    f_star,
                    &excluded,
                    &anchors,
                    &cfg.acquisition,
                    &mut rng,
                )?;
                let Some(cand) = cand else {
                    return Ok(finish(log, BoStop::Exhausted, kernel));
                };
                let row = AcquisitionLogRow {
                    iteration,
                    meta: domain.render_meta(&cand.point.meta),
                    ei: cand.acquisition,
                    surrogate_feasible: cand.surrogate_feasible,
                };
                observer(&row);
                log.push(row);
                cand.point
            }
        };
        match ev.evaluate(&point) {
            Ok(_) => {}
            Err(EvalError::BudgetExhausted(_)) => break,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(finish(log, BoStop::Budget, kernel))
}

/// Best observed point of every (meta, categorical) branch, used as the first
/// start of the inner search on that branch.
fn anchors(history: &[EvaluationRecord]) -> Vec<Point> {
    let mut best: Vec<(Point, f64)> = Vec::new();
    for r in history.iter().filter(|r| !r.cached) {
        let v = r.barrier();
        match best
            .iter_mut()
            .find(|(p, _)| p.meta == r.point.meta && p.categorical == r.point.categorical)
        {
            Some(slot) if v < slot.1 => *slot = (r.point.clone(), v),
            Some(_) => {}
            None => best.push((r.point.clone(), v)),
        }
    }
    best.into_iter().map(|(p, _)| p).collect()
}

/// Sidecar CSV: `iteration,meta,ei,surrogate_feasible`.
pub fn acquisition_log_csv(rows: &[AcquisitionLogRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["iteration", "meta", "ei", "surrogate_feasible"])
        .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.iteration.to_string(),
            r.meta.clone(),
            format!("{}", r.ei),
            r.surrogate_feasible.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_below_design_returns_best_design_point() {
        let problem = Problem::mlp();
        let cfg = BoConfig {
            budget: 5,
            ..BoConfig::default()
        };
        let out = run_bo(&problem, &cfg).unwrap();
        assert_eq!(out.history.len(), 5);
        assert!(out.log.is_empty());
        assert_eq!(out.best, best_of(&out.history));
    }

    #[test]
    fn single_sample_model_proposes_a_new_point() {
        let problem = Problem::toy();
        let ev = Evaluator::new(&problem, 10).unwrap();
        let xm = problem.domain.meta_from_labels(&[("m", "A")]).unwrap();
        let p = problem.domain.complete_point(&xm, &BTreeMap::new()).unwrap();
        let r = ev.evaluate(&p).unwrap();
        let model = GpModel::fit(&problem.domain, &[(p.clone(), r.objective)], &KernelConfig::default()).unwrap();
        let surrogates = ConstraintSurrogates {
            system: &problem.constraints,
            models: BTreeMap::new(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cand = maximize_acquisition(
            &problem.domain,
            &model,
            &surrogates,
            r.objective,
            &|q: &Point| ev.is_cached(q),
            &[],
            &AcquisitionConfig::default(),
            &mut rng,
        )
        .unwrap()
        .unwrap();
        assert!(cand.acquisition > 0.0);
        assert_ne!(cand.point, p);
        assert!(problem.domain.contains(&cand.point));
    }

    #[test]
    fn acquisition_log_format() {
        let rows = [AcquisitionLogRow {
            iteration: 1,
            meta: "(o=Adam, l=2)".into(),
            ei: 0.5,
            surrogate_feasible: true,
        }];
        assert_eq!(
            acquisition_log_csv(&rows),
            "iteration,meta,ei,surrogate_feasible\n1,\"(o=Adam, l=2)\",0.5,true\n"
        );
    }
}
