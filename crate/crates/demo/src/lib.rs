//! Browser demo: kernel profiles, a GP/EI slice and solver traces, each
//! returned to JavaScript as a JSON string.

use std::collections::BTreeMap;

use mixopt::bo::{self, expected_improvement, BoConfig};
use mixopt::direct_search::{run_direct_search, SearchConfig};
use mixopt::domain::{Point, Scope, TypeGroup};
use mixopt::gp::kernel::{k_continuous, k_nominal, k_ordinal};
use mixopt::gp::{GpModel, KernelConfig};
use mixopt::problem::Problem;
use mixopt::random_search::run_random_search;
use mixopt::runtime::{EvaluationRecord, Evaluator};
use serde_json::{json, Value as Json};
use wasm_bindgen::prelude::*;

const GRID: usize = 161;
pub const MAX_BUDGET: usize = 400;

/// Squared-exponential curve over normalized distance, plus the nominal and
/// ordinal correlation matrices for `levels` categories.
pub fn kernel_profile_json(lengthscale: f64, correlation: f64, ordinal_ell: f64, levels: u32) -> Json {
    let lambda = 1.0 / (2.0 * lengthscale * lengthscale);
    let curve: Vec<[f64; 2]> = (0..GRID)
        .map(|i| {
            let d = i as f64 / (GRID - 1) as f64;
            [d, k_continuous(&[0.0], &[d], &[lambda]).unwrap_or(f64::NAN)]
        })
        .collect();
    let levels = levels.clamp(2, 8);
    let c = correlation.clamp(0.0, 0.99);
    let matrix = |f: &dyn Fn(u32, u32) -> f64| -> Vec<Vec<f64>> {
        (1..=levels).map(|i| (1..=levels).map(|j| f(i, j)).collect()).collect()
    };
    json!({
        "continuous": curve,
        "nominal": matrix(&|i, j| k_nominal(i, j, c)),
        "ordinal": matrix(&|i, j| k_ordinal(i, j, ordinal_ell.max(1e-3))),
    })
}

/// Variables that can be swept in the slice view: the acting standard
/// variables of the MLP problem under `(Adam, 2)`.
pub fn slice_variables() -> Vec<String> {
    let problem = Problem::mlp();
    let d = &problem.domain;
    let xm = d.meta_from_labels(&[("o", "Adam"), ("l", "2")]).expect("bundled meta");
    d.acting_positions(&xm, TypeGroup::Standard)
        .expect("bundled meta")
        .into_iter()
        .map(|i| d.variables()[i].id.clone())
        .collect()
}

fn with_coordinate(problem: &Problem, base: &Point, var: &str, u: f64) -> Point {
    let spec = problem.domain.variable(var).expect("slice variable");
    let mut p = base.clone();
    let mut v = spec.scope.project(spec.scope.denormalize(u), 1e-9);
    if let Scope::Integer { .. } = spec.scope {
        v = v.round();
    }
    p.standard.insert(var.to_owned(), v);
    p
}

/// GP fitted on `samples` points along `var`, with every other variable of
/// the MLP problem held at its default. Returns the true objective, posterior
/// mean, standard deviation and EI on a grid of normalized coordinates.
pub fn gp_slice_json(var: &str, samples: usize, lengthscale: f64, offset: f64) -> Result<Json, String> {
    let problem = Problem::mlp();
    let d = &problem.domain;
    if !slice_variables().iter().any(|v| v == var) {
        return Err(format!("unknown slice variable {var:?}"));
    }
    let xm = d
        .meta_from_labels(&[("o", "Adam"), ("l", "2")])
        .map_err(|e| e.to_string())?;
    let base = d.complete_point(&xm, &BTreeMap::new()).map_err(|e| e.to_string())?;
    let ev = Evaluator::new(&problem, samples.max(1) + GRID).map_err(|e| e.to_string())?;
    let golden = 0.618_033_988_749_895;
    let mut data = Vec::new();
    let mut xs = Vec::new();
    for i in 0..samples.clamp(1, 30) {
        let u = (offset + golden * i as f64).fract();
        let p = with_coordinate(&problem, &base, var, u);
        let r = ev.evaluate(&p).map_err(|e| e.to_string())?;
        if !r.cached && r.objective.is_finite() {
            xs.push(d.variable(var).unwrap().scope.normalize(p.standard[var]));
            data.push((p, r.objective));
        }
    }
    let weight = 1.0 / (2.0 * lengthscale * lengthscale);
    let cfg = KernelConfig {
        continuous: [(var.to_owned(), weight)].into(),
        integer: [(var.to_owned(), weight)].into(),
        ..KernelConfig::default()
    };
    let model = GpModel::fit(d, &data, &cfg).map_err(|e| e.to_string())?;
    let f_star = data.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let mut grid = Vec::with_capacity(GRID);
    for i in 0..GRID {
        let u = i as f64 / (GRID - 1) as f64;
        let p = with_coordinate(&problem, &base, var, u);
        let truth = mixopt::runtime::instantiate(&problem.blackbox, d)
            .and_then(|bb| bb.evaluate(d, &p))
            .map(|o| o.objective)
            .unwrap_or(f64::NAN);
        let (mean, v) = model.predict(d, &p);
        let sd = v.sqrt();
        grid.push(json!({
            "u": u,
            "truth": truth,
            "mean": mean,
            "sd": sd,
            "ei": expected_improvement(mean, sd, f_star),
        }));
    }
    Ok(json!({
        "variable": var,
        "samples": xs.iter().zip(&data).map(|(u, s)| json!([u, s.1])).collect::<Vec<_>>(),
        "f_star": f_star,
        "grid": grid,
    }))
}

fn trace(problem: &Problem, history: &[EvaluationRecord]) -> Json {
    let mut best = f64::INFINITY;
    let mut best_point = Json::Null;
    let mut steps = Vec::new();
    for r in history.iter().filter(|r| !r.cached) {
        if r.feasible && r.objective < best {
            best = r.objective;
            best_point = problem.domain.point_to_json(&r.point);
        }
        steps.push(json!({
            "objective": if r.objective.is_finite() { json!(r.objective) } else { Json::Null },
            "feasible": r.feasible,
            "best": if best.is_finite() { json!(best) } else { Json::Null },
            "meta": problem.domain.render_meta(&r.point.meta),
        }));
    }
    json!({ "steps": steps, "best_point": best_point })
}

/// Runs `solver` (`direct`, `bo` or `random`) on a bundled problem.
pub fn solver_trace_json(problem: &str, solver: &str, budget: usize, seed: u64) -> Result<Json, String> {
    let problem = match problem {
        "mlp" => Problem::mlp(),
        "toy" => Problem::toy(),
        other => return Err(format!("unknown problem {other:?}")),
    };
    let budget = budget.clamp(1, MAX_BUDGET);
    let history = match solver {
        "direct" => {
            let cfg = SearchConfig {
                budget,
                seed,
                ..SearchConfig::default()
            };
            run_direct_search(&problem, &cfg).map_err(|e| e.to_string())?.history
        }
        "bo" => {
            let cfg = BoConfig {
                budget,
                seed,
                ..BoConfig::default()
            };
            bo::run_bo(&problem, &cfg).map_err(|e| e.to_string())?.history
        }
        "random" => {
            run_random_search(&problem, budget, seed)
                .map_err(|e| e.to_string())?
                .history
        }
        other => return Err(format!("unknown solver {other:?}")),
    };
    Ok(trace(&problem, &history))
}

fn to_js(r: Result<Json, String>) -> Result<String, JsValue> {
    r.map(|j| j.to_string()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn kernel_profile(lengthscale: f64, correlation: f64, ordinal_ell: f64, levels: u32) -> String {
    kernel_profile_json(lengthscale, correlation, ordinal_ell, levels).to_string()
}

#[wasm_bindgen]
pub fn slice_variable_names() -> String {
    Json::from(slice_variables()).to_string()
}

#[wasm_bindgen]
pub fn gp_slice(var: &str, samples: usize, lengthscale: f64, offset: f64) -> Result<String, JsValue> {
    to_js(gp_slice_json(var, samples, lengthscale, offset))
}

#[wasm_bindgen]
pub fn solver_trace(problem: &str, solver: &str, budget: usize, seed: u32) -> Result<String, JsValue> {
    to_js(solver_trace_json(problem, solver, budget, seed as u64))
}
