//! Blackbox evaluation with caching, budget accounting and history.

mod builtin;
mod history;
mod subprocess;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::{Condvar, Mutex};

use thiserror::Error;

pub use builtin::{MlpProxy, ToyDiscrete};
pub use history::{history_csv, read_history, write_history, HistoryRow};
pub use subprocess::CommandBlackbox;

use crate::constraints::{ConstraintBody, ConstraintValues};
use crate::domain::{Domain, Point, Scope, Value, Violation};
use crate::problem::{BlackboxBinding, Problem};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("point is not in the domain: {}", join(.0))]
    Domain(Vec<Violation>),
    #[error("evaluation budget of {0} exhausted")]
    BudgetExhausted(usize),
    #[error("blackbox failed: {0}")]
    Blackbox(String),
    #[error("unknown builtin blackbox {0:?}")]
    UnknownBuiltin(String),
    #[error("invalid blackbox parameters: {0}")]
    Params(String),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// Raw output of one blackbox call.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BlackboxOutput {
    pub objective: f64,
    /// Values of blackbox-bodied constraints only, keyed by constraint id.
    pub constraints: BTreeMap<String, f64>,
}

pub trait Blackbox: Send + Sync {
    fn evaluate(&self, domain: &Domain, p: &Point) -> Result<BlackboxOutput, EvalError>;
}

/// Builds the blackbox named by a problem's binding.
pub fn instantiate(binding: &BlackboxBinding, domain: &Domain) -> Result<Box<dyn Blackbox>, EvalError> {
    match binding {
        BlackboxBinding::Builtin { name, params } => match name.as_str() {
            "mlp_proxy" => Ok(Box::new(MlpProxy::from_params(params, domain)?)),
            "toy_discrete" => Ok(Box::new(ToyDiscrete)),
            other => Err(EvalError::UnknownBuiltin(other.to_owned())),
        },
        BlackboxBinding::Command { argv, timeout_secs } => Ok(Box::new(CommandBlackbox::new(
            argv.clone(),
            std::time::Duration::from_secs_f64(*timeout_secs),
        ))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRecord {
    pub point: Point,
    pub objective: f64,
    pub constraints: ConstraintValues,
    pub feasible: bool,
    /// Index of the underlying (non-cached) evaluation.
    pub index: usize,
    pub cached: bool,
    pub wall_ms: f64,
    /// Set when the blackbox failed; the record is then infeasible with an
    /// infinite objective.
    pub failure: Option<String>,
}

impl EvaluationRecord {
    /// Extreme-barrier value: the objective when feasible, `+inf` otherwise.
    pub fn barrier(&self) -> f64 {
        if self.feasible && self.objective.is_finite() {
            self.objective
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BudgetState {
    pub max_evaluations: usize,
    pub used: usize,
}

impl BudgetState {
    pub fn remaining(&self) -> usize {
        self.max_evaluations - self.used
    }

    pub fn exhausted(&self) -> bool {
        self.used >= self.max_evaluations
    }
}

/// Canonical cache key: meta ids sorted with values, then the acting
/// variables sorted by id. Reals use 17 significant digits.
pub fn cache_key(domain: &Domain, p: &Point) -> String {
    let fmt_real = |r: f64| format!("{r:.16e}");
    let mut key = String::new();
    for (i, (id, v)) in p.meta.iter().enumerate() {
        if i > 0 {
            key.push(';');
        }
        let text = match v {
            Value::Category(c) => c.to_string(),
            Value::Integer(n) => n.to_string(),
            Value::Real(r) => fmt_real(r),
        };
        key.push_str(&format!("{id}={text}"));
    }
    key.push('|');
    let mut acting: Vec<(&str, String)> = p
        .categorical
        .iter()
        .map(|(id, c)| (id.as_str(), c.to_string()))
        .collect();
    for (id, &v) in &p.standard {
        let text = match domain.variable(id).map(|s| &s.scope) {
            Some(Scope::Integer { .. }) => format!("{}", v as i64),
            _ => fmt_real(v),
        };
        acting.push((id.as_str(), text));
    }
    acting.sort();
    let body: Vec<String> = acting.into_iter().map(|(id, t)| format!("{id}={t}")).collect();
    key.push_str(&body.join(";"));
    key
}

#[derive(Debug, Clone)]
struct Outcome {
    objective: f64,
    constraints: ConstraintValues,
    feasible: bool,
    index: usize,
    failure: Option<String>,
}

#[derive(Debug)]
struct State {
    budget: BudgetState,
    cache: HashMap<String, Outcome>,
    inflight: HashSet<String>,
    history: Vec<EvaluationRecord>,
    next_index: usize,
}

/// Evaluates points of one problem under a fixed budget.
///
/// Cache lookups, budget reservation and history appends happen under one
/// lock, so `evaluate` may be called from several threads. Concurrent calls on
/// the same point share a single blackbox invocation.
pub struct Evaluator<'p> {
    problem: &'p Problem,
    blackbox: Box<dyn Blackbox>,
    state: Mutex<State>,
    ready: Condvar,
}

impl<'p> Evaluator<'p> {
    pub fn new(problem: &'p Problem, max_evaluations: usize) -> Result<Self, EvalError> {
        let bb = instantiate(&problem.blackbox, &problem.domain)?;
        Ok(Evaluator::with_blackbox(problem, bb, max_evaluations))
    }

    pub fn with_blackbox(problem: &'p Problem, blackbox: Box<dyn Blackbox>, max_evaluations: usize) -> Self {
        Evaluator {
            problem,
            blackbox,
            state: Mutex::new(State {
                budget: BudgetState {
                    max_evaluations,
                    used: 0,
                },
                cache: HashMap::new(),
                inflight: HashSet::new(),
                history: Vec::new(),
                next_index: 0,
            }),
            ready: Condvar::new(),
        }
    }

    pub fn problem(&self) -> &'p Problem {
        self.problem
    }

    pub fn domain(&self) -> &'p Domain {
        &self.problem.domain
    }

    pub fn budget(&self) -> BudgetState {
        self.state.lock().unwrap().budget
    }

    pub fn history(&self) -> Vec<EvaluationRecord> {
        self.state.lock().unwrap().history.clone()
    }

    pub fn is_cached(&self, p: &Point) -> bool {
        let key = cache_key(self.domain(), p);
        self.state.lock().unwrap().cache.contains_key(&key)
    }

    /// Best feasible record so far (lowest objective, earliest on ties).
    pub fn best(&self) -> Option<EvaluationRecord> {
        let st = self.state.lock().unwrap();
        best_of(&st.history)
    }

    pub fn evaluate(&self, p: &Point) -> Result<EvaluationRecord, EvalError> {
        let domain = self.domain();
        let violations = domain.violations(p);
        if !violations.is_empty() {
            return Err(EvalError::Domain(violations));
        }
        let key = cache_key(domain, p);
        let mut st = self.state.lock().unwrap();
        loop {
            if let Some(o) = st.cache.get(&key).cloned() {
                let rec = EvaluationRecord {
                    point: p.clone(),
                    objective: o.objective,
                    constraints: o.constraints,
                    feasible: o.feasible,
                    index: o.index,
                    cached: true,
                    wall_ms: 0.0,
                    failure: o.failure,
                };
                st.history.push(rec.clone());
                return Ok(rec);
            }
            if st.inflight.contains(&key) {
                st = self.ready.wait(st).unwrap();
                continue;
            }
            break;
        }
        if st.budget.exhausted() {
            return Err(EvalError::BudgetExhausted(st.budget.max_evaluations));
        }
        st.budget.used += 1;
        let index = st.next_index;
        st.next_index += 1;
        st.inflight.insert(key.clone());
        drop(st);

        let clock = Clock::start();
        let outcome = self.run(p, index);
        let wall_ms = clock.elapsed_ms();

        let mut st = self.state.lock().unwrap();
        st.inflight.remove(&key);
        st.cache.insert(key, outcome.clone());
        let rec = EvaluationRecord {
            point: p.clone(),
            objective: outcome.objective,
            constraints: outcome.constraints,
            feasible: outcome.feasible,
            index,
            cached: false,
            wall_ms,
            failure: outcome.failure,
        };
        st.history.push(rec.clone());
        drop(st);
        self.ready.notify_all();
        Ok(rec)
    }

    fn run(&self, p: &Point, index: usize) -> Outcome {
        let failed = |msg: String| Outcome {
            objective: f64::INFINITY,
            constraints: ConstraintValues::new(),
            feasible: false,
            index,
            failure: Some(msg),
        };
        let out = match self.blackbox.evaluate(self.domain(), p) {
            Ok(out) => out,
            Err(e) => return failed(e.to_string()),
        };
        let mut values = ConstraintValues::new();
        for c in self.problem.constraints.acting(&p.meta) {
            let v = match &c.body {
                ConstraintBody::Analytic { .. } => match c.evaluate_analytic(p) {
                    Ok(v) => v,
                    Err(e) => return failed(e.to_string()),
                },
                ConstraintBody::Blackbox => match out.constraints.get(&c.id) {
                    Some(&v) => v,
                    None => return failed(format!("blackbox did not report constraint {:?}", c.id)),
                },
            };
            values.insert(c.id.clone(), v);
        }
        let feasible = out.objective.is_finite() && self.problem.constraints.is_feasible(p, &values).unwrap_or(false);
        Outcome {
            objective: out.objective,
            constraints: values,
            feasible,
            index,
            failure: None,
        }
    }
}

pub fn best_of(records: &[EvaluationRecord]) -> Option<EvaluationRecord> {
    let mut best: Option<&EvaluationRecord> = None;
    for r in records.iter().filter(|r| r.feasible) {
        if best.is_none_or(|b| r.objective < b.objective) {
            best = Some(r);
        }
    }
    best.cloned()
}

struct Clock {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Clock {
    fn start() -> Self {
        Clock {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    fn elapsed_ms(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_secs_f64() * 1e3
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn mlp_point(problem: &Problem, u: (f64, f64)) -> Point {
        problem
            .domain
            .point_from_json(&json!({
                "meta": {"o": "Adam", "l": 2},
                "categorical": {"a": "ReLU"},
                "standard": {"u1": u.0, "u2": u.1, "r": 0.01, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8}
            }))
            .unwrap()
    }

    #[test]
    fn cache_hits_do_not_consume_budget() {
        let problem = Problem::mlp();
        let ev = Evaluator::new(&problem, 5).unwrap();
        let p = mlp_point(&problem, (200.0, 150.0));
        let a = ev.evaluate(&p).unwrap();
        let b = ev.evaluate(&p).unwrap();
        assert!(!a.cached && b.cached);
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        assert_eq!(ev.budget().used, 1);
        assert_eq!(ev.history().len(), 2);
    }

    #[test]
    fn budget_exhaustion_is_an_error() {
        let problem = Problem::mlp();
        let ev = Evaluator::new(&problem, 1).unwrap();
        ev.evaluate(&mlp_point(&problem, (200.0, 150.0))).unwrap();
        let err = ev.evaluate(&mlp_point(&problem, (201.0, 150.0))).unwrap_err();
        assert_eq!(err, EvalError::BudgetExhausted(1));
        // The already-cached point is still served.
        assert!(ev.evaluate(&mlp_point(&problem, (200.0, 150.0))).unwrap().cached);
    }

    #[test]
    fn constraint_values_follow_the_decree() {
        let problem = Problem::mlp();
        let ev = Evaluator::new(&problem, 10).unwrap();
        let r = ev.evaluate(&mlp_point(&problem, (200.0, 150.0))).unwrap();
        assert_eq!(r.constraints["units_total"], -150.0);
        assert_eq!(r.constraints.len(), 2);
        assert!(r.feasible);
        let r = ev.evaluate(&mlp_point(&problem, (100.0, 300.0))).unwrap();
        assert_eq!(r.constraints["taper2"], 200.0);
        assert!(!r.feasible);
    }

    #[test]
    fn out_of_domain_points_are_refused() {
        let problem = Problem::mlp();
        let ev = Evaluator::new(&problem, 10).unwrap();
        let mut p = mlp_point(&problem, (200.0, 150.0));
        p.standard.insert("lambda".into(), 0.5);
        assert!(matches!(ev.evaluate(&p), Err(EvalError::Domain(_))));
        assert_eq!(ev.budget().used, 0);
    }

    #[test]
    fn concurrent_duplicates_share_one_call() {
        let problem = Problem::mlp();
        let ev = Evaluator::new(&problem, 100).unwrap();
        let p = mlp_point(&problem, (180.0, 150.0));
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| ev.evaluate(&p).unwrap());
            }
        });
        assert_eq!(ev.budget().used, 1);
        let h = ev.history();
        assert_eq!(h.len(), 8);
        assert_eq!(h.iter().filter(|r| !r.cached).count(), 1);
    }

    #[test]
    fn cache_key_ignores_insertion_order() {
        let problem = Problem::mlp();
        let p = mlp_point(&problem, (200.0, 150.0));
        let mut q = Point::new(p.meta.clone());
        for (k, v) in p.standard.iter().rev() {
            q.standard.insert(k.clone(), *v);
        }
        q.categorical = p.categorical.clone();
        assert_eq!(cache_key(&problem.domain, &p), cache_key(&problem.domain, &q));
        assert!(cache_key(&problem.domain, &p).starts_with("l=2;o=1|"));
    }
}
