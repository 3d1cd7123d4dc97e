//! Direct search: optional random global search, then a poll over the meta
//! and categorical neighborhoods. Every candidate `(t^m, t^q)` is resolved by
//! a coordinate pattern search on its standard variables.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::domain::Domain;
use crate::domain::{DomainError, MetaComponent, Point, Scope, TypeGroup};
use crate::neighborhood::{self, HookRegistry};
use crate::problem::Problem;
use crate::runtime::{EvalError, EvaluationRecord, Evaluator};

pub const REFINE_FACTOR: f64 = 0.5;
pub const MIN_CONTINUOUS_STEP: f64 = 1e-6;
const OPEN_BOUND_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlobalStrategy {
    Random,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub budget: usize,
    /// Evaluation calls (cached ones included) allowed per subproblem.
    pub subproblem_budget: usize,
    pub max_iterations: usize,
    pub seed: u64,
    pub opportunistic: bool,
    pub global: GlobalStrategy,
    /// Consecutive iterations without a new evaluation before stopping.
    pub stall_limit: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            budget: 1000,
            subproblem_budget: 200,
            max_iterations: 1000,
            seed: 0,
            opportunistic: true,
            global: GlobalStrategy::Random,
            stall_limit: 50,
        }
    }
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
struct MeshCoord {
    id: String,
    integer: bool,
    step: f64,
}

/// Poll step sizes for the acting standard variables. Continuous steps are
/// fractions of the (normalized) scope width; integer steps are whole units.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshState {
    coords: Vec<MeshCoord>,
}

impl MeshState {
    pub fn new(domain: &Domain, ids: &[&str]) -> Self {
        let coords = ids
            .iter()
            .map(|id| {
                let spec = domain.variable(id).expect("acting variable");
                match spec.scope {
                    Scope::Integer { lo, hi } => MeshCoord {
                        id: id.to_string(),
                        integer: true,
                        step: ((hi - lo) / 4).max(1) as f64,
                    },
                    _ => MeshCoord {
                        id: id.to_string(),
                        integer: false,
                        step: 0.25,
                    },
                }
            })
            .collect();
        MeshState { coords }
    }

    pub fn step(&self, id: &str) -> Option<f64> {
        self.coords.iter().find(|c| c.id == id).map(|c| c.step)
    }

    pub fn at_minimum(&self) -> bool {
        self.coords.iter().all(|c| c.step <= floor(c.integer))
    }

    /// Shrinks every step; returns false when all steps were already minimal.
    pub fn refine(&mut self) -> bool {
        if self.at_minimum() {
            return false;
        }
        for c in &mut self.coords {
            let s = c.step * REFINE_FACTOR;
            c.step = if c.integer { s.floor() } else { s }.max(floor(c.integer));
        }
        true
    }
}

fn floor(integer: bool) -> f64 {
    if integer {
        1.0
    } else {
        MIN_CONTINUOUS_STEP
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemResult {
    pub record: EvaluationRecord,
    /// Evaluation calls made, cached ones included.
    pub calls: usize,
    /// The global budget ran out before the subproblem finished.
    pub truncated: bool,
}

/// Coordinate pattern search over the standard variables of `start`, with its
/// meta and categorical components held fixed. Infeasible points count as
/// `+inf`. Fails only when the start itself cannot be evaluated.
pub fn solve_standard_subproblem(
    ev: &Evaluator,
    start: &Point,
    cfg: &SearchConfig,
) -> Result<SubproblemResult, EvalError> {
    let domain = ev.domain();
    let mut inc = ev.evaluate(start)?;
    let mut calls = 1;
    let ids: Vec<&str> = domain
        .variables()
        .iter()
        .filter(|s| start.standard.contains_key(&s.id))
        .map(|s| s.id.as_str())
        .collect();
    let mut mesh = MeshState::new(domain, &ids);
    let mut truncated = false;
    'outer: while !ids.is_empty() {
        let mut improved = false;
        'poll: for coord in &mesh.coords {
            let spec = domain.variable(&coord.id).expect("acting variable");
            let current = inc.point.standard[&coord.id];
            for dir in [1.0, -1.0] {
                let cand_value = if coord.integer {
                    spec.scope.project(current + dir * coord.step, 0.0)
                } else {
                    let u = (spec.scope.normalize(current) + dir * coord.step).clamp(0.0, 1.0);
                    spec.scope.project(spec.scope.denormalize(u), OPEN_BOUND_MARGIN)
                };
                if cand_value == current {
                    continue;
                }
                if calls >= cfg.subproblem_budget {
                    break 'outer;
                }
                let mut cand = inc.point.clone();
                cand.standard.insert(coord.id.clone(), cand_value);
                let rec = match ev.evaluate(&cand) {
                    Ok(r) => r,
                    Err(EvalError::BudgetExhausted(_)) => {
                        truncated = true;
                        break 'outer;
                    }
                    Err(e) => return Err(e),
                };
                calls += 1;
                if rec.barrier() < inc.barrier() {
                    inc = rec;
                    improved = true;
                    break 'poll;
                }
            }
        }
        if !improved && !mesh.refine() {
            break;
        }
    }
    Ok(SubproblemResult {
        record: inc,
        calls,
        truncated,
    })
}

/// Uniform draw of a meta component, then of each acting categorical value.
pub fn global_search_step(
    domain: &Domain,
    rng: &mut impl Rng,
) -> Result<(MetaComponent, BTreeMap<String, u32>), DomainError> {
    let metas = domain.enumerate_meta_set()?;
    let tm = metas[rng.gen_range(0..metas.len())].clone();
    let mut tq = BTreeMap::new();
    for i in domain.acting_positions(&tm, TypeGroup::Categorical)? {
        let spec = &domain.variables()[i];
        let n = spec.scope.n_categories().expect("categorical scope");
        tq.insert(spec.id.clone(), rng.gen_range(1..=n));
    }
    Ok((tm, tq))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Budget,
    MaxIterations,
    PollFailed,
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationReport {
    pub iteration: usize,
    pub used: usize,
    pub incumbent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    /// Final incumbent; infeasible (objective `+inf` barrier) if no feasible
    /// point was found.
    pub best: EvaluationRecord,
    pub history: Vec<EvaluationRecord>,
    pub iterations: usize,
    pub stop: StopReason,
}

pub fn run_direct_search(problem: &Problem, cfg: &SearchConfig) -> Result<SearchOutcome, SearchError> {
    if cfg.budget == 0 {
        return Err(SearchError::Config("budget must be positive".into()));
    }
    let ev = Evaluator::new(problem, cfg.budget)?;
    run_direct_search_with(&ev, cfg, &HookRegistry::default(), |_| {})
}

/// Runs the search against an existing evaluator, whose budget is the total
/// budget. `observer` is called once per outer iteration.
pub fn run_direct_search_with(
    ev: &Evaluator,
    cfg: &SearchConfig,
    hooks: &HookRegistry,
    mut observer: impl FnMut(&IterationReport),
) -> Result<SearchOutcome, SearchError> {
    if cfg.subproblem_budget == 0 {
        return Err(SearchError::Config("subproblem budget must be positive".into()));
    }
    let problem = ev.problem();
    let domain = &problem.domain;
    let metas = domain.enumerate_meta_set()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let x0 = domain.complete_point(&metas[0], &BTreeMap::new())?;
    let mut inc = solve_standard_subproblem(ev, &x0, cfg)?.record;
    let finish = |inc: EvaluationRecord, iterations, stop| SearchOutcome {
        best: inc,
        history: ev.history(),
        iterations,
        stop,
    };

    let mut stall = 0;
    let mut k = 0;
    loop {
        if ev.budget().exhausted() {
            return Ok(finish(inc, k, StopReason::Budget));
        }
        if k >= cfg.max_iterations {
            return Ok(finish(inc, k, StopReason::MaxIterations));
        }
        k += 1;
        let used_before = ev.budget().used;
        let mut success = false;
        let mut exhausted = false;

        if cfg.global == GlobalStrategy::Random {
            let (tm, tq) = global_search_step(domain, &mut rng)?;
            let start = neighborhood::realize_neighbor(domain, &inc.point, &tm, &tq)?;
            match solve_standard_subproblem(ev, &start, cfg) {
                Ok(r) => {
                    exhausted |= r.truncated;
                    if r.record.barrier() < inc.barrier() {
                        inc = r.record;
                        success = true;
                    }
                }
                Err(EvalError::BudgetExhausted(_)) => exhausted = true,
                Err(e) => return Err(e.into()),
            }
        }

        if !success && !exhausted {
            let mut best: Option<EvaluationRecord> = None;
            for start in poll_points(problem, &inc.point, hooks)? {
                let r = match solve_standard_subproblem(ev, &start, cfg) {
                    Ok(r) => r,
                    Err(EvalError::BudgetExhausted(_)) => {
                        exhausted = true;
                        break;
                    }
                    Err(e) => return Err(e.into()),
                };
                let bar = best.as_ref().map_or(inc.barrier(), |b| b.barrier());
                if r.record.barrier() < bar {
                    best = Some(r.record);
                    if cfg.opportunistic {
                        break;
                    }
                }
                if r.truncated {
                    exhausted = true;
                    break;
                }
            }
            if let Some(b) = best {
                inc = b;
                success = true;
            }
        }

        observer(&IterationReport {
            iteration: k,
            used: ev.budget().used,
            incumbent: inc.barrier(),
        });
        if exhausted {
            return Ok(finish(inc, k, StopReason::Budget));
        }
        if !success && cfg.global == GlobalStrategy::None {
            return Ok(finish(inc, k, StopReason::PollFailed));
        }
        if ev.budget().used == used_before {
            stall += 1;
            if stall >= cfg.stall_limit {
                return Ok(finish(inc, k, StopReason::Stalled));
            }
        } else {
            stall = 0;
        }
    }
}

/// Poll starting points in order: every `(t^m, t^q)` with `t^m` in `x^m`
/// followed by `N^m(x)`, and `t^q` in the carried categorical component
/// followed by `N^q(x; t^m)`, except `x`'s own pair.
pub fn poll_points(problem: &Problem, x: &Point, hooks: &HookRegistry) -> Result<Vec<Point>, DomainError> {
    let domain = &problem.domain;
    let nb = &problem.neighborhoods;
    let mut metas = vec![x.meta.clone()];
    metas.extend(neighborhood::meta_neighbors(&nb.meta, domain, x, hooks));
    let mut out = Vec::new();
    for tm in &metas {
        let mut cats = vec![neighborhood::carried_categorical(domain, x, tm)];
        for tq in neighborhood::categorical_neighbors(nb.categorical.as_ref(), domain, x, tm, hooks) {
            if !cats.contains(&tq) {
                cats.push(tq);
            }
        }
        for tq in &cats {
            if *tm == x.meta && *tq == x.categorical {
                continue;
            }
            out.push(neighborhood::realize_neighbor(domain, x, tm, tq)?);
        }
    }
    Ok(out)
}
