//! Uniform random search, the baseline for the model-based solvers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bo::design::uniform_point;
use crate::direct_search::{global_search_step, SearchError};
use crate::problem::Problem;
use crate::runtime::{best_of, EvalError, EvaluationRecord, Evaluator};

#[derive(Debug, Clone, PartialEq)]
pub struct RandomOutcome {
    pub best: Option<EvaluationRecord>,
    pub history: Vec<EvaluationRecord>,
}

/// Draws a meta component, then categorical and standard values uniformly,
/// until `budget` distinct points are evaluated (or too many draws repeat).
pub fn run_random_search(problem: &Problem, budget: usize, seed: u64) -> Result<RandomOutcome, SearchError> {
    let ev = Evaluator::new(problem, budget)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_draws = budget.saturating_mul(100).max(100);
    for _ in 0..max_draws {
        if ev.budget().exhausted() {
            break;
        }
        let (tm, _) = global_search_step(&problem.domain, &mut rng)?;
        let p = uniform_point(&problem.domain, &tm, &mut rng)?;
        match ev.evaluate(&p) {
            Ok(_) | Err(EvalError::BudgetExhausted(_)) => {}
            Err(e) => return Err(e.into()),
        }
    }
    let history = ev.history();
    Ok(RandomOutcome {
        best: best_of(&history),
        history,
    })
}
