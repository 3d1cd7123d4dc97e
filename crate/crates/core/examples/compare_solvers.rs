//! Direct search, BO and random search on the bundled MLP proxy.
//!
//! `cargo run --release -p mixopt --example compare_solvers -- [budget] [seed]`

use std::time::Instant;

use mixopt::bo::{run_bo, BoConfig};
use mixopt::direct_search::{run_direct_search, SearchConfig};
use mixopt::problem::Problem;
use mixopt::random_search::run_random_search;

fn main() {
    let mut args = std::env::args().skip(1);
    let budget: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(150);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);
    let problem = Problem::mlp();

    let t = Instant::now();
    let ds = run_direct_search(
        &problem,
        &SearchConfig {
            budget,
            seed,
            ..SearchConfig::default()
        },
    )
    .unwrap();
    println!("direct  {:>12.6e}  {:?}  {:?}", ds.best.objective, ds.stop, t.elapsed());

    let t = Instant::now();
    let bo = run_bo(
        &problem,
        &BoConfig {
            budget,
            seed,
            ..BoConfig::default()
        },
    )
    .unwrap();
    let best = bo.best.map(|r| r.objective).unwrap_or(f64::INFINITY);
    println!("bo      {best:>12.6e}  {:?}  {:?}", bo.stop, t.elapsed());

    let t = Instant::now();
    let rs = run_random_search(&problem, budget, seed).unwrap();
    let best = rs.best.map(|r| r.objective).unwrap_or(f64::INFINITY);
    println!("random  {best:>12.6e}  {:?}", t.elapsed());
}
