//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed.

use std::collections::BTreeMap;
use std::process::Command;
use std::time::{Duration, Instant};

use mixopt::bo::{self, design, expected_improvement, BoConfig};
use mixopt::direct_search::{run_direct_search, SearchConfig};
use mixopt::domain::{Domain, MetaComponent, Point, TypeGroup, Value};
use mixopt::gp::{features, fit_hyperparameters, gram_min_eigenvalue, CompiledKernel, GpModel, KernelConfig};
use mixopt::neighborhood::{meta_neighbors, HookRegistry};
use mixopt::problem::Problem;
use mixopt::random_search::run_random_search;
use mixopt::runtime::{EvalError, Evaluator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(
        elapsed <= limit,
        format!("took {:.2}s, limit {:.0}s", elapsed.as_secs_f64(), limit.as_secs_f64()),
    )
}

fn meta_pair(d: &Domain, xm: &MetaComponent) -> (i64, String) {
    let Some(Value::Integer(l)) = xm.get("l") else {
        panic!("layer count missing")
    };
    let Some(o) = xm.get("o") else {
        panic!("optimizer missing")
    };
    (l, d.variable("o").unwrap().render(o))
}

fn mlp_structure() -> Outcome {
    let start = Instant::now();
    let problem = Problem::mlp();
    let d = &problem.domain;
    let metas = d.enumerate_meta_set().map_err(|e| e.to_string())?;
    let pairs: Vec<(i64, String)> = metas.iter().map(|m| meta_pair(d, m)).collect();
    let expected: Vec<(i64, String)> = [("Adam", 2), ("Adam", 3), ("ASGD", 2), ("ASGD", 3)]
        .iter()
        .map(|(o, l)| (*l, o.to_string()))
        .collect();
    let mut sorted = pairs.clone();
    sorted.sort();
    let mut want = expected.clone();
    want.sort();
    ensure(sorted == want, format!("meta set {pairs:?}"))?;
    for xm in &metas {
        let (l, o) = meta_pair(d, xm);
        let nc = d.dimension(xm, TypeGroup::Continuous).unwrap();
        let nz = d.dimension(xm, TypeGroup::Integer).unwrap();
        let cm = problem.constraints.acting_decreed_constraints(xm).len();
        ensure(nc == 4, format!("n^c = {nc} under ({o},{l})"))?;
        ensure(nz as i64 == l, format!("n^z = {nz} under ({o},{l})"))?;
        ensure(cm as i64 == l - 1, format!("|C^m| = {cm} under ({o},{l})"))?;
    }
    // The CLI prints the same table.
    let out = Command::new(env!("CARGO_BIN_EXE_mixopt"))
        .args(["enumerate", concat!(env!("CARGO_MANIFEST_DIR"), "/problems/mlp.json")])
        .output()
        .map_err(|e| e.to_string())?;
    let text = String::from_utf8_lossy(&out.stdout);
    ensure(out.status.success(), "enumerate exited nonzero")?;
    ensure(text.starts_with("|X^m| = 4\n"), format!("enumerate printed {text:?}"))?;
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!(
        "|X^m| = 4, n^c = 4, n^z = l, |C^m| = l-1 ({:?})",
        start.elapsed()
    ))
}

fn mlp_neighborhoods() -> Outcome {
    let start = Instant::now();
    let problem = Problem::mlp_with_layers(0, 3).map_err(|e| e.to_string())?;
    let d = &problem.domain;
    let hooks = HookRegistry::default();
    let other = |o: &str| if o == "Adam" { "ASGD" } else { "Adam" };
    for l in 0..=3i64 {
        for o in ["Adam", "ASGD"] {
            let ls = l.to_string();
            let xm = d.meta_from_labels(&[("o", o), ("l", &ls)]).map_err(|e| e.to_string())?;
            let p = d.complete_point(&xm, &BTreeMap::new()).map_err(|e| e.to_string())?;
            let got: Vec<(i64, String)> = meta_neighbors(&problem.neighborhoods.meta, d, &p, &hooks)
                .iter()
                .map(|m| meta_pair(d, m))
                .collect();
            let ob = other(o).to_string();
            let o = o.to_string();
            let want: Vec<(i64, String)> = match l {
                0 => vec![(l + 1, o.clone()), (l, ob.clone()), (l + 1, ob)],
                3 => vec![(l - 1, o.clone()), (l, ob.clone()), (l - 1, ob)],
                _ => vec![
                    (l + 1, o.clone()),
                    (l - 1, o.clone()),
                    (l, ob.clone()),
                    (l + 1, ob.clone()),
                    (l - 1, ob),
                ],
            };
            ensure(got == want, format!("l={l}, o={o}: got {got:?}, want {want:?}"))?;
        }
    }
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!(
        "3 / 3 / 5 neighbors, rule order matches ({:?})",
        start.elapsed()
    ))
}

/// Every point of the toy domain, built from labels.
fn toy_points(d: &Domain) -> Vec<Point> {
    let mut out = Vec::new();
    for s in ["small", "medium", "large"] {
        for k in 0..=4 {
            for p in ["p1", "p2"] {
                let j = serde_json::json!({"meta": {"m": "A"}, "categorical": {"p": p, "s": s}, "standard": {"k": k}});
                out.push(d.point_from_json(&j).unwrap());
            }
            for q in ["q1", "q2", "q3", "q4"] {
                let j = serde_json::json!({"meta": {"m": "B"}, "categorical": {"q": q, "s": s}, "standard": {"k": k}});
                out.push(d.point_from_json(&j).unwrap());
            }
        }
    }
    out
}

fn brute_force() -> Outcome {
    let start = Instant::now();
    let problem = Problem::toy();
    let points = toy_points(&problem.domain);
    ensure(points.len() == 90, format!("|domain| = {}", points.len()))?;
    let oracle = Evaluator::new(&problem, points.len()).map_err(|e| e.to_string())?;
    let mut best = f64::INFINITY;
    for p in &points {
        let r = oracle.evaluate(p).map_err(|e| e.to_string())?;
        let k = p.standard["k"];
        let is_b = problem.domain.render_meta(&p.meta) == "(m=B)";
        let feasible = !is_b || k <= 3.0;
        ensure(r.feasible == feasible, format!("feasibility mismatch at {p:?}"))?;
        if feasible {
            best = best.min(r.objective);
        }
    }
    let budget = 120;
    let ds = run_direct_search(
        &problem,
        &SearchConfig {
            budget,
            ..SearchConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let ds_best = ds.best.barrier();
    let bo = bo::run_bo(
        &problem,
        &BoConfig {
            budget,
            ..BoConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let bo_best = bo.best.map(|r| r.objective).unwrap_or(f64::INFINITY);
    ensure(ds_best == best, format!("direct search {ds_best}, oracle {best}"))?;
    ensure(bo_best == best, format!("BO {bo_best}, oracle {best}"))?;
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!(
        "oracle {best}, direct {ds_best}, BO {bo_best} ({:?})",
        start.elapsed()
    ))
}

fn random_mlp_point(d: &Domain, metas: &[MetaComponent], rng: &mut ChaCha8Rng) -> Point {
    let xm = &metas[rng.gen_range(0..metas.len())];
    design::uniform_point(d, xm, rng).unwrap()
}

fn random_config(d: &Domain, rng: &mut ChaCha8Rng) -> KernelConfig {
    let mut cfg = KernelConfig {
        signal_variance: rng.gen_range(0.1..10.0),
        ..KernelConfig::default()
    };
    for s in d.variables() {
        let id = s.id.clone();
        use mixopt::domain::VarType::*;
        match s.var_type {
            MetaCategorical => {
                cfg.meta.insert(id, rng.gen_range(0.0..0.99));
            }
            MetaInteger | MetaContinuous => {
                cfg.meta.insert(id, rng.gen_range(1e-3..1e3));
            }
            Nominal => {
                cfg.nominal.insert(id, rng.gen_range(0.0..0.99));
            }
            Ordinal => {
                cfg.ordinal.insert(id, rng.gen_range(1e-2..1e2));
            }
            Integer => {
                cfg.integer.insert(id, rng.gen_range(1e-3..1e3));
            }
            Continuous => {
                cfg.continuous.insert(id, rng.gen_range(1e-3..1e3));
            }
        }
    }
    cfg
}

fn kernel_properties() -> Outcome {
    let start = Instant::now();
    let problem = Problem::mlp();
    let d = &problem.domain;
    let metas = d.enumerate_meta_set().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let default = KernelConfig::default();
    for i in 0..200 {
        let cfg = if i % 2 == 0 {
            default.clone()
        } else {
            random_config(d, &mut rng)
        };
        let k = CompiledKernel::new(d, &cfg);
        let sf2 = cfg.signal_variance;
        let x = features(d, &random_mlp_point(d, &metas, &mut rng));
        let y = features(d, &random_mlp_point(d, &metas, &mut rng));
        let (kxy, kyx) = (k.eval(&x, &y), k.eval(&y, &x));
        ensure((kxy - kyx).abs() <= 1e-12, format!("asymmetry {}", (kxy - kyx).abs()))?;
        ensure((0.0..=sf2).contains(&kxy), format!("k = {kxy} outside [0, {sf2}]"))?;
        ensure((k.eval(&x, &x) - sf2).abs() <= 1e-12 * sf2, "k(x,x) != sigma_f^2")?;
    }
    let pts: Vec<Point> = (0..20).map(|_| random_mlp_point(d, &metas, &mut rng)).collect();
    let min_eig = gram_min_eigenvalue(d, &default, &pts);
    let high_c = KernelConfig {
        meta: [("o".to_string(), 0.5), ("l".to_string(), 1.0)].into(),
        ..KernelConfig::default()
    };
    let min_eig_high = gram_min_eigenvalue(d, &high_c, &pts);
    let samples: Vec<(Point, f64)> = pts.iter().map(|p| (p.clone(), 0.0)).collect();
    let model = GpModel::fit(d, &samples, &default).map_err(|e| e.to_string())?;
    let after = min_eig + model.jitter();
    ensure(after >= 0.0, format!("min eigenvalue after jitter {after}"))?;
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!(
        "symmetry and bounds on 200 pairs; min eig default {min_eig:.3e} (>= -1e-8: {}), meta c=0.5 {min_eig_high:.3e} (report only), after jitter {after:.3e} ({:?})",
        min_eig >= -1e-8,
        start.elapsed()
    ))
}

fn interpolation() -> Outcome {
    let start = Instant::now();
    let problem = Problem::mlp();
    let d = &problem.domain;
    let ev = Evaluator::new(&problem, 15).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let metas = d.enumerate_meta_set().unwrap();
    let mut samples = Vec::new();
    while samples.len() < 15 {
        let p = random_mlp_point(d, &metas, &mut rng);
        let r = ev.evaluate(&p).map_err(|e| e.to_string())?;
        samples.push((p, r.objective));
    }
    let (cfg, _) = fit_hyperparameters(d, &samples, &KernelConfig::default(), 0).map_err(|e| e.to_string())?;
    let model = GpModel::fit(d, &samples, &cfg).map_err(|e| e.to_string())?;
    let sf2 = cfg.signal_variance;
    let (mut worst_mean, mut worst_var) = (0.0f64, 0.0f64);
    for (p, f) in &samples {
        let (m, v) = model.predict(d, p);
        worst_mean = worst_mean.max((m - f).abs() / (1.0 + f.abs()));
        worst_var = worst_var.max(v / sf2);
    }
    ensure(worst_mean <= 1e-6, format!("mean error {worst_mean:.3e} (relative)"))?;
    ensure(worst_var <= 1e-8, format!("variance {worst_var:.3e} sigma_f^2"))?;
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!(
        "max |f^-f|/(1+|f|) = {worst_mean:.2e}, max var = {worst_var:.2e} sigma_f^2, jitter {:.1e} ({:?})",
        model.jitter(),
        start.elapsed()
    ))
}

fn ei_values() -> Outcome {
    let a = expected_improvement(0.0, 1.0, 0.0);
    let b = expected_improvement(0.0, 1.0, 1.0);
    ensure((a - 0.3989423).abs() <= 1e-6, format!("EI(0,1) = {a}"))?;
    ensure((b - 1.0833154).abs() <= 1e-6, format!("EI(1,1) = {b}"))?;
    for (mean, f_star) in [(0.0, 1.0), (1.0, 0.0), (2.5, 2.5)] {
        let e = expected_improvement(mean, 0.0, f_star);
        ensure(e == f64::max(f_star - mean, 0.0), format!("EI(sigma=0) = {e}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..10 {
        let mean: f64 = rng.gen_range(-3.0..3.0);
        let f_star: f64 = rng.gen_range(-3.0..3.0);
        let s: f64 = rng.gen_range(0.05..3.0);
        let h = 1e-4;
        let (hi, lo) = (
            expected_improvement(mean, s + h, f_star),
            expected_improvement(mean, s - h, f_star),
        );
        let slope = (hi - lo) / (2.0 * h);
        // Central differences carry roundoff of a few ulps of EI over 2h.
        let noise = 8.0 * f64::EPSILON * hi.abs().max(1.0) / (2.0 * h);
        ensure(
            slope >= -noise,
            format!("dEI/dsigma = {slope} at mean {mean}, f* {f_star}, sigma {s}"),
        )?;
    }
    Ok("0.3989423, 1.0833154, sigma=0 exact, monotone in sigma at 10 settings".into())
}

fn convergence() -> Outcome {
    let problem = Problem::mlp();
    let start = Instant::now();
    let ds = run_direct_search(
        &problem,
        &SearchConfig {
            budget: 2000,
            seed: 0,
            ..SearchConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let ds_time = start.elapsed();
    let ds_best = ds.best.barrier();
    ensure(ds_best <= 0.05, format!("direct search reached {ds_best}"))?;
    within(ds_time, Duration::from_secs(120))?;

    let start = Instant::now();
    let bo = bo::run_bo(
        &problem,
        &BoConfig {
            budget: 150,
            seed: 0,
            ..BoConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let bo_time = start.elapsed();
    let bo_best = bo.best.map(|r| r.objective).unwrap_or(f64::INFINITY);
    let rs = run_random_search(&problem, 150, 0).map_err(|e| e.to_string())?;
    let rs_best = rs.best.map(|r| r.objective).unwrap_or(f64::INFINITY);
    ensure(bo_best <= rs_best, format!("BO {bo_best} worse than random {rs_best}"))?;
    within(bo_time, Duration::from_secs(120))?;
    Ok(format!(
        "direct {ds_best:.3e} <= 0.05 ({ds_time:?}); BO {bo_best:.4} <= random {rs_best:.4} ({bo_time:?})"
    ))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = env!("CARGO_MANIFEST_DIR");
    let runs: [(&str, &str, &str); 3] = [("mlp", "direct", "400"), ("mlp", "bo", "45"), ("toy", "bo", "40")];
    for (name, solver, budget) in runs {
        let mut outputs = Vec::new();
        for i in 0..2 {
            let path = dir.path().join(format!("{name}-{solver}-{i}.csv"));
            let status = Command::new(env!("CARGO_BIN_EXE_mixopt"))
                .args(["solve", &format!("{root}/problems/{name}.json"), "--solver", solver])
                .args(["--budget", budget, "--seed", "3", "--quiet", "--out"])
                .arg(&path)
                .output()
                .map_err(|e| e.to_string())?
                .status;
            ensure(status.success(), format!("solve {name} {solver} exited {status}"))?;
            outputs.push(std::fs::read(&path).map_err(|e| e.to_string())?);
        }
        ensure(outputs[0] == outputs[1], format!("{name} {solver}: histories differ"))?;
    }
    Ok("identical history CSVs for mlp/direct, mlp/bo, toy/bo".into())
}

fn accounting() -> Outcome {
    let start = Instant::now();
    let problem = Problem::toy();
    let d = &problem.domain;
    let points = toy_points(d);
    let ev = Evaluator::new(&problem, 2).unwrap();
    ev.evaluate(&points[0]).map_err(|e| e.to_string())?;
    let again = ev.evaluate(&points[0]).map_err(|e| e.to_string())?;
    ensure(again.cached, "duplicate not served from cache")?;
    ensure(
        ev.history().len() == 2 && ev.budget().used == 1,
        "duplicate consumed budget",
    )?;
    ev.evaluate(&points[1]).map_err(|e| e.to_string())?;
    match ev.evaluate(&points[2]) {
        Err(EvalError::BudgetExhausted(2)) => {}
        other => return Err(format!("expected budget exhaustion, got {other:?}")),
    }
    ensure(
        ev.budget().used == 2 && ev.history().len() == 3,
        "exhaustion changed accounting",
    )?;
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!(
        "history 3, budget 2, exhaustion reported ({:?})",
        start.elapsed()
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 mlp structure", mlp_structure),
        ("2 mlp neighborhoods", mlp_neighborhoods),
        ("3 brute-force oracle", brute_force),
        ("4 kernel properties", kernel_properties),
        ("5 gp interpolation", interpolation),
        ("6 expected improvement", ei_values),
        ("7 proxy convergence", convergence),
        ("8 determinism", determinism),
        ("9 cache and budget", accounting),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
