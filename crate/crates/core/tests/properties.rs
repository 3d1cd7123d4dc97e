use std::collections::{BTreeMap, BTreeSet};

use mixopt::bo::{
    decode, design, encode, expected_improvement, maximize_acquisition, AcquisitionConfig, ConstraintSurrogates,
    EncoderKind,
};
use mixopt::constraints::ConstraintSystem;
use mixopt::direct_search::{run_direct_search, run_direct_search_with, SearchConfig};
use mixopt::domain::{Domain, MetaComponent, Point, Role, TypeGroup};
use mixopt::gp::{features, CompiledKernel, GpModel, KernelConfig};
use mixopt::neighborhood::{categorical_neighbors, meta_neighbors, realize_neighbor, HookRegistry};
use mixopt::problem::Problem;
use mixopt::runtime::{cache_key, history_csv, read_history, Evaluator};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn problems() -> Vec<Problem> {
    vec![Problem::mlp(), Problem::toy(), Problem::mlp_with_layers(0, 4).unwrap()]
}

fn random_point(d: &Domain, rng: &mut ChaCha8Rng) -> Point {
    let metas = d.enumerate_meta_set().unwrap();
    let xm = &metas[rng.gen_range(0..metas.len())];
    design::uniform_point(d, xm, rng).unwrap()
}

#[test]
fn acting_sets_partition_the_variables() {
    for problem in problems() {
        let d = &problem.domain;
        for xm in d.enumerate_meta_set().unwrap() {
            let mut seen = BTreeSet::new();
            for g in [TypeGroup::Meta, TypeGroup::Categorical, TypeGroup::Standard] {
                for i in d.acting_positions(&xm, g).unwrap() {
                    assert!(seen.insert(i), "position {i} in two groups");
                    assert_eq!(d.variables()[i].var_type.is_meta(), g == TypeGroup::Meta);
                }
            }
            for (i, s) in d.variables().iter().enumerate() {
                assert!(
                    seen.contains(&i) != (s.role == Role::Decreed && !s.decree.holds(&xm)),
                    "{} misclassified",
                    s.id
                );
            }
            assert_eq!(
                d.dimension(&xm, TypeGroup::Standard).unwrap(),
                d.dimension(&xm, TypeGroup::Standard).unwrap()
            );
        }
    }
}

#[test]
fn default_completion_is_in_the_domain() {
    for problem in problems() {
        let d = &problem.domain;
        for xm in d.enumerate_meta_set().unwrap() {
            let p = d.complete_point(&xm, &BTreeMap::new()).unwrap();
            assert!(d.contains(&p), "{}", d.render_meta(&xm));
        }
    }
}

#[test]
fn acting_decreed_constraints_are_decreed() {
    for problem in problems() {
        let cs = &problem.constraints;
        for xm in problem.domain.enumerate_meta_set().unwrap() {
            for c in cs.acting_decreed_constraints(&xm) {
                assert_eq!(c.role, Role::Decreed);
            }
        }
    }
}

#[test]
fn encode_decode_round_trip_on_mlp() {
    let problem = Problem::mlp();
    let d = &problem.domain;
    for xm in d.enumerate_meta_set().unwrap() {
        let base = d.complete_point(&xm, &BTreeMap::new()).unwrap();
        let mut components = vec![BTreeMap::new()];
        for i in d.acting_positions(&xm, TypeGroup::Categorical).unwrap() {
            let s = &d.variables()[i];
            let n = s.scope.n_categories().unwrap();
            components = components
                .into_iter()
                .flat_map(|c: BTreeMap<String, u32>| {
                    (1..=n).map(move |k| {
                        let mut c = c.clone();
                        c.insert(s.id.clone(), k);
                        c
                    })
                })
                .collect();
        }
        assert_eq!(components.len(), 2);
        for xq in components {
            for kind in [EncoderKind::Identity, EncoderKind::OneHot, EncoderKind::OrdinalIndex] {
                let lq = encode(kind, d, &xq, &xm).unwrap();
                assert_eq!(decode(kind, d, &lq, &xm).unwrap(), xq, "{kind:?}");
            }
        }
        assert_eq!(base.meta, xm);
    }
}

#[test]
fn encode_decode_round_trip_on_toy() {
    let problem = Problem::toy();
    let d = &problem.domain;
    for xm in d.enumerate_meta_set().unwrap() {
        let positions = d.acting_positions(&xm, TypeGroup::Categorical).unwrap();
        let sizes: Vec<u32> = positions
            .iter()
            .map(|&i| d.variables()[i].scope.n_categories().unwrap())
            .collect();
        let total: u32 = sizes.iter().product();
        for mut code in 0..total {
            let mut xq = BTreeMap::new();
            for (&i, &n) in positions.iter().zip(&sizes) {
                xq.insert(d.variables()[i].id.clone(), code % n + 1);
                code /= n;
            }
            for kind in [EncoderKind::Identity, EncoderKind::OneHot, EncoderKind::OrdinalIndex] {
                let lq = encode(kind, d, &xq, &xm).unwrap();
                assert_eq!(decode(kind, d, &lq, &xm).unwrap(), xq, "{kind:?}");
            }
        }
    }
}

#[test]
fn direct_search_incumbent_never_increases() {
    for (problem, budget) in [(Problem::mlp(), 600), (Problem::toy(), 90)] {
        for opportunistic in [true, false] {
            let ev = Evaluator::new(&problem, budget).unwrap();
            let cfg = SearchConfig {
                budget,
                opportunistic,
                ..SearchConfig::default()
            };
            let mut incumbents = Vec::new();
            let out =
                run_direct_search_with(&ev, &cfg, &HookRegistry::default(), |r| incumbents.push(r.incumbent)).unwrap();
            assert!(incumbents.windows(2).all(|w| w[1] <= w[0]), "{incumbents:?}");
            assert!(out.history.iter().all(|r| problem.domain.contains(&r.point)));
            assert!(ev.budget().used <= budget);
        }
    }
}

#[test]
fn direct_search_history_is_deterministic() {
    let problem = Problem::mlp();
    let cfg = SearchConfig {
        budget: 300,
        seed: 11,
        ..SearchConfig::default()
    };
    let a = run_direct_search(&problem, &cfg).unwrap();
    let b = run_direct_search(&problem, &cfg).unwrap();
    assert_eq!(history_csv(&problem, &a.history), history_csv(&problem, &b.history));
}

#[test]
fn history_replay_is_bit_identical() {
    let problem = Problem::mlp();
    let out = run_direct_search(
        &problem,
        &SearchConfig {
            budget: 200,
            ..SearchConfig::default()
        },
    )
    .unwrap();
    let text = history_csv(&problem, &out.history);
    let rows = read_history(&problem, &text).unwrap();
    assert_eq!(rows.len(), out.history.len());
    let ev = Evaluator::new(&problem, rows.len()).unwrap();
    for (row, rec) in rows.iter().zip(&out.history) {
        assert_eq!(row.point, rec.point);
        assert_eq!(row.objective.to_bits(), rec.objective.to_bits());
        let again = ev.evaluate(&row.point).unwrap();
        assert_eq!(again.objective.to_bits(), rec.objective.to_bits());
        for (id, v) in &rec.constraints {
            assert_eq!(again.constraints[id].to_bits(), v.to_bits());
            assert_eq!(row.constraints[id].to_bits(), v.to_bits());
        }
    }
    let fresh = ev.history().iter().filter(|r| !r.cached).count();
    assert_eq!(ev.budget().used, fresh);
}

#[test]
fn acquisition_candidates_are_in_the_domain() {
    for problem in [Problem::mlp(), Problem::toy()] {
        let d = &problem.domain;
        let ev = Evaluator::new(&problem, 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut samples = Vec::new();
        while samples.len() < 12 {
            let p = random_point(d, &mut rng);
            let r = ev.evaluate(&p).unwrap();
            if !r.cached {
                samples.push((p, r.objective));
            }
        }
        let model = GpModel::fit(d, &samples, &KernelConfig::default()).unwrap();
        let surrogates = ConstraintSurrogates {
            system: &problem.constraints,
            models: BTreeMap::new(),
        };
        let f_star = samples.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
        let cfg = AcquisitionConfig {
            inner_evaluations: 40,
            ..AcquisitionConfig::default()
        };
        let cand = maximize_acquisition(
            d,
            &model,
            &surrogates,
            f_star,
            &|p: &Point| ev.is_cached(p),
            &[],
            &cfg,
            &mut rng,
        )
        .unwrap()
        .unwrap();
        assert!(d.contains(&cand.point));
        assert!(!ev.is_cached(&cand.point));
        assert!(cand.acquisition >= 0.0);
    }
}

fn reorder(p: &Point) -> Point {
    let mut q = Point::new(MetaComponent::new());
    let meta: Vec<_> = p.meta.iter().collect();
    for (id, v) in meta.into_iter().rev() {
        q.meta.insert(id, v);
    }
    for (id, v) in p.categorical.iter().rev() {
        q.categorical.insert(id.clone(), *v);
    }
    for (id, v) in p.standard.iter().rev() {
        q.standard.insert(id.clone(), *v);
    }
    q
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_is_symmetric_and_bounded(seed in any::<u64>(), sf2 in 0.01f64..100.0, c in 0.0f64..0.99) {
        let problem = Problem::mlp();
        let d = &problem.domain;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = KernelConfig {
            signal_variance: sf2,
            nominal: [("a".to_string(), c)].into(),
            meta: [("o".to_string(), c)].into(),
            ..KernelConfig::default()
        };
        let k = CompiledKernel::new(d, &cfg);
        let x = features(d, &random_point(d, &mut rng));
        let y = features(d, &random_point(d, &mut rng));
        let (a, b) = (k.eval(&x, &y), k.eval(&y, &x));
        prop_assert!((a - b).abs() <= 1e-12 * sf2.max(1.0));
        prop_assert!(a >= 0.0 && a <= sf2 * (1.0 + 1e-15));
        prop_assert!((k.eval(&x, &x) - sf2).abs() <= 1e-12 * sf2);
    }

    #[test]
    fn cache_key_ignores_insertion_order(seed in any::<u64>()) {
        for problem in [Problem::mlp(), Problem::toy()] {
            let d = &problem.domain;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_point(d, &mut rng);
            let q = reorder(&p);
            prop_assert_eq!(cache_key(d, &p), cache_key(d, &q));
            let ev = Evaluator::new(&problem, 2).unwrap();
            let a = ev.evaluate(&p).unwrap();
            let b = ev.evaluate(&q).unwrap();
            prop_assert!(b.cached);
            prop_assert_eq!(a.objective.to_bits(), b.objective.to_bits());
            prop_assert_eq!(ev.budget().used, 1);
        }
    }

    #[test]
    fn ei_is_nonnegative_and_increasing_in_sigma(
        mean in -5.0f64..5.0,
        f_star in -5.0f64..5.0,
        sigma in 0.05f64..5.0,
    ) {
        let e = expected_improvement(mean, sigma, f_star);
        prop_assert!(e >= 0.0);
        prop_assert!(e >= (f_star - mean).max(0.0));
        let z = (f_star - mean) / sigma;
        // Outside this band the derivative falls below double precision.
        if z.abs() < 6.0 {
            prop_assert!(expected_improvement(mean, sigma + 1e-4, f_star) > e);
        }
        prop_assert_eq!(expected_improvement(mean, 0.0, f_star), (f_star - mean).max(0.0));
    }

    #[test]
    fn neighbors_stay_in_the_domain(seed in any::<u64>()) {
        let hooks = HookRegistry::default();
        for problem in problems() {
            let d = &problem.domain;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_point(d, &mut rng);
            let metas = meta_neighbors(&problem.neighborhoods.meta, d, &p, &hooks);
            prop_assert_eq!(&metas, &meta_neighbors(&problem.neighborhoods.meta, d, &p, &hooks));
            let mut targets = metas.clone();
            targets.push(p.meta.clone());
            for tm in &metas {
                prop_assert!(d.validate_meta(tm).is_ok());
                prop_assert!(*tm != p.meta);
            }
            for tm in &targets {
                let cats = categorical_neighbors(problem.neighborhoods.categorical.as_ref(), d, &p, tm, &hooks);
                for tq in &cats {
                    let q = realize_neighbor(d, &p, tm, tq).unwrap();
                    prop_assert!(d.contains(&q));
                }
            }
        }
    }

    #[test]
    fn removing_a_constraint_keeps_feasible_points_feasible(seed in any::<u64>(), drop in 0usize..3) {
        let problem = Problem::mlp();
        let d = &problem.domain;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_point(d, &mut rng);
        let ev = Evaluator::new(&problem, 1).unwrap();
        let r = ev.evaluate(&p).unwrap();
        let mut kept = problem.constraints.constraints().to_vec();
        kept.remove(drop);
        let smaller = ConstraintSystem::new(kept, d).unwrap();
        let sub = smaller.is_feasible(&p, &r.constraints).unwrap();
        prop_assert!(!r.feasible || sub);
    }

    #[test]
    fn gp_interpolates_and_variance_is_nonnegative(seed in any::<u64>()) {
        let problem = Problem::mlp();
        let d = &problem.domain;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ev = Evaluator::new(&problem, 10).unwrap();
        let mut samples = Vec::new();
        while samples.len() < 10 {
            let p = random_point(d, &mut rng);
            let r = ev.evaluate(&p).unwrap();
            if !r.cached {
                samples.push((p, r.objective));
            }
        }
        let model = GpModel::fit(d, &samples, &KernelConfig::default()).unwrap();
        let f_min = samples.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
        for (p, f) in &samples {
            let (m, v) = model.predict_raw_features(&features(d, p));
            prop_assert!((m - f).abs() <= 1e-6 * (1.0 + f.abs()));
            prop_assert!(v >= -1e-8);
            prop_assert!(expected_improvement(m, v.max(0.0).sqrt(), f_min) <= 1e-4);
        }
        let probe = random_point(d, &mut rng);
        let (_, v) = model.predict(d, &probe);
        prop_assert!(v >= 0.0);
    }
}
