use std::collections::BTreeMap;

use rand::Rng;

use crate::constraints::{ConstraintBody, ConstraintSystem, ConstraintValues};
use crate::domain::{Domain, DomainError, MetaComponent, Point, Scope, TypeGroup};
use crate::gp::{features, GpModel};

/// `(f* - mean) Phi(z) + sigma phi(z)` with `z = (f* - mean) / sigma`, and
/// its limit `max(f* - mean, 0)` when `sigma = 0`.
pub fn expected_improvement(mean: f64, sigma: f64, f_star: f64) -> f64 {
    let d = f_star - mean;
    if sigma <= 0.0 {
        return d.max(0.0);
    }
    let z = d / sigma;
    let ei = d * normal_cdf(z) + sigma * normal_pdf(z);
    ei.max(0.0)
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Surrogates for the constraints: analytic bodies are evaluated exactly,
/// blackbox bodies through the posterior mean of their GP.
pub struct ConstraintSurrogates<'a> {
    pub system: &'a ConstraintSystem,
    pub models: BTreeMap<String, GpModel>,
}

impl ConstraintSurrogates<'_> {
    /// Predicted values of every acting constraint at `p`.
    pub fn predict(&self, p: &Point, feats: &[f64]) -> ConstraintValues {
        let mut out = ConstraintValues::new();
        for c in self.system.acting(&p.meta) {
            let v = match &c.body {
                ConstraintBody::Analytic { .. } => c.evaluate_analytic(p).unwrap_or(f64::INFINITY),
                ConstraintBody::Blackbox => self.models.get(&c.id).map_or(0.0, |m| m.mean_features(feats)),
            };
            out.insert(c.id.clone(), v);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionConfig {
    pub starts: usize,
    /// Categorical components enumerated per meta component before sampling.
    pub enumeration_limit: usize,
    /// Integer-only standard grids up to this size are enumerated exactly.
    pub grid_limit: usize,
    /// EI evaluations per pattern-search start.
    pub inner_evaluations: usize,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        AcquisitionConfig {
            starts: 5,
            enumeration_limit: 256,
            grid_limit: 4096,
            inner_evaluations: 150,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryCandidate {
    pub point: Point,
    pub acquisition: f64,
    pub predicted_constraints: ConstraintValues,
    /// False when no surrogate-feasible candidate existed and the best EI
    /// point was returned instead.
    pub surrogate_feasible: bool,
    /// Position of the meta component in the enumeration of `X^m`.
    pub meta_index: usize,
}

#[derive(Clone)]
struct Scored {
    point: Point,
    ei: f64,
    violation: f64,
    predicted: ConstraintValues,
    meta_index: usize,
}

impl Scored {
    /// Feasible candidates rank by EI; infeasible ones by negated violation.
    fn score(&self) -> f64 {
        if self.violation <= 0.0 {
            self.ei
        } else {
            -1.0 - self.violation
        }
    }
}

struct Search<'a, E: Fn(&Point) -> bool> {
    domain: &'a Domain,
    model: &'a GpModel,
    surrogates: &'a ConstraintSurrogates<'a>,
    excluded: &'a E,
    f_star: f64,
    best_feasible: Option<Scored>,
    best_any: Option<Scored>,
}

impl<E: Fn(&Point) -> bool> Search<'_, E> {
    fn score(&mut self, p: Point, meta_index: usize) -> Option<f64> {
        if (self.excluded)(&p) {
            return None;
        }
        let f = features(self.domain, &p);
        let (mean, var) = self.model.predict_features(&f);
        let ei = expected_improvement(mean, var.sqrt(), self.f_star);
        let predicted = self.surrogates.predict(&p, &f);
        let violation = predicted.values().map(|v| v.max(0.0)).sum::<f64>();
        let s = Scored {
            point: p,
            ei,
            violation,
            predicted,
            meta_index,
        };
        let score = s.score();
        if s.violation <= 0.0 && self.best_feasible.as_ref().is_none_or(|b| s.ei > b.ei) {
            self.best_feasible = Some(s.clone());
        }
        if self.best_any.as_ref().is_none_or(|b| s.ei > b.ei) {
            self.best_any = Some(s);
        }
        Some(score)
    }
}

/// Every categorical component of `X^q(xm)`, or `limit` uniform samples of it
/// when it is larger.
pub fn categorical_components(
    domain: &Domain,
    xm: &MetaComponent,
    limit: usize,
    rng: &mut impl Rng,
) -> Result<Vec<BTreeMap<String, u32>>, DomainError> {
    let vars: Vec<(String, u32)> = domain
        .acting_positions(xm, TypeGroup::Categorical)?
        .into_iter()
        .map(|i| {
            let s = &domain.variables()[i];
            (s.id.clone(), s.scope.n_categories().expect("categorical"))
        })
        .collect();
    let total = vars.iter().try_fold(1usize, |acc, (_, n)| acc.checked_mul(*n as usize));
    match total {
        Some(t) if t <= limit => {
            let mut out = vec![BTreeMap::new()];
            for (id, n) in &vars {
                out = out
                    .into_iter()
                    .flat_map(|base| {
                        (1..=*n).map(move |c| {
                            let mut m = base.clone();
                            m.insert(id.clone(), c);
                            m
                        })
                    })
                    .collect();
            }
            Ok(out)
        }
        _ => Ok((0..limit)
            .map(|_| vars.iter().map(|(id, n)| (id.clone(), rng.gen_range(1..=*n))).collect())
            .collect()),
    }
}

/// Maximizes EI over the auxiliary domain: enumeration of meta and
/// categorical components, then a search over the standard variables.
/// Returns `None` when every candidate is excluded.
#[allow(clippy::too_many_arguments)]
pub fn maximize_acquisition(
    domain: &Domain,
    model: &GpModel,
    surrogates: &ConstraintSurrogates,
    f_star: f64,
    excluded: &impl Fn(&Point) -> bool,
    anchors: &[Point],
    cfg: &AcquisitionConfig,
    rng: &mut impl Rng,
) -> Result<Option<AuxiliaryCandidate>, DomainError> {
    let metas = domain.enumerate_meta_set()?;
    let mut search = Search {
        domain,
        model,
        surrogates,
        excluded,
        f_star,
        best_feasible: None,
        best_any: None,
    };
    for (mi, xm) in metas.iter().enumerate() {
        let std_ids: Vec<&str> = domain
            .acting_positions(xm, TypeGroup::Standard)?
            .into_iter()
            .map(|i| domain.variables()[i].id.as_str())
            .collect();
        for xq in categorical_components(domain, xm, cfg.enumeration_limit, rng)? {
            let base = Point {
                meta: xm.clone(),
                categorical: xq.clone(),
                standard: BTreeMap::new(),
            };
            if let Some(grid) = integer_grid(domain, &std_ids, cfg.grid_limit) {
                for values in grid {
                    let mut p = base.clone();
                    for (id, v) in std_ids.iter().zip(values) {
                        p.standard.insert(id.to_string(), v);
                    }
                    search.score(p, mi);
                }
                continue;
            }
            let anchor = anchors
                .iter()
                .find(|a| a.meta == *xm && a.categorical == xq)
                .map(|a| a.standard.clone());
            for s in 0..cfg.starts {
                let start: BTreeMap<String, f64> = match (s, &anchor) {
                    (0, Some(a)) => a.clone(),
                    _ => std_ids
                        .iter()
                        .map(|id| {
                            let sc = &domain.variable(id).unwrap().scope;
                            (id.to_string(), place(sc, rng.gen_range(0.0..=1.0)))
                        })
                        .collect(),
                };
                pattern_search(&mut search, domain, &base, &std_ids, start, mi, cfg.inner_evaluations);
            }
        }
    }
    let (chosen, feasible) = match (search.best_feasible, search.best_any) {
        (Some(b), _) => (b, true),
        (None, Some(b)) => (b, false),
        (None, None) => return Ok(None),
    };
    Ok(Some(AuxiliaryCandidate {
        point: chosen.point,
        acquisition: chosen.ei,
        predicted_constraints: chosen.predicted,
        surrogate_feasible: feasible,
        meta_index: chosen.meta_index,
    }))
}

/// Value at normalized position `u`, pulled inside open bounds and rounded
/// for integers.
fn place(scope: &Scope, u: f64) -> f64 {
    scope.project(scope.denormalize(u.clamp(0.0, 1.0)), 1e-9)
}

fn integer_grid(domain: &Domain, ids: &[&str], limit: usize) -> Option<Vec<Vec<f64>>> {
    let mut ranges = Vec::new();
    let mut total = 1usize;
    for id in ids {
        match domain.variable(id)?.scope {
            Scope::Integer { lo, hi } => {
                total = total.checked_mul((hi - lo + 1) as usize)?;
                ranges.push((lo, hi));
            }
            _ => return None,
        }
    }
    if total > limit {
        return None;
    }
    let mut out = vec![Vec::new()];
    for (lo, hi) in ranges {
        out = out
            .into_iter()
            .flat_map(|b| {
                (lo..=hi).map(move |v| {
                    let mut b = b.clone();
                    b.push(v as f64);
                    b
                })
            })
            .collect();
    }
    Some(out)
}

fn pattern_search<E: Fn(&Point) -> bool>(
    search: &mut Search<E>,
    domain: &Domain,
    base: &Point,
    ids: &[&str],
    start: BTreeMap<String, f64>,
    meta_index: usize,
    max_evals: usize,
) {
    let make = |vals: &BTreeMap<String, f64>| {
        let mut p = base.clone();
        p.standard = vals.clone();
        p
    };
    let mut cur = start;
    let mut cur_score = search.score(make(&cur), meta_index).unwrap_or(f64::NEG_INFINITY);
    let mut evals = 1;
    let mut steps: Vec<f64> = ids
        .iter()
        .map(|id| match domain.variable(id).unwrap().scope {
            Scope::Integer { lo, hi } => ((hi - lo) / 4).max(1) as f64,
            _ => 0.25,
        })
        .collect();
    let is_int: Vec<bool> = ids
        .iter()
        .map(|id| matches!(domain.variable(id).unwrap().scope, Scope::Integer { .. }))
        .collect();
    while evals < max_evals {
        let mut improved = false;
        'poll: for (j, id) in ids.iter().enumerate() {
            let sc = &domain.variable(id).unwrap().scope;
            for dir in [1.0, -1.0] {
                let v = cur[*id];
                let nv = if is_int[j] {
                    sc.project(v + dir * steps[j], 0.0)
                } else {
                    place(sc, sc.normalize(v) + dir * steps[j])
                };
                if nv == v {
                    continue;
                }
                let mut cand = cur.clone();
                cand.insert(id.to_string(), nv);
                evals += 1;
                if let Some(s) = search.score(make(&cand), meta_index) {
                    if s > cur_score {
                        cur = cand;
                        cur_score = s;
                        improved = true;
                        break 'poll;
                    }
                }
                if evals >= max_evals {
                    return;
                }
            }
        }
        if !improved {
            let mut refined = false;
            for (j, s) in steps.iter_mut().enumerate() {
                let floor = if is_int[j] { 1.0 } else { 1e-4 };
                if *s > floor {
                    *s = if is_int[j] { (*s * 0.5).floor() } else { *s * 0.5 }.max(floor);
                    refined = true;
                }
            }
            if !refined {
                return;
            }
        }
    }
}
