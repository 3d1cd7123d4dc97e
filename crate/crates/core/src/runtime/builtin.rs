use std::collections::BTreeMap;

use serde::Deserialize;

use super::{Blackbox, BlackboxOutput, EvalError};
use crate::domain::{Domain, Point, Value};

/// Cheap synthetic stand-in for MLP training.
///
/// `f = base(o) + gap(a) + sum_i ((u_i - t_i) / scale)^2 + sum_j (z_j - z*_j)^2`
/// where `z_j` are the continuous hyperparameters in normalized coordinates
/// and the targets `z*` depend on the optimizer.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpProxy {
    pub optimizer: String,
    pub activation: String,
    pub base: BTreeMap<String, f64>,
    pub gap: BTreeMap<String, f64>,
    pub unit_scale: f64,
    pub unit_targets: BTreeMap<String, f64>,
    pub targets: BTreeMap<String, BTreeMap<String, f64>>,
}

impl MlpProxy {
    pub fn from_params(params: &serde_json::Value, domain: &Domain) -> Result<Self, EvalError> {
        let proxy: MlpProxy = serde_json::from_value(params.clone()).map_err(|e| EvalError::Params(e.to_string()))?;
        for id in [&proxy.optimizer, &proxy.activation] {
            if domain.variable(id).and_then(|s| s.scope.n_categories()).is_none() {
                return Err(EvalError::Params(format!("{id:?} is not a categorical variable")));
            }
        }
        if proxy.unit_scale.is_nan() || proxy.unit_scale <= 0.0 {
            return Err(EvalError::Params("unit_scale must be positive".into()));
        }
        Ok(proxy)
    }

    fn label<'d>(&self, domain: &'d Domain, p: &Point, id: &str) -> Result<&'d str, EvalError> {
        let spec = domain.variable(id).expect("checked at construction");
        let c = match domain.value_of(p, id) {
            Some(Value::Category(c)) => c,
            _ => return Err(EvalError::Blackbox(format!("{id} has no categorical value"))),
        };
        Ok(spec.scope.category_label(c).unwrap_or_default())
    }
}

impl Blackbox for MlpProxy {
    fn evaluate(&self, domain: &Domain, p: &Point) -> Result<BlackboxOutput, EvalError> {
        let o = self.label(domain, p, &self.optimizer)?;
        let a = self.label(domain, p, &self.activation)?;
        let lookup = |table: &BTreeMap<String, f64>, key: &str| {
            table
                .get(key)
                .copied()
                .ok_or_else(|| EvalError::Params(format!("no entry for {key:?}")))
        };
        let mut f = lookup(&self.base, o)? + lookup(&self.gap, a)?;
        let targets = self
            .targets
            .get(o)
            .ok_or_else(|| EvalError::Params(format!("no targets for {o:?}")))?;
        for spec in domain.variables() {
            let Some(&v) = p.standard.get(&spec.id) else {
                continue;
            };
            if let Some(t) = self.unit_targets.get(&spec.id) {
                f += ((v - t) / self.unit_scale).powi(2);
            } else {
                let t = lookup(targets, &spec.id)?;
                f += (spec.scope.normalize(v) - t).powi(2);
            }
        }
        Ok(BlackboxOutput {
            objective: f,
            constraints: BTreeMap::new(),
        })
    }
}

/// Fixed discrete test function over the toy problem's variables
/// `m, p, q, s, k`. All 90 domain points have distinct values.
#[derive(Debug, Clone, Copy, Default)]
pub struct ToyDiscrete;

impl ToyDiscrete {
    pub fn value(branch: u32, k: i64) -> f64 {
        let b = branch as f64;
        let offset = 0.25 * ((7 * branch + 5) % 18) as f64 + 0.0007 * b;
        let k_star = ((3 * branch + 1) % 5) as f64;
        let k = k as f64;
        offset + 0.1 * (k - k_star).powi(2) + 0.003 * k
    }
}

impl Blackbox for ToyDiscrete {
    fn evaluate(&self, domain: &Domain, p: &Point) -> Result<BlackboxOutput, EvalError> {
        let get = |id: &str| match domain.value_of(p, id) {
            Some(Value::Category(c)) => Ok(c),
            _ => Err(EvalError::Blackbox(format!("missing categorical {id}"))),
        };
        let s = get("s")?;
        let branch = match get("m")? {
            1 => (get("p")? - 1) * 3 + (s - 1),
            _ => 6 + (get("q")? - 1) * 3 + (s - 1),
        };
        let k = p
            .standard
            .get("k")
            .ok_or_else(|| EvalError::Blackbox("missing k".into()))?;
        Ok(BlackboxOutput {
            objective: ToyDiscrete::value(branch, *k as i64),
            constraints: BTreeMap::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Problem;
    use serde_json::json;

    #[test]
    fn mlp_proxy_is_zero_at_the_adam_target() {
        let problem = Problem::mlp();
        let proxy = MlpProxy::from_params(
            match &problem.blackbox {
                crate::problem::BlackboxBinding::Builtin { params, .. } => params,
                _ => unreachable!(),
            },
            &problem.domain,
        )
        .unwrap();
        let p = problem
            .domain
            .point_from_json(&json!({
                "meta": {"o": "Adam", "l": 3},
                "categorical": {"a": "ReLU"},
                "standard": {"u1": 150, "u2": 120, "u3": 110, "r": 0.3, "beta1": 0.9, "beta2": 0.95, "eps": 0.1}
            }))
            .unwrap();
        assert_eq!(proxy.evaluate(&problem.domain, &p).unwrap().objective, 0.0);
        let mut q = p.clone();
        q.categorical.insert("a".into(), 2);
        q.standard.insert("u1".into(), 250.0);
        let f = proxy.evaluate(&problem.domain, &q).unwrap().objective;
        assert!((f - 1.1).abs() < 1e-12);
    }

    #[test]
    fn mlp_proxy_rejects_bad_params() {
        let problem = Problem::mlp();
        let err = MlpProxy::from_params(&json!({"optimizer": "o"}), &problem.domain).unwrap_err();
        assert!(matches!(err, EvalError::Params(_)));
    }

    #[test]
    fn toy_values_are_distinct() {
        let mut all: Vec<f64> = (0..18)
            .flat_map(|b| (0..=4).map(move |k| ToyDiscrete::value(b, k)))
            .collect();
        all.sort_by(f64::total_cmp);
        assert!(all.windows(2).all(|w| w[1] - w[0] > 1e-6));
    }
}
