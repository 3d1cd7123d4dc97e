use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bo::encoder::EncoderKind;
use crate::domain::{Domain, Point, Scope, Value, VarType};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
}

fn same_len(a: usize, b: usize) -> Result<(), KernelError> {
    if a == b {
        Ok(())
    } else {
        Err(KernelError::Dimension(a, b))
    }
}

/// `exp(-sum_i lambda_i (x_i - y_i)^2)` on already normalized inputs.
pub fn k_continuous(x: &[f64], y: &[f64], lambda: &[f64]) -> Result<f64, KernelError> {
    same_len(x.len(), y.len())?;
    same_len(x.len(), lambda.len())?;
    let s: f64 = x
        .iter()
        .zip(y)
        .zip(lambda)
        .map(|((a, b), l)| l * (a - b) * (a - b))
        .sum();
    Ok((-s).exp())
}

/// Squared exponential on rounded values (half away from zero), so the
/// kernel is constant on each integer cell.
pub fn k_integer(x: &[f64], y: &[f64], lambda: &[f64]) -> Result<f64, KernelError> {
    let xr: Vec<f64> = x.iter().map(|v| v.round()).collect();
    let yr: Vec<f64> = y.iter().map(|v| v.round()).collect();
    k_continuous(&xr, &yr, lambda)
}

pub fn k_standard(xz: &[f64], yz: &[f64], lz: &[f64], xc: &[f64], yc: &[f64], lc: &[f64]) -> Result<f64, KernelError> {
    Ok(k_integer(xz, yz, lz)? * k_continuous(xc, yc, lc)?)
}

/// Compound-symmetry entry: 1 on the diagonal, `c` off it.
pub fn k_nominal(a: u32, b: u32, c: f64) -> f64 {
    if a == b {
        1.0
    } else {
        c
    }
}

/// `exp(-(i - j)^2 / (2 ell^2))` on 1-based level indices.
pub fn k_ordinal(i: u32, j: u32, ell: f64) -> f64 {
    let d = i as f64 - j as f64;
    (-d * d / (2.0 * ell * ell)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum CategoricalMode {
    /// Compound symmetry for nominal, index squared exponential for ordinal.
    Matrix,
    /// Squared exponential on encoded vectors.
    Encoded { encoder: EncoderKind },
}

pub const DEFAULT_WEIGHT: f64 = 1.0;
pub const DEFAULT_CORRELATION: f64 = 0.5;
pub const DEFAULT_LENGTHSCALE: f64 = 1.0;
/// Meta defaults make points with different meta components uncorrelated,
/// which keeps the default Gram matrix block diagonal and positive definite.
pub const DEFAULT_META_CORRELATION: f64 = 0.0;
pub const DEFAULT_META_WEIGHT: f64 = 1e3;
pub const JITTER: f64 = 1e-8;

/// Kernel hyperparameters keyed by variable id. Missing entries take the
/// defaults above.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelConfig {
    pub continuous: BTreeMap<String, f64>,
    pub integer: BTreeMap<String, f64>,
    pub categorical: CategoricalMode,
    /// Encoded-mode weights.
    pub encoded: BTreeMap<String, f64>,
    pub nominal: BTreeMap<String, f64>,
    pub ordinal: BTreeMap<String, f64>,
    /// Correlation `c` for meta-categorical variables, weight for numeric ones.
    pub meta: BTreeMap<String, f64>,
    pub signal_variance: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            continuous: BTreeMap::new(),
            integer: BTreeMap::new(),
            categorical: CategoricalMode::Matrix,
            encoded: BTreeMap::new(),
            nominal: BTreeMap::new(),
            ordinal: BTreeMap::new(),
            meta: BTreeMap::new(),
            signal_variance: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Dim {
    MetaCategorical(f64),
    MetaNumeric(f64),
    Nominal(f64),
    Ordinal(f64),
    Encoded(f64, VarType, EncoderKind),
    /// Integer and continuous share one form once features are normalized.
    Standard(f64),
}

/// A kernel configuration resolved against a domain, acting on dense
/// feature vectors (see [`features`]).
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledKernel {
    pub(crate) dims: Vec<Dim>,
    pub(crate) meta: Vec<usize>,
    pub(crate) sf2: f64,
}

impl CompiledKernel {
    pub fn new(domain: &Domain, cfg: &KernelConfig) -> Self {
        let get = |m: &BTreeMap<String, f64>, id: &str, d: f64| m.get(id).copied().unwrap_or(d);
        let dims = domain
            .variables()
            .iter()
            .map(|s| {
                let id = s.id.as_str();
                match s.var_type {
                    VarType::MetaCategorical => Dim::MetaCategorical(get(&cfg.meta, id, DEFAULT_META_CORRELATION)),
                    VarType::MetaInteger | VarType::MetaContinuous => {
                        Dim::MetaNumeric(get(&cfg.meta, id, DEFAULT_META_WEIGHT))
                    }
                    VarType::Nominal | VarType::Ordinal => match cfg.categorical {
                        CategoricalMode::Encoded { encoder } => {
                            Dim::Encoded(get(&cfg.encoded, id, DEFAULT_WEIGHT), s.var_type, encoder)
                        }
                        CategoricalMode::Matrix if s.var_type == VarType::Nominal => {
                            Dim::Nominal(get(&cfg.nominal, id, DEFAULT_CORRELATION))
                        }
                        CategoricalMode::Matrix => Dim::Ordinal(get(&cfg.ordinal, id, DEFAULT_LENGTHSCALE)),
                    },
                    VarType::Integer => Dim::Standard(get(&cfg.integer, id, DEFAULT_WEIGHT)),
                    VarType::Continuous => Dim::Standard(get(&cfg.continuous, id, DEFAULT_WEIGHT)),
                }
            })
            .collect::<Vec<_>>();
        let meta = dims
            .iter()
            .enumerate()
            .filter(|(_, d)| matches!(d, Dim::MetaCategorical(_) | Dim::MetaNumeric(_)))
            .map(|(i, _)| i)
            .collect();
        CompiledKernel {
            dims,
            meta,
            sf2: cfg.signal_variance,
        }
    }

    pub fn signal_variance(&self) -> f64 {
        self.sf2
    }

    /// Mixed kernel on feature vectors. Points with different meta components
    /// only correlate through the meta kernels.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut k = self.sf2;
        let mut expo = 0.0;
        let mut same_meta = true;
        for &i in &self.meta {
            let (a, b) = (x[i], y[i]);
            match self.dims[i] {
                Dim::MetaCategorical(c) => {
                    if a != b {
                        k *= c;
                        same_meta = false;
                    }
                }
                Dim::MetaNumeric(l) => {
                    if a != b {
                        expo += l * (a - b) * (a - b);
                        same_meta = false;
                    }
                }
                _ => unreachable!(),
            }
        }
        if same_meta {
            for (i, d) in self.dims.iter().enumerate() {
                let (a, b) = (x[i], y[i]);
                if a.is_nan() || b.is_nan() {
                    continue;
                }
                match *d {
                    Dim::Nominal(c) => {
                        if a != b {
                            k *= c;
                        }
                    }
                    Dim::Ordinal(ell) => expo += (a - b) * (a - b) / (2.0 * ell * ell),
                    Dim::Encoded(l, t, enc) => expo += l * enc.sq_distance(t, a, b),
                    Dim::Standard(l) => expo += l * (a - b) * (a - b),
                    _ => {}
                }
            }
        }
        k * (-expo).exp()
    }
}

/// Dense features indexed by variable position: category indices for
/// categorical variables, normalized values for numeric ones (integers
/// rounded first), NaN for nonacting variables.
pub fn features(domain: &Domain, p: &Point) -> Vec<f64> {
    domain
        .variables()
        .iter()
        .map(|s| match domain.value_of(p, &s.id) {
            None => f64::NAN,
            Some(Value::Category(c)) => c as f64,
            Some(v) => {
                let v = v.as_f64();
                match s.scope {
                    Scope::Integer { .. } => s.scope.normalize(v.round()),
                    _ => s.scope.normalize(v),
                }
            }
        })
        .collect()
}

/// Mixed kernel between two domain points.
pub fn k_mixed(domain: &Domain, cfg: &KernelConfig, x: &Point, y: &Point) -> f64 {
    CompiledKernel::new(domain, cfg).eval(&features(domain, x), &features(domain, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Problem;
    use serde_json::json;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-6
    }

    #[test]
    fn one_dimensional_kernels() {
        assert!(close(k_continuous(&[0.0], &[1.0], &[1.0]).unwrap(), 0.367879));
        assert!(close(
            k_continuous(&[0.0, 0.0], &[1.0, 1.0], &[1.0, 2.0]).unwrap(),
            0.049787
        ));
        assert_eq!(k_integer(&[2.4], &[2.49], &[1.0]).unwrap(), 1.0);
        assert!(close(k_integer(&[1.0], &[2.0], &[1.0]).unwrap(), (-1f64).exp()));
        assert_eq!(k_nominal(1, 2, 0.5), 0.5);
        assert!(close(k_ordinal(1, 3, 1.0), 0.135335));
        assert!(k_continuous(&[0.0], &[1.0, 2.0], &[1.0]).is_err());
        let ks = k_standard(&[1.0], &[2.0], &[1.0], &[0.0], &[1.0], &[1.0]).unwrap();
        assert!(close(ks, (-2f64).exp()));
    }

    #[test]
    fn cross_meta_pairs_use_only_meta_kernels() {
        let problem = Problem::mlp();
        let d = &problem.domain;
        let x = d
            .point_from_json(&json!({"meta": {"o": "Adam", "l": 2}, "categorical": {"a": "ReLU"},
                "standard": {"u1": 150, "u2": 120, "r": 0.3, "beta1": 0.5, "beta2": 0.5, "eps": 0.5}}))
            .unwrap();
        let y = d
            .point_from_json(&json!({"meta": {"o": "ASGD", "l": 2}, "categorical": {"a": "Sigmoid"},
                "standard": {"u1": 100, "u2": 300, "r": 0.9, "lambda": 0.5, "alpha": 0.5, "t0": 1e5}}))
            .unwrap();
        let cfg = KernelConfig {
            meta: BTreeMap::from([("o".into(), 0.3)]),
            signal_variance: 2.0,
            ..KernelConfig::default()
        };
        assert!(close(k_mixed(d, &cfg, &x, &y), 0.6));
        assert_eq!(k_mixed(d, &cfg, &x, &x), 2.0);
    }
}
