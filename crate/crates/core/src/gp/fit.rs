use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::kernel::JITTER;
use super::kernel::{features, CategoricalMode, CompiledKernel, KernelConfig};
use super::model::{factor_up_to, gram, GpError};
use crate::domain::{Domain, Point, VarType};

pub const WEIGHT_BOUNDS: (f64, f64) = (1e-3, 1e3);
pub const CORRELATION_BOUNDS: (f64, f64) = (0.0, 0.99);
pub const LENGTHSCALE_BOUNDS: (f64, f64) = (1e-2, 1e2);
pub const STARTS: usize = 8;
const MAX_SWEEPS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Table {
    Meta,
    Nominal,
    Ordinal,
    Encoded,
    Integer,
    Continuous,
}

#[derive(Debug, Clone)]
struct Param {
    id: String,
    table: Table,
    log: bool,
    lo: f64,
    hi: f64,
}

impl Param {
    fn new(id: &str, table: Table, bounds: (f64, f64), log: bool) -> Self {
        let (lo, hi) = if log { (bounds.0.ln(), bounds.1.ln()) } else { bounds };
        Param {
            id: id.to_owned(),
            table,
            log,
            lo,
            hi,
        }
    }

    fn read(&self, cfg: &KernelConfig, default: f64) -> f64 {
        let v = self.map(cfg).get(&self.id).copied().unwrap_or(default);
        let v = if self.log { v.max(f64::MIN_POSITIVE).ln() } else { v };
        v.clamp(self.lo, self.hi)
    }

    fn write(&self, cfg: &mut KernelConfig, x: f64) {
        let v = if self.log { x.exp() } else { x };
        self.map_mut(cfg).insert(self.id.clone(), v);
    }

    fn map<'c>(&self, cfg: &'c KernelConfig) -> &'c std::collections::BTreeMap<String, f64> {
        match self.table {
            Table::Meta => &cfg.meta,
            Table::Nominal => &cfg.nominal,
            Table::Ordinal => &cfg.ordinal,
            Table::Encoded => &cfg.encoded,
            Table::Integer => &cfg.integer,
            Table::Continuous => &cfg.continuous,
        }
    }

    fn map_mut<'c>(&self, cfg: &'c mut KernelConfig) -> &'c mut std::collections::BTreeMap<String, f64> {
        match self.table {
            Table::Meta => &mut cfg.meta,
            Table::Nominal => &mut cfg.nominal,
            Table::Ordinal => &mut cfg.ordinal,
            Table::Encoded => &mut cfg.encoded,
            Table::Integer => &mut cfg.integer,
            Table::Continuous => &mut cfg.continuous,
        }
    }

    fn initial_step(&self) -> f64 {
        if self.log {
            1.0
        } else {
            0.2
        }
    }

    fn tolerance(&self) -> f64 {
        if self.log {
            0.05
        } else {
            0.01
        }
    }
}

/// Parameters that influence the likelihood: every variable acting in some
/// sample, and meta variables whose value varies across samples.
fn parameters(domain: &Domain, feats: &[Vec<f64>], mode: CategoricalMode) -> Vec<Param> {
    let mut out = Vec::new();
    for (i, s) in domain.variables().iter().enumerate() {
        let column = || feats.iter().map(|f| f[i]).filter(|v| !v.is_nan());
        if column().next().is_none() {
            continue;
        }
        let id = s.id.as_str();
        let p = match s.var_type {
            VarType::MetaCategorical | VarType::MetaInteger | VarType::MetaContinuous => {
                let first = column().next().unwrap();
                if column().all(|v| v == first) {
                    continue;
                }
                if s.var_type == VarType::MetaCategorical {
                    Param::new(id, Table::Meta, CORRELATION_BOUNDS, false)
                } else {
                    Param::new(id, Table::Meta, WEIGHT_BOUNDS, true)
                }
            }
            VarType::Nominal | VarType::Ordinal => match mode {
                CategoricalMode::Encoded { .. } => Param::new(id, Table::Encoded, WEIGHT_BOUNDS, true),
                CategoricalMode::Matrix if s.var_type == VarType::Nominal => {
                    Param::new(id, Table::Nominal, CORRELATION_BOUNDS, false)
                }
                CategoricalMode::Matrix => Param::new(id, Table::Ordinal, LENGTHSCALE_BOUNDS, true),
            },
            VarType::Integer => Param::new(id, Table::Integer, WEIGHT_BOUNDS, true),
            VarType::Continuous => Param::new(id, Table::Continuous, WEIGHT_BOUNDS, true),
        };
        out.push(p);
    }
    out
}

fn default_of(p: &Param) -> f64 {
    use super::kernel::*;
    match p.table {
        Table::Nominal => DEFAULT_CORRELATION,
        Table::Ordinal => DEFAULT_LENGTHSCALE,
        Table::Meta if p.log => DEFAULT_META_WEIGHT,
        Table::Meta => DEFAULT_META_CORRELATION,
        _ => DEFAULT_WEIGHT,
    }
}

struct Objective<'a> {
    domain: &'a Domain,
    base: &'a KernelConfig,
    params: &'a [Param],
    feats: &'a [Vec<f64>],
    y: DVector<f64>,
}

impl Objective<'_> {
    fn config(&self, x: &[f64], sf2: f64) -> KernelConfig {
        let mut cfg = self.base.clone();
        for (p, &v) in self.params.iter().zip(x) {
            p.write(&mut cfg, v);
        }
        cfg.signal_variance = sf2;
        cfg
    }

    /// Log marginal likelihood with the signal variance profiled out, and
    /// that variance.
    fn eval(&self, x: &[f64]) -> (f64, f64) {
        let kernel = CompiledKernel::new(self.domain, &self.config(x, 1.0));
        let k = gram(&kernel, self.feats);
        // Configurations that only factor with extra jitter are rejected.
        let Ok((l, _)) = factor_up_to(&k, 1.0, JITTER) else {
            return (f64::NEG_INFINITY, 1.0);
        };
        let z = l.solve_lower_triangular(&self.y).expect("nonsingular factor");
        let n = self.y.len() as f64;
        let sf2 = (z.dot(&z) / n).max(1e-12);
        let logdet: f64 = l.diagonal().iter().map(|d| d.ln()).sum();
        let ll = -0.5 * n * sf2.ln() - logdet - 0.5 * n - 0.5 * n * (2.0 * std::f64::consts::PI).ln();
        (ll, sf2)
    }

    fn descend(&self, mut x: Vec<f64>) -> (Vec<f64>, f64, f64) {
        let (mut ll, mut sf2) = self.eval(&x);
        let mut step: Vec<f64> = self.params.iter().map(Param::initial_step).collect();
        for _ in 0..MAX_SWEEPS {
            for j in 0..x.len() {
                let mut moved = false;
                for dir in [1.0, -1.0] {
                    let mut y = x.clone();
                    y[j] = (x[j] + dir * step[j]).clamp(self.params[j].lo, self.params[j].hi);
                    if y[j] == x[j] {
                        continue;
                    }
                    let (v, s) = self.eval(&y);
                    if v > ll {
                        x = y;
                        ll = v;
                        sf2 = s;
                        moved = true;
                        break;
                    }
                }
                if !moved {
                    step[j] *= 0.5;
                }
            }
            if step.iter().zip(self.params).all(|(s, p)| *s < p.tolerance()) {
                break;
            }
        }
        (x, ll, sf2)
    }
}

/// Maximizes the log marginal likelihood by coordinate descent from eight
/// starts: `base`, the default configuration, and six seeded random points.
/// Returns the best configuration (signal variance included) and its
/// log likelihood.
pub fn fit_hyperparameters(
    domain: &Domain,
    samples: &[(Point, f64)],
    base: &KernelConfig,
    seed: u64,
) -> Result<(KernelConfig, f64), GpError> {
    if samples.len() < 2 {
        return Err(GpError::TooFewSamples {
            need: 2,
            got: samples.len(),
        });
    }
    if samples.iter().any(|(_, f)| !f.is_finite()) {
        return Err(GpError::NonFinite);
    }
    let feats: Vec<Vec<f64>> = samples.iter().map(|(p, _)| features(domain, p)).collect();
    let params = parameters(domain, &feats, base.categorical);
    let obj = Objective {
        domain,
        base,
        params: &params,
        feats: &feats,
        y: DVector::from_iterator(samples.len(), samples.iter().map(|(_, f)| *f)),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts: Vec<Vec<f64>> = vec![
        params.iter().map(|p| p.read(base, default_of(p))).collect(),
        params
            .iter()
            .map(|p| p.read(&KernelConfig::default(), default_of(p)))
            .collect(),
    ];
    while starts.len() < STARTS {
        starts.push(params.iter().map(|p| rng.gen_range(p.lo..=p.hi)).collect());
    }

    let results = run_starts(&obj, starts);
    let mut best: Option<(Vec<f64>, f64, f64)> = None;
    for r in results {
        if best.as_ref().is_none_or(|b| r.1 > b.1) {
            best = Some(r);
        }
    }
    let (x, ll, sf2) = best.expect("at least one start");
    if ll == f64::NEG_INFINITY {
        return Err(GpError::Factorization(super::model::MAX_JITTER));
    }
    Ok((obj.config(&x, sf2), ll))
}

#[cfg(not(target_arch = "wasm32"))]
fn run_starts(obj: &Objective, starts: Vec<Vec<f64>>) -> Vec<(Vec<f64>, f64, f64)> {
    std::thread::scope(|s| {
        let handles: Vec<_> = starts.into_iter().map(|x| s.spawn(move || obj.descend(x))).collect();
        handles.into_iter().map(|h| h.join().expect("fit thread")).collect()
    })
}

#[cfg(target_arch = "wasm32")]
fn run_starts(obj: &Objective, starts: Vec<Vec<f64>>) -> Vec<(Vec<f64>, f64, f64)> {
    starts.into_iter().map(|x| obj.descend(x)).collect()
}
