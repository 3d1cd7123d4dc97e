use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use super::kernel::{features, CompiledKernel, KernelConfig, JITTER};
use crate::domain::{Domain, Point};

/// Largest jitter tried, relative to the signal variance.
pub const MAX_JITTER: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GpError {
    #[error("kernel matrix is not positive definite even with jitter {0:e}")]
    Factorization(f64),
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("sample objective is not finite")]
    NonFinite,
}

pub(crate) fn gram(kernel: &CompiledKernel, feats: &[Vec<f64>]) -> DMatrix<f64> {
    let n = feats.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = kernel.eval(&feats[i], &feats[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cholesky factor of `k + jitter * I`, escalating the relative jitter by 10
/// from 1e-8 up to 1e-2 of the signal variance.
pub(crate) fn factor(k: &DMatrix<f64>, sf2: f64) -> Result<(DMatrix<f64>, f64), GpError> {
    factor_up_to(k, sf2, MAX_JITTER)
}

pub(crate) fn factor_up_to(k: &DMatrix<f64>, sf2: f64, max_rel: f64) -> Result<(DMatrix<f64>, f64), GpError> {
    let mut rel = JITTER;
    loop {
        let mut kj = k.clone();
        for i in 0..kj.nrows() {
            kj[(i, i)] += rel * sf2;
        }
        if let Some(ch) = kj.cholesky() {
            return Ok((ch.l(), rel * sf2));
        }
        if rel >= max_rel {
            return Err(GpError::Factorization(rel * sf2));
        }
        rel *= 10.0;
    }
}

fn solve_lower(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    l.solve_lower_triangular(b).expect("nonsingular factor")
}

fn solve_upper_t(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    l.tr_solve_lower_triangular(b).expect("nonsingular factor")
}

/// Noise-free zero-mean GP conditioned on samples.
#[derive(Debug, Clone)]
pub struct GpModel {
    kernel: CompiledKernel,
    config: KernelConfig,
    samples: Vec<Point>,
    feats: Vec<Vec<f64>>,
    y: DVector<f64>,
    l: DMatrix<f64>,
    alpha: DVector<f64>,
    jitter: f64,
}

#[derive(Serialize)]
struct Dump<'a> {
    config: &'a KernelConfig,
    jitter: f64,
    samples: Vec<serde_json::Value>,
    objectives: Vec<f64>,
}

impl GpModel {
    pub fn fit(domain: &Domain, samples: &[(Point, f64)], config: &KernelConfig) -> Result<GpModel, GpError> {
        if samples.is_empty() {
            return Err(GpError::TooFewSamples { need: 1, got: 0 });
        }
        if samples.iter().any(|(_, f)| !f.is_finite()) {
            return Err(GpError::NonFinite);
        }
        let kernel = CompiledKernel::new(domain, config);
        let feats: Vec<Vec<f64>> = samples.iter().map(|(p, _)| features(domain, p)).collect();
        let y = DVector::from_iterator(samples.len(), samples.iter().map(|(_, f)| *f));
        let k = gram(&kernel, &feats);
        let (l, jitter) = factor(&k, kernel.signal_variance())?;
        let alpha = solve_upper_t(&l, &solve_lower(&l, &y));
        Ok(GpModel {
            kernel,
            config: config.clone(),
            samples: samples.iter().map(|(p, _)| p.clone()).collect(),
            feats,
            y,
            l,
            alpha,
            jitter,
        })
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Posterior mean and variance before clamping the variance at zero.
    pub fn predict_raw_features(&self, x: &[f64]) -> (f64, f64) {
        let kappa = DVector::from_iterator(self.feats.len(), self.feats.iter().map(|f| self.kernel.eval(x, f)));
        let mean = kappa.dot(&self.alpha);
        let v = solve_lower(&self.l, &kappa);
        (mean, self.kernel.eval(x, x) - v.dot(&v))
    }

    pub fn predict_features(&self, x: &[f64]) -> (f64, f64) {
        let (m, v) = self.predict_raw_features(x);
        (m, v.max(0.0))
    }

    /// Posterior mean and clamped variance at `p`.
    pub fn predict(&self, domain: &Domain, p: &Point) -> (f64, f64) {
        self.predict_features(&features(domain, p))
    }

    /// Posterior mean only, which skips the triangular solve.
    pub fn mean_features(&self, x: &[f64]) -> f64 {
        self.feats
            .iter()
            .zip(self.alpha.iter())
            .map(|(f, a)| self.kernel.eval(x, f) * a)
            .sum()
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.y.len() as f64;
        let logdet: f64 = self.l.diagonal().iter().map(|d| d.ln()).sum();
        -0.5 * self.y.dot(&self.alpha) - logdet - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }

    /// Samples, objectives and configuration as JSON.
    pub fn dump(&self, domain: &Domain) -> serde_json::Value {
        serde_json::to_value(Dump {
            config: &self.config,
            jitter: self.jitter,
            samples: self.samples.iter().map(|p| domain.point_to_json(p)).collect(),
            objectives: self.y.iter().copied().collect(),
        })
        .expect("model serializes")
    }
}

/// Smallest eigenvalue of the Gram matrix of `points`, without jitter.
pub fn gram_min_eigenvalue(domain: &Domain, config: &KernelConfig, points: &[Point]) -> f64 {
    let kernel = CompiledKernel::new(domain, config);
    let feats: Vec<Vec<f64>> = points.iter().map(|p| features(domain, p)).collect();
    let k = gram(&kernel, &feats);
    k.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}
