use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Domain, MetaComponent, TypeGroup, VarType};

/// How a categorical component is mapped to real vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    /// Category index passed through unchanged.
    Identity,
    /// Nominal variables as unit basis vectors; ordinal ones as their index.
    OneHot,
    /// Every categorical variable as its 1-based level index.
    OrdinalIndex,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EncodeError {
    #[error("{0} is nonacting under the given meta component")]
    Nonacting(String),
    #[error("acting variable {0} has no value")]
    Missing(String),
    #[error("encoded vector has length {got}, expected {expected}")]
    Shape { got: usize, expected: usize },
    #[error(transparent)]
    Domain(#[from] crate::domain::DomainError),
}

impl EncoderKind {
    fn one_hot(self, t: VarType) -> bool {
        self == EncoderKind::OneHot && t == VarType::Nominal
    }

    /// Squared distance between the encodings of categories `a` and `b`.
    pub fn sq_distance(self, t: VarType, a: f64, b: f64) -> f64 {
        if self.one_hot(t) {
            if a == b {
                0.0
            } else {
                2.0
            }
        } else {
            (a - b) * (a - b)
        }
    }
}

fn acting(domain: &Domain, xm: &MetaComponent) -> Result<Vec<usize>, EncodeError> {
    Ok(domain.acting_positions(xm, TypeGroup::Categorical)?)
}

pub fn encoded_len(kind: EncoderKind, domain: &Domain, xm: &MetaComponent) -> Result<usize, EncodeError> {
    Ok(acting(domain, xm)?
        .into_iter()
        .map(|i| {
            let s = &domain.variables()[i];
            if kind.one_hot(s.var_type) {
                s.scope.n_categories().unwrap_or(0) as usize
            } else {
                1
            }
        })
        .sum())
}

/// Encodes the acting categorical variables of `xq` in declaration order.
pub fn encode(
    kind: EncoderKind,
    domain: &Domain,
    xq: &BTreeMap<String, u32>,
    xm: &MetaComponent,
) -> Result<Vec<f64>, EncodeError> {
    let positions = acting(domain, xm)?;
    for id in xq.keys() {
        if !positions.iter().any(|&i| domain.variables()[i].id == *id) {
            return Err(EncodeError::Nonacting(id.clone()));
        }
    }
    let mut out = Vec::new();
    for i in positions {
        let s = &domain.variables()[i];
        let c = *xq.get(&s.id).ok_or_else(|| EncodeError::Missing(s.id.clone()))?;
        if kind.one_hot(s.var_type) {
            let n = s.scope.n_categories().unwrap_or(0);
            out.extend((1..=n).map(|k| if k == c { 1.0 } else { 0.0 }));
        } else {
            out.push(c as f64);
        }
    }
    Ok(out)
}

/// Maps a (possibly relaxed) encoded vector back to a categorical component.
/// One-hot blocks decode by argmax with ties going to the lowest index; index
/// codes are rounded and clamped to the scope.
pub fn decode(
    kind: EncoderKind,
    domain: &Domain,
    lq: &[f64],
    xm: &MetaComponent,
) -> Result<BTreeMap<String, u32>, EncodeError> {
    let expected = encoded_len(kind, domain, xm)?;
    if lq.len() != expected {
        return Err(EncodeError::Shape {
            got: lq.len(),
            expected,
        });
    }
    let mut out = BTreeMap::new();
    let mut at = 0;
    for i in acting(domain, xm)? {
        let s = &domain.variables()[i];
        let n = s.scope.n_categories().unwrap_or(1);
        let c = if kind.one_hot(s.var_type) {
            let block = &lq[at..at + n as usize];
            at += n as usize;
            let mut best = 0;
            for (k, &v) in block.iter().enumerate() {
                if v > block[best] {
                    best = k;
                }
            }
            best as u32 + 1
        } else {
            let v = lq[at];
            at += 1;
            (v.round().clamp(1.0, n as f64)) as u32
        };
        out.insert(s.id.clone(), c);
    }
    Ok(out)
}
