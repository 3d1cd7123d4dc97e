//! Global and decreed inequality constraints `c(x) <= 0`.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::domain::{DecreePredicate, Domain, DomainError, ErrorCode, MetaComponent, Point, Role};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConstraintError {
    #[error("constraint {constraint}: variable {var} is nonacting")]
    DecreeViolation { constraint: String, var: String },
    #[error("constraint {0} has a blackbox body")]
    NotAnalytic(String),
    #[error("missing value for acting constraint {0}")]
    Incomplete(String),
}

/// One `coef * var` term. Terms marked `if_acting` contribute only when the
/// variable is acting, which expresses sums over a decreed family such as
/// `u_1 + ... + u_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearTerm {
    pub coef: f64,
    pub var: String,
    pub if_acting: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintBody {
    /// `sum(terms) + constant <= 0`.
    Analytic { terms: Vec<LinearTerm>, constant: f64 },
    /// Value reported by the blackbox under the constraint id.
    Blackbox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSpec {
    pub id: String,
    pub role: Role,
    pub decree: DecreePredicate,
    pub body: ConstraintBody,
}

impl ConstraintSpec {
    pub fn is_acting(&self, xm: &MetaComponent) -> bool {
        match self.role {
            Role::Decreed => self.decree.holds(xm),
            _ => true,
        }
    }

    /// Value of an analytic body at `p`.
    pub fn evaluate_analytic(&self, p: &Point) -> Result<f64, ConstraintError> {
        let ConstraintBody::Analytic { terms, constant } = &self.body else {
            return Err(ConstraintError::NotAnalytic(self.id.clone()));
        };
        let mut total = *constant;
        for t in terms {
            match p.standard.get(&t.var) {
                Some(v) => total += t.coef * v,
                None if t.if_acting => {}
                None => {
                    return Err(ConstraintError::DecreeViolation {
                        constraint: self.id.clone(),
                        var: t.var.clone(),
                    })
                }
            }
        }
        Ok(total)
    }
}

/// Constraint values keyed by id, covering exactly the acting constraints.
pub type ConstraintValues = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConstraintSystem {
    constraints: Vec<ConstraintSpec>,
}

impl ConstraintSystem {
    /// Validates constraint bodies and decrees against `domain`.
    pub fn new(constraints: Vec<ConstraintSpec>, domain: &Domain) -> Result<Self, DomainError> {
        for (i, c) in constraints.iter().enumerate() {
            let path = format!("constraints[{i}]");
            if constraints[..i].iter().any(|o| o.id == c.id) {
                return Err(DomainError::new(
                    ErrorCode::DuplicateId,
                    &path,
                    format!("duplicate constraint id {:?}", c.id),
                ));
            }
            if domain.variable(&c.id).is_some() {
                return Err(DomainError::new(
                    ErrorCode::DuplicateId,
                    &path,
                    format!("constraint id {:?} collides with a variable id", c.id),
                ));
            }
            match (c.role, c.decree.is_always()) {
                (Role::Decreed, true) | (Role::Global, false) | (Role::Meta, _) => {
                    return Err(DomainError::new(
                        ErrorCode::TypeRoleMismatch,
                        format!("{path}.role"),
                        "constraints are global (no decree) or decreed (nonempty decree)",
                    ))
                }
                _ => {}
            }
            for (j, atom) in c.decree.conjuncts.iter().enumerate() {
                let apath = format!("{path}.decree[{j}]");
                match domain.variable(atom.var()) {
                    None => {
                        return Err(DomainError::new(
                            ErrorCode::UnknownId,
                            apath,
                            format!("unknown variable {:?}", atom.var()),
                        ))
                    }
                    Some(s) if !s.var_type.is_meta() => {
                        return Err(DomainError::new(
                            ErrorCode::MetaDecreeingMeta,
                            apath,
                            format!("decree references non-meta variable {:?}", s.id),
                        ))
                    }
                    _ => {}
                }
            }
            if let ConstraintBody::Analytic { terms, .. } = &c.body {
                for (j, t) in terms.iter().enumerate() {
                    let tpath = format!("{path}.terms[{j}]");
                    let Some(spec) = domain.variable(&t.var) else {
                        return Err(DomainError::new(
                            ErrorCode::UnknownId,
                            tpath,
                            format!("unknown variable {:?}", t.var),
                        ));
                    };
                    if !spec.var_type.is_standard() {
                        return Err(DomainError::new(
                            ErrorCode::TypeRoleMismatch,
                            tpath,
                            format!("{:?} is not an integer or continuous variable", t.var),
                        ));
                    }
                    if t.if_acting {
                        continue;
                    }
                    let co_acting = match spec.role {
                        Role::Global => true,
                        _ => c.decree.implies(&spec.decree, domain),
                    };
                    if !co_acting {
                        return Err(DomainError::new(
                            ErrorCode::DecreeReferencesNonacting,
                            tpath,
                            format!("{:?} may be nonacting while constraint {:?} is acting", t.var, c.id),
                        ));
                    }
                }
            }
        }
        Ok(ConstraintSystem { constraints })
    }

    pub fn constraints(&self) -> &[ConstraintSpec] {
        &self.constraints
    }

    pub fn get(&self, id: &str) -> Option<&ConstraintSpec> {
        self.constraints.iter().find(|c| c.id == id)
    }

    pub fn globals(&self) -> impl Iterator<Item = &ConstraintSpec> {
        self.constraints.iter().filter(|c| c.role == Role::Global)
    }

    /// `C^m(x^m)`: decreed constraints whose predicate holds, declaration order.
    pub fn acting_decreed_constraints(&self, xm: &MetaComponent) -> Vec<&ConstraintSpec> {
        self.constraints
            .iter()
            .filter(|c| c.role == Role::Decreed && c.decree.holds(xm))
            .collect()
    }

    /// Globals followed by acting decreed constraints, declaration order.
    pub fn acting(&self, xm: &MetaComponent) -> Vec<&ConstraintSpec> {
        self.constraints.iter().filter(|c| c.is_acting(xm)).collect()
    }

    /// Definition-level feasibility: every acting constraint value `<= 0`.
    pub fn is_feasible(&self, p: &Point, values: &ConstraintValues) -> Result<bool, ConstraintError> {
        let mut feasible = true;
        for c in self.acting(&p.meta) {
            let v = values
                .get(&c.id)
                .ok_or_else(|| ConstraintError::Incomplete(c.id.clone()))?;
            // NaN counts as a violation.
            if v.is_nan() || *v > 0.0 {
                feasible = false;
            }
        }
        Ok(feasible)
    }
}
