//! Variables, roles, decree predicates and the parametrized sets they induce.
//!
//! A [`Domain`] is an immutable list of [`VariableSpec`]s. Every question about
//! which variables are acting under a given meta component is answered from the
//! decree predicates alone, so the acting sets are pure functions of the meta
//! component.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Machine-readable validation codes shared with the problem-file loader.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorCode {
    UnknownId,
    DuplicateId,
    MetaDecreeingMeta,
    ScopeMalformed,
    DecreeReferencesNonacting,
    TypeRoleMismatch,
    InvalidMeta,
    ScopeViolation,
    NotEnumerable,
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ErrorCode::UnknownId => "unknown-id",
            ErrorCode::DuplicateId => "duplicate-id",
            ErrorCode::MetaDecreeingMeta => "meta-decreeing-meta",
            ErrorCode::ScopeMalformed => "scope-malformed",
            ErrorCode::DecreeReferencesNonacting => "decree-references-nonacting",
            ErrorCode::TypeRoleMismatch => "type-role-mismatch",
            ErrorCode::InvalidMeta => "invalid-meta",
            ErrorCode::ScopeViolation => "scope-violation",
            ErrorCode::NotEnumerable => "not-enumerable",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{code} at {path}: {message}")]
pub struct DomainError {
    pub code: ErrorCode,
    pub path: String,
    pub message: String,
}

impl DomainError {
    pub fn new(code: ErrorCode, path: impl Into<String>, message: impl Into<String>) -> Self {
        DomainError {
            code,
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarType {
    MetaCategorical,
    MetaInteger,
    MetaContinuous,
    Nominal,
    Ordinal,
    Integer,
    Continuous,
}

impl VarType {
    pub fn is_meta(self) -> bool {
        matches!(
            self,
            VarType::MetaCategorical | VarType::MetaInteger | VarType::MetaContinuous
        )
    }

    pub fn is_categorical(self) -> bool {
        matches!(self, VarType::Nominal | VarType::Ordinal)
    }

    pub fn is_standard(self) -> bool {
        matches!(self, VarType::Integer | VarType::Continuous)
    }

    pub fn in_group(self, group: TypeGroup) -> bool {
        match group {
            TypeGroup::Meta => self.is_meta(),
            TypeGroup::Categorical => self.is_categorical(),
            TypeGroup::Nominal => self == VarType::Nominal,
            TypeGroup::Ordinal => self == VarType::Ordinal,
            TypeGroup::Integer => self == VarType::Integer,
            TypeGroup::Continuous => self == VarType::Continuous,
            TypeGroup::Standard => self.is_standard(),
        }
    }
}

/// Groups of variable types used to query parametrized sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TypeGroup {
    Meta,
    Categorical,
    Nominal,
    Ordinal,
    Integer,
    Continuous,
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Meta,
    Decreed,
    Global,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scope {
    Categorical {
        categories: Vec<String>,
    },
    Integer {
        lo: i64,
        hi: i64,
    },
    Continuous {
        lo: f64,
        hi: f64,
        lo_open: bool,
        hi_open: bool,
        /// Normalize on a log10 scale (kernels, meshes, samplers).
        log: bool,
    },
}

impl Scope {
    pub fn n_categories(&self) -> Option<u32> {
        match self {
            Scope::Categorical { categories } => Some(categories.len() as u32),
            _ => None,
        }
    }

    pub fn category_index(&self, label: &str) -> Option<u32> {
        match self {
            Scope::Categorical { categories } => categories.iter().position(|c| c == label).map(|i| i as u32 + 1),
            _ => None,
        }
    }

    pub fn category_label(&self, index: u32) -> Option<&str> {
        match self {
            Scope::Categorical { categories } if index >= 1 => categories.get(index as usize - 1).map(String::as_str),
            _ => None,
        }
    }

    /// Numeric bounds of an integer or continuous scope.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        match self {
            Scope::Integer { lo, hi } => Some((*lo as f64, *hi as f64)),
            Scope::Continuous { lo, hi, .. } => Some((*lo, *hi)),
            Scope::Categorical { .. } => None,
        }
    }

    pub fn contains_number(&self, v: f64) -> bool {
        match self {
            Scope::Integer { lo, hi } => v.fract() == 0.0 && v >= *lo as f64 && v <= *hi as f64,
            Scope::Continuous {
                lo,
                hi,
                lo_open,
                hi_open,
                ..
            } => {
                if !v.is_finite() {
                    return false;
                }
                let above = if *lo_open { v > *lo } else { v >= *lo };
                let below = if *hi_open { v < *hi } else { v <= *hi };
                above && below
            }
            Scope::Categorical { categories } => v.fract() == 0.0 && v >= 1.0 && v <= categories.len() as f64,
        }
    }

    /// Maps a numeric value onto `[0, 1]`; log scopes use log10.
    pub fn normalize(&self, v: f64) -> f64 {
        match self {
            Scope::Continuous { lo, hi, log: true, .. } => (v.log10() - lo.log10()) / (hi.log10() - lo.log10()),
            Scope::Continuous { lo, hi, .. } => (v - lo) / (hi - lo),
            Scope::Integer { lo, hi } => {
                if hi == lo {
                    0.0
                } else {
                    (v - *lo as f64) / (*hi - *lo) as f64
                }
            }
            Scope::Categorical { categories } => {
                if categories.len() <= 1 {
                    0.0
                } else {
                    (v - 1.0) / (categories.len() - 1) as f64
                }
            }
        }
    }

    pub fn denormalize(&self, u: f64) -> f64 {
        match self {
            Scope::Continuous { lo, hi, log: true, .. } => 10f64.powf(lo.log10() + u * (hi.log10() - lo.log10())),
            Scope::Continuous { lo, hi, .. } => lo + u * (hi - lo),
            Scope::Integer { lo, hi } => *lo as f64 + u * (*hi - *lo) as f64,
            Scope::Categorical { categories } => 1.0 + u * (categories.len() as f64 - 1.0),
        }
    }

    /// Pulls a numeric value back inside the scope. Open continuous bounds are
    /// replaced by the point `margin` (a fraction of the width) inside them;
    /// integers are rounded half away from zero and clamped.
    pub fn project(&self, v: f64, margin: f64) -> f64 {
        match self {
            Scope::Integer { lo, hi } => v.round().clamp(*lo as f64, *hi as f64),
            Scope::Continuous {
                lo,
                hi,
                lo_open,
                hi_open,
                ..
            } => {
                let w = hi - lo;
                let lo_eff = if *lo_open { lo + margin * w } else { *lo };
                let hi_eff = if *hi_open { hi - margin * w } else { *hi };
                v.clamp(lo_eff, hi_eff)
            }
            Scope::Categorical { categories } => v.round().clamp(1.0, categories.len() as f64),
        }
    }

    /// Default used when completing a point: arithmetic midpoint, floor
    /// midpoint, or the first category.
    pub fn midpoint(&self) -> Value {
        match self {
            Scope::Categorical { .. } => Value::Category(1),
            Scope::Integer { lo, hi } => Value::Integer((lo + hi).div_euclid(2)),
            Scope::Continuous { lo, hi, .. } => Value::Real(0.5 * (lo + hi)),
        }
    }

    fn validate(&self, path: &str) -> Result<(), DomainError> {
        let bad = |m: String| Err(DomainError::new(ErrorCode::ScopeMalformed, path, m));
        match self {
            Scope::Categorical { categories } => {
                if categories.len() < 2 {
                    return bad("categorical scope needs at least 2 categories".into());
                }
                for (i, c) in categories.iter().enumerate() {
                    if categories[..i].contains(c) {
                        return bad(format!("duplicate category label {c:?}"));
                    }
                }
            }
            Scope::Integer { lo, hi } => {
                if lo > hi {
                    return bad(format!("integer scope lo {lo} > hi {hi}"));
                }
            }
            Scope::Continuous { lo, hi, log, .. } => {
                if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
                    return bad(format!("continuous scope needs finite lo < hi, got [{lo}, {hi}]"));
                }
                if *log && *lo <= 0.0 {
                    return bad("log-scaled scope needs lo > 0".into());
                }
            }
        }
        Ok(())
    }
}

/// A concrete value of one variable. Categories are 1-based indices.
#[derive(Debug, Clone, Copy)]
pub enum Value {
    Category(u32),
    Integer(i64),
    Real(f64),
}

impl Value {
    pub fn as_f64(self) -> f64 {
        match self {
            Value::Category(c) => c as f64,
            Value::Integer(i) => i as f64,
            Value::Real(r) => r,
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Category(a), Value::Category(b)) => a == b,
            (Value::Integer(a), Value::Integer(b)) => a == b,
            (Value::Real(a), Value::Real(b)) => a.to_bits() == b.to_bits(),
            _ => false,
        }
    }
}

impl Eq for Value {}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Value::Category(c) => (0u8, *c as u64).hash(state),
            Value::Integer(i) => (1u8, *i as u64).hash(state),
            Value::Real(r) => (2u8, r.to_bits()).hash(state),
        }
    }
}

/// Interval `[lo, hi]` used by membership atoms over meta-continuous variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Allowed {
    Categories(Vec<u32>),
    Integers(Vec<i64>),
    Intervals(Vec<Interval>),
}

impl Allowed {
    fn admits(&self, v: Value) -> bool {
        match (self, v) {
            (Allowed::Categories(set), Value::Category(c)) => set.contains(&c),
            (Allowed::Integers(set), Value::Integer(i)) => set.contains(&i),
            (Allowed::Intervals(ivs), Value::Real(r)) => ivs.iter().any(|iv| r >= iv.lo && r <= iv.hi),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Atom {
    Membership {
        var: String,
        allowed: Allowed,
    },
    /// Integer value (or category index) at least `min`.
    Threshold {
        var: String,
        min: i64,
    },
}

impl Atom {
    pub fn var(&self) -> &str {
        match self {
            Atom::Membership { var, .. } | Atom::Threshold { var, .. } => var,
        }
    }

    pub fn holds(&self, xm: &MetaComponent) -> bool {
        let Some(v) = xm.get(self.var()) else {
            return false;
        };
        match self {
            Atom::Membership { allowed, .. } => allowed.admits(v),
            Atom::Threshold { min, .. } => match v {
                Value::Integer(i) => i >= *min,
                Value::Category(c) => c as i64 >= *min,
                Value::Real(r) => r >= *min as f64,
            },
        }
    }
}

/// Conjunction of atoms over meta variables. Empty means "always acting".
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DecreePredicate {
    pub conjuncts: Vec<Atom>,
}

impl DecreePredicate {
    pub fn always() -> Self {
        DecreePredicate::default()
    }

    pub fn new(conjuncts: Vec<Atom>) -> Self {
        DecreePredicate { conjuncts }
    }

    pub fn is_always(&self) -> bool {
        self.conjuncts.is_empty()
    }

    pub fn holds(&self, xm: &MetaComponent) -> bool {
        self.conjuncts.iter().all(|a| a.holds(xm))
    }

    /// True when every meta component satisfying `self` also satisfies `other`.
    /// Exact over finite meta scopes; for meta-continuous variables interval
    /// containment is used as a sufficient condition.
    pub fn implies(&self, other: &DecreePredicate, domain: &Domain) -> bool {
        other.conjuncts.iter().all(|q| {
            let Some(spec) = domain.variable(q.var()) else {
                return false;
            };
            let mine: Vec<&Atom> = self.conjuncts.iter().filter(|a| a.var() == q.var()).collect();
            match spec.finite_values() {
                Some(values) => values.into_iter().all(|v| {
                    let mut xm = MetaComponent::default();
                    xm.insert(q.var(), v);
                    !mine.iter().all(|a| a.holds(&xm)) || q.holds(&xm)
                }),
                None => {
                    let Atom::Membership {
                        allowed: Allowed::Intervals(target),
                        ..
                    } = q
                    else {
                        return false;
                    };
                    mine.iter().any(|a| match a {
                        Atom::Membership {
                            allowed: Allowed::Intervals(ivs),
                            ..
                        } => ivs
                            .iter()
                            .all(|iv| target.iter().any(|t| t.lo <= iv.lo && iv.hi <= t.hi)),
                        _ => false,
                    })
                }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableSpec {
    pub id: String,
    pub var_type: VarType,
    pub role: Role,
    pub scope: Scope,
    pub decree: DecreePredicate,
    pub default: Option<Value>,
}

impl VariableSpec {
    pub fn new(id: impl Into<String>, var_type: VarType, role: Role, scope: Scope) -> Self {
        VariableSpec {
            id: id.into(),
            var_type,
            role,
            scope,
            decree: DecreePredicate::always(),
            default: None,
        }
    }

    pub fn decreed_by(mut self, decree: DecreePredicate) -> Self {
        self.decree = decree;
        self
    }

    pub fn with_default(mut self, default: Value) -> Self {
        self.default = Some(default);
        self
    }

    /// Default value used when the variable becomes acting without a value.
    pub fn default_value(&self) -> Value {
        self.default.unwrap_or_else(|| self.scope.midpoint())
    }

    /// Every value in the scope, if the scope is finite.
    pub fn finite_values(&self) -> Option<Vec<Value>> {
        match &self.scope {
            Scope::Categorical { categories } => Some((1..=categories.len() as u32).map(Value::Category).collect()),
            Scope::Integer { lo, hi } => Some((*lo..=*hi).map(Value::Integer).collect()),
            Scope::Continuous { .. } => None,
        }
    }

    pub fn value_in_scope(&self, v: Value) -> bool {
        match (&self.scope, v) {
            (Scope::Categorical { categories }, Value::Category(c)) => c >= 1 && c as usize <= categories.len(),
            (Scope::Integer { lo, hi }, Value::Integer(i)) => i >= *lo && i <= *hi,
            (Scope::Continuous { .. }, Value::Real(r)) => self.scope.contains_number(r),
            _ => false,
        }
    }

    /// Human-readable rendering of a value (labels for categories).
    pub fn render(&self, v: Value) -> String {
        match v {
            Value::Category(c) => self
                .scope
                .category_label(c)
                .map(str::to_owned)
                .unwrap_or_else(|| format!("#{c}")),
            Value::Integer(i) => i.to_string(),
            Value::Real(r) => r.to_string(),
        }
    }

    /// Parses a textual value (label, integer or real) for this variable.
    pub fn parse_value(&self, text: &str) -> Option<Value> {
        match &self.scope {
            Scope::Categorical { .. } => self.scope.category_index(text).map(Value::Category),
            Scope::Integer { .. } => text.parse::<i64>().ok().map(Value::Integer),
            Scope::Continuous { .. } => text.parse::<f64>().ok().map(Value::Real),
        }
    }

    fn value_from_number(&self, v: f64) -> Value {
        match self.var_type {
            VarType::MetaCategorical | VarType::Nominal | VarType::Ordinal => Value::Category(v as u32),
            VarType::MetaInteger | VarType::Integer => Value::Integer(v as i64),
            VarType::MetaContinuous | VarType::Continuous => Value::Real(v),
        }
    }
}

/// Assignment of every meta variable, keyed by id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct MetaComponent {
    values: BTreeMap<String, Value>,
}

impl MetaComponent {
    pub fn new() -> Self {
        MetaComponent::default()
    }

    pub fn get(&self, id: &str) -> Option<Value> {
        self.values.get(id).copied()
    }

    pub fn insert(&mut self, id: impl Into<String>, v: Value) {
        self.values.insert(id.into(), v);
    }

    pub fn with(mut self, id: impl Into<String>, v: Value) -> Self {
        self.insert(id, v);
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Entries in lexicographic id order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, Value)> {
        self.values.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// A point `(x^m, x^q, x^s)` holding values for acting variables only.
///
/// Categorical values are 1-based category indices; standard values are
/// stored as `f64` (integers carry integral values).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Point {
    pub meta: MetaComponent,
    pub categorical: BTreeMap<String, u32>,
    pub standard: BTreeMap<String, f64>,
}

impl Point {
    pub fn new(meta: MetaComponent) -> Self {
        Point {
            meta,
            ..Point::default()
        }
    }
}

/// Why a point is not a member of the domain.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("invalid meta component: {0}")]
    InvalidMeta(String),
    #[error("{id} nonacting under {meta}")]
    Nonacting { id: String, meta: String },
    #[error("{id} acting but missing")]
    Missing { id: String },
    #[error("{id}: scope violation ({value})")]
    ScopeViolation { id: String, value: String },
    #[error("{id}: unknown variable")]
    Unknown { id: String },
    #[error("{id}: stored in the wrong component")]
    WrongComponent { id: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    variables: Vec<VariableSpec>,
    index: HashMap<String, usize>,
    meta: Vec<usize>,
}

impl Domain {
    /// Builds a domain and checks every load-time invariant.
    pub fn new(variables: Vec<VariableSpec>) -> Result<Self, DomainError> {
        let mut index = HashMap::new();
        for (i, v) in variables.iter().enumerate() {
            let path = format!("variables[{i}]");
            if index.insert(v.id.clone(), i).is_some() {
                return Err(DomainError::new(
                    ErrorCode::DuplicateId,
                    path,
                    format!("duplicate variable id {:?}", v.id),
                ));
            }
        }
        for (i, v) in variables.iter().enumerate() {
            let path = format!("variables[{i}]");
            v.scope.validate(&format!("{path}.scope"))?;
            let scope_ok = match v.var_type {
                VarType::MetaCategorical | VarType::Nominal | VarType::Ordinal => {
                    matches!(v.scope, Scope::Categorical { .. })
                }
                VarType::MetaInteger | VarType::Integer => matches!(v.scope, Scope::Integer { .. }),
                VarType::MetaContinuous | VarType::Continuous => {
                    matches!(v.scope, Scope::Continuous { .. })
                }
            };
            if !scope_ok {
                return Err(DomainError::new(
                    ErrorCode::ScopeMalformed,
                    format!("{path}.scope"),
                    format!("scope kind does not match type {:?}", v.var_type),
                ));
            }
            let role_ok = match v.role {
                Role::Meta => v.var_type.is_meta(),
                Role::Decreed | Role::Global => !v.var_type.is_meta(),
            };
            if !role_ok {
                return Err(DomainError::new(
                    ErrorCode::TypeRoleMismatch,
                    format!("{path}.role"),
                    format!("type {:?} cannot take role {:?}", v.var_type, v.role),
                ));
            }
            match v.role {
                Role::Decreed if v.decree.is_always() => {
                    return Err(DomainError::new(
                        ErrorCode::TypeRoleMismatch,
                        format!("{path}.decree"),
                        "decreed variable needs a nonempty decree",
                    ))
                }
                Role::Meta if !v.decree.is_always() => {
                    return Err(DomainError::new(
                        ErrorCode::MetaDecreeingMeta,
                        format!("{path}.decree"),
                        "meta variables cannot be decreed",
                    ))
                }
                Role::Global if !v.decree.is_always() => {
                    return Err(DomainError::new(
                        ErrorCode::TypeRoleMismatch,
                        format!("{path}.decree"),
                        "global variables cannot carry a decree",
                    ))
                }
                _ => {}
            }
            for (j, atom) in v.decree.conjuncts.iter().enumerate() {
                validate_atom(atom, &variables, &index, &format!("{path}.decree[{j}]"))?;
            }
            if let Some(d) = v.default {
                if !v.value_in_scope(d) {
                    return Err(DomainError::new(
                        ErrorCode::ScopeViolation,
                        format!("{path}.default"),
                        "default value outside scope",
                    ));
                }
            }
        }
        let meta = (0..variables.len())
            .filter(|&i| variables[i].var_type.is_meta())
            .collect();
        Ok(Domain { variables, index, meta })
    }

    pub fn variables(&self) -> &[VariableSpec] {
        &self.variables
    }

    pub fn variable(&self, id: &str) -> Option<&VariableSpec> {
        self.index.get(id).map(|&i| &self.variables[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn meta_variables(&self) -> impl Iterator<Item = &VariableSpec> {
        self.meta.iter().map(|&i| &self.variables[i])
    }

    pub fn n_meta(&self) -> usize {
        self.meta.len()
    }

    /// Checks that `xm` assigns exactly the meta variables, each within scope.
    pub fn validate_meta(&self, xm: &MetaComponent) -> Result<(), DomainError> {
        for (id, v) in xm.iter() {
            match self.variable(id) {
                Some(spec) if spec.var_type.is_meta() => {
                    if !spec.value_in_scope(v) {
                        return Err(DomainError::new(
                            ErrorCode::InvalidMeta,
                            id,
                            format!("value {} outside scope", spec.render(v)),
                        ));
                    }
                }
                Some(_) => return Err(DomainError::new(ErrorCode::InvalidMeta, id, "not a meta variable")),
                None => return Err(DomainError::new(ErrorCode::InvalidMeta, id, "unknown meta variable")),
            }
        }
        if let Some(missing) = self.meta_variables().find(|s| xm.get(&s.id).is_none()) {
            return Err(DomainError::new(
                ErrorCode::InvalidMeta,
                &missing.id,
                "meta variable not assigned",
            ));
        }
        Ok(())
    }

    pub fn is_acting(&self, spec: &VariableSpec, xm: &MetaComponent) -> bool {
        match spec.role {
            Role::Meta | Role::Global => true,
            Role::Decreed => spec.decree.holds(xm),
        }
    }

    /// Declaration-order positions of the acting variables of `group`.
    pub fn acting_positions(&self, xm: &MetaComponent, group: TypeGroup) -> Result<Vec<usize>, DomainError> {
        self.validate_meta(xm)?;
        Ok(self.acting_positions_unchecked(xm, group))
    }

    pub(crate) fn acting_positions_unchecked(&self, xm: &MetaComponent, group: TypeGroup) -> Vec<usize> {
        self.variables
            .iter()
            .enumerate()
            .filter(|(_, v)| v.var_type.in_group(group) && self.is_acting(v, xm))
            .map(|(i, _)| i)
            .collect()
    }

    /// Ids of the acting variables of `group` under `xm`, in declaration order.
    pub fn acting_index_set(&self, xm: &MetaComponent, group: TypeGroup) -> Result<Vec<&str>, DomainError> {
        Ok(self
            .acting_positions(xm, group)?
            .into_iter()
            .map(|i| self.variables[i].id.as_str())
            .collect())
    }

    /// `n^t(x^m)`.
    pub fn dimension(&self, xm: &MetaComponent, group: TypeGroup) -> Result<usize, DomainError> {
        Ok(self.acting_positions(xm, group)?.len())
    }

    /// All reasons `p` is not in the domain; empty when it is.
    pub fn violations(&self, p: &Point) -> Vec<Violation> {
        let mut out = Vec::new();
        if let Err(e) = self.validate_meta(&p.meta) {
            out.push(Violation::InvalidMeta(e.to_string()));
            return out;
        }
        let meta_label = self.render_meta(&p.meta);
        let mut check = |id: &str, value: Option<f64>, categorical: bool| {
            let Some(spec) = self.variable(id) else {
                out.push(Violation::Unknown { id: id.into() });
                return;
            };
            let right_component = if categorical {
                spec.var_type.is_categorical()
            } else {
                spec.var_type.is_standard()
            };
            if !right_component {
                out.push(Violation::WrongComponent { id: id.into() });
                return;
            }
            if !self.is_acting(spec, &p.meta) {
                out.push(Violation::Nonacting {
                    id: id.into(),
                    meta: meta_label.clone(),
                });
                return;
            }
            if let Some(v) = value {
                if !spec.scope.contains_number(v) {
                    out.push(Violation::ScopeViolation {
                        id: id.into(),
                        value: v.to_string(),
                    });
                }
            }
        };
        for (id, &c) in &p.categorical {
            check(id, Some(c as f64), true);
        }
        for (id, &v) in &p.standard {
            check(id, Some(v), false);
        }
        for spec in &self.variables {
            if spec.var_type.is_meta() || !self.is_acting(spec, &p.meta) {
                continue;
            }
            let present = if spec.var_type.is_categorical() {
                p.categorical.contains_key(&spec.id)
            } else {
                p.standard.contains_key(&spec.id)
            };
            if !present {
                out.push(Violation::Missing { id: spec.id.clone() });
            }
        }
        out
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.violations(p).is_empty()
    }

    /// Cartesian product of the meta scopes in declaration-order lexicographic
    /// order (first declared meta variable varies slowest).
    pub fn enumerate_meta_set(&self) -> Result<Vec<MetaComponent>, DomainError> {
        let mut out = vec![MetaComponent::new()];
        for spec in self.meta_variables() {
            let Some(values) = spec.finite_values() else {
                return Err(DomainError::new(
                    ErrorCode::NotEnumerable,
                    &spec.id,
                    "meta-continuous variable makes the meta set infinite",
                ));
            };
            out = out
                .into_iter()
                .flat_map(|xm| values.iter().map(move |&v| xm.clone().with(spec.id.clone(), v)))
                .collect();
        }
        Ok(out)
    }

    /// Builds a point under `xm`, taking values from `partial` when present and
    /// falling back to defaults. Values of nonacting variables are dropped.
    pub fn complete_point(&self, xm: &MetaComponent, partial: &BTreeMap<String, Value>) -> Result<Point, DomainError> {
        self.validate_meta(xm)?;
        let mut p = Point::new(xm.clone());
        for spec in &self.variables {
            if spec.var_type.is_meta() || !self.is_acting(spec, xm) {
                continue;
            }
            let v = match partial.get(&spec.id) {
                Some(&v) => {
                    let v = coerce(spec, v);
                    if !spec.value_in_scope(v) {
                        return Err(DomainError::new(
                            ErrorCode::ScopeViolation,
                            &spec.id,
                            format!("value {} outside scope", spec.render(v)),
                        ));
                    }
                    v
                }
                None => spec.default_value(),
            };
            match v {
                Value::Category(c) => {
                    p.categorical.insert(spec.id.clone(), c);
                }
                other => {
                    p.standard.insert(spec.id.clone(), other.as_f64());
                }
            }
        }
        Ok(p)
    }

    /// Flattens a point's categorical and standard values into typed values.
    pub fn assignments(&self, p: &Point) -> BTreeMap<String, Value> {
        let mut out = BTreeMap::new();
        for (id, &c) in &p.categorical {
            out.insert(id.clone(), Value::Category(c));
        }
        for (id, &v) in &p.standard {
            if let Some(spec) = self.variable(id) {
                out.insert(id.clone(), spec.value_from_number(v));
            }
        }
        out
    }

    /// Typed value of any variable in `p` (meta, categorical or standard).
    pub fn value_of(&self, p: &Point, id: &str) -> Option<Value> {
        let spec = self.variable(id)?;
        if spec.var_type.is_meta() {
            p.meta.get(id)
        } else if spec.var_type.is_categorical() {
            p.categorical.get(id).map(|&c| Value::Category(c))
        } else {
            p.standard.get(id).map(|&v| spec.value_from_number(v))
        }
    }

    /// `(l=2, o=Adam)` style rendering in declaration order.
    pub fn render_meta(&self, xm: &MetaComponent) -> String {
        let parts: Vec<String> = self
            .meta_variables()
            .filter_map(|s| xm.get(&s.id).map(|v| format!("{}={}", s.id, s.render(v))))
            .collect();
        format!("({})", parts.join(", "))
    }

    /// Meta component from `(id, text)` pairs, e.g. `[("l", "2"), ("o", "Adam")]`.
    pub fn meta_from_labels(&self, pairs: &[(&str, &str)]) -> Result<MetaComponent, DomainError> {
        let mut xm = MetaComponent::new();
        for (id, text) in pairs {
            let spec = self
                .variable(id)
                .ok_or_else(|| DomainError::new(ErrorCode::UnknownId, *id, "unknown variable"))?;
            let v = spec
                .parse_value(text)
                .ok_or_else(|| DomainError::new(ErrorCode::ScopeViolation, *id, format!("cannot parse {text:?}")))?;
            xm.insert(*id, v);
        }
        self.validate_meta(&xm)?;
        Ok(xm)
    }

    /// Wire form `{"meta": {...}, "categorical": {id: label}, "standard": {id: number}}`.
    pub fn point_to_json(&self, p: &Point) -> serde_json::Value {
        let mut meta = serde_json::Map::new();
        for spec in self.meta_variables() {
            if let Some(v) = p.meta.get(&spec.id) {
                let j = match v {
                    Value::Category(c) => serde_json::Value::from(spec.scope.category_label(c).unwrap_or_default()),
                    Value::Integer(i) => serde_json::Value::from(i),
                    Value::Real(r) => serde_json::Value::from(r),
                };
                meta.insert(spec.id.clone(), j);
            }
        }
        let mut cat = serde_json::Map::new();
        let mut std = serde_json::Map::new();
        for spec in &self.variables {
            if let Some(&c) = p.categorical.get(&spec.id) {
                cat.insert(spec.id.clone(), spec.scope.category_label(c).unwrap_or_default().into());
            }
            if let Some(&v) = p.standard.get(&spec.id) {
                let j = if spec.var_type == VarType::Integer {
                    serde_json::Value::from(v as i64)
                } else {
                    serde_json::Value::from(v)
                };
                std.insert(spec.id.clone(), j);
            }
        }
        serde_json::json!({ "meta": meta, "categorical": cat, "standard": std })
    }

    /// Inverse of [`Domain::point_to_json`]. Does not check membership.
    pub fn point_from_json(&self, j: &serde_json::Value) -> Result<Point, DomainError> {
        let mut p = Point::default();
        let section = |name: &str| j.get(name).and_then(|s| s.as_object()).cloned();
        let lookup = |id: &str| {
            self.variable(id)
                .ok_or_else(|| DomainError::new(ErrorCode::UnknownId, id, "unknown variable"))
        };
        let bad = |id: &str| DomainError::new(ErrorCode::ScopeViolation, id, "unreadable value");
        for (id, v) in section("meta").unwrap_or_default() {
            let spec = lookup(&id)?;
            let value = match (&spec.scope, &v) {
                (Scope::Categorical { .. }, serde_json::Value::String(s)) => {
                    Value::Category(spec.scope.category_index(s).ok_or_else(|| bad(&id))?)
                }
                (Scope::Integer { .. }, _) => Value::Integer(v.as_i64().ok_or_else(|| bad(&id))?),
                (Scope::Continuous { .. }, _) => Value::Real(v.as_f64().ok_or_else(|| bad(&id))?),
                _ => return Err(bad(&id)),
            };
            p.meta.insert(id, value);
        }
        for (id, v) in section("categorical").unwrap_or_default() {
            let spec = lookup(&id)?;
            let label = v.as_str().ok_or_else(|| bad(&id))?;
            let c = spec.scope.category_index(label).ok_or_else(|| bad(&id))?;
            p.categorical.insert(id, c);
        }
        for (id, v) in section("standard").unwrap_or_default() {
            lookup(&id)?;
            p.standard.insert(id.clone(), v.as_f64().ok_or_else(|| bad(&id))?);
        }
        Ok(p)
    }
}

fn coerce(spec: &VariableSpec, v: Value) -> Value {
    match (spec.var_type, v) {
        (VarType::Integer | VarType::MetaInteger, Value::Real(r)) if r.fract() == 0.0 => Value::Integer(r as i64),
        (VarType::Continuous | VarType::MetaContinuous, Value::Integer(i)) => Value::Real(i as f64),
        _ => v,
    }
}

fn validate_atom(
    atom: &Atom,
    variables: &[VariableSpec],
    index: &HashMap<String, usize>,
    path: &str,
) -> Result<(), DomainError> {
    let Some(&target) = index.get(atom.var()) else {
        return Err(DomainError::new(
            ErrorCode::UnknownId,
            path,
            format!("decree references unknown variable {:?}", atom.var()),
        ));
    };
    let spec = &variables[target];
    if !spec.var_type.is_meta() {
        return Err(DomainError::new(
            ErrorCode::MetaDecreeingMeta,
            path,
            format!("decree references non-meta variable {:?}", spec.id),
        ));
    }
    let compatible = match atom {
        Atom::Threshold { .. } => matches!(spec.var_type, VarType::MetaInteger | VarType::MetaCategorical),
        Atom::Membership { allowed, .. } => match (allowed, spec.var_type) {
            (Allowed::Categories(cs), VarType::MetaCategorical) => {
                cs.iter().all(|&c| spec.value_in_scope(Value::Category(c)))
            }
            (Allowed::Integers(_), VarType::MetaInteger) => true,
            (Allowed::Intervals(_), VarType::MetaContinuous) => true,
            _ => false,
        },
    };
    if !compatible {
        return Err(DomainError::new(
            ErrorCode::ScopeMalformed,
            path,
            format!("atom kind incompatible with {:?} variable {:?}", spec.var_type, spec.id),
        ));
    }
    Ok(())
}
