//! JSON problem files: variables, constraints, blackbox binding and
//! neighborhood rules.
//!
//! Indexed families (`"family": {"from": 1, "to": 3}`) are expanded at load
//! time; `{i}`, `{i-1}` and `{i+1}` placeholders in ids, variable references
//! and thresholds are substituted per member. Named constants are substituted
//! into constraint constants so that constraint bodies stay linear.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{ConstraintBody, ConstraintSpec, ConstraintSystem, LinearTerm};
use crate::domain::{
    Allowed, Atom, DecreePredicate, Domain, DomainError, ErrorCode, Interval, Role, Scope, Value, VarType, VariableSpec,
};
use crate::neighborhood::{NeighborRule, NeighborhoodMapping, RuleKind, Target};

/// Bundled MLP hyperparameter problem (`l` in {2, 3}).
pub const MLP_JSON: &str = include_str!("../problems/mlp.json");
/// Bundled small fully discrete problem.
pub const TOY_JSON: &str = include_str!("../problems/toy.json");

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("syntax error: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(#[from] DomainError),
}

impl LoadError {
    pub fn code(&self) -> Option<ErrorCode> {
        match self {
            LoadError::Invalid(e) => Some(e.code),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlackboxBinding {
    Builtin { name: String, params: serde_json::Value },
    Command { argv: Vec<String>, timeout_secs: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhoods {
    pub meta: NeighborhoodMapping,
    /// `None` selects the default categorical rules.
    pub categorical: Option<NeighborhoodMapping>,
}

/// A validated optimization problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub name: String,
    pub constants: BTreeMap<String, f64>,
    pub domain: Domain,
    pub constraints: ConstraintSystem,
    pub blackbox: BlackboxBinding,
    pub neighborhoods: Neighborhoods,
}

impl Problem {
    pub fn from_json_str(text: &str) -> Result<Problem, LoadError> {
        let raw: RawProblem = serde_json::from_str(text)?;
        Ok(raw.into_problem()?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Problem, LoadError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Problem::from_json_str(&text)
    }

    pub fn mlp() -> Problem {
        Problem::from_json_str(MLP_JSON).expect("bundled mlp.json is valid")
    }

    pub fn toy() -> Problem {
        Problem::from_json_str(TOY_JSON).expect("bundled toy.json is valid")
    }

    /// The MLP problem with the layer count ranging over `l_min..=l_max` and
    /// `l_max` unit variables. `mlp_with_layers(2, 3)` equals [`Problem::mlp`].
    pub fn mlp_with_layers(l_min: i64, l_max: i64) -> Result<Problem, LoadError> {
        let mut raw: serde_json::Value = serde_json::from_str(MLP_JSON)?;
        for v in raw["variables"].as_array_mut().into_iter().flatten() {
            match v["id"].as_str() {
                Some("l") => v["scope"] = serde_json::json!({ "lo": l_min, "hi": l_max }),
                Some("u{i}") => v["family"]["to"] = l_max.into(),
                _ => {}
            }
        }
        for c in raw["constraints"].as_array_mut().into_iter().flatten() {
            if c.get("family").is_some() {
                c["family"]["to"] = l_max.into();
            }
            if let Some(terms) = c["analytic"]["terms"].as_array_mut() {
                for t in terms {
                    if t.get("family").is_some() {
                        t["family"]["to"] = l_max.into();
                    }
                }
            }
        }
        let raw: RawProblem = serde_json::from_value(raw)?;
        Ok(raw.into_problem()?)
    }

    /// Re-serializes the validated model in expanded form (no families).
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(RawProblem::from_problem(self)).expect("problem serializes")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    #[serde(default)]
    name: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    constants: BTreeMap<String, f64>,
    variables: Vec<RawVariable>,
    #[serde(default)]
    constraints: Vec<RawConstraint>,
    blackbox: RawBlackbox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    neighborhoods: Option<RawNeighborhoods>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Family {
    from: i64,
    to: i64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVariable {
    id: String,
    #[serde(rename = "type")]
    var_type: VarType,
    role: Role,
    scope: RawScope,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    decree: Vec<RawAtom>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    default: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    family: Option<Family>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScope {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    categories: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hi: Option<f64>,
    #[serde(default, skip_serializing_if = "is_false")]
    lo_open: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    hi_open: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    log: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum IntOrTemplate {
    Int(i64),
    Template(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum NumOrName {
    Num(f64),
    Name(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAtom {
    var: String,
    #[serde(default, rename = "in", skip_serializing_if = "Option::is_none")]
    members: Option<Vec<serde_json::Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    at_least: Option<IntOrTemplate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    in_range: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTerm {
    #[serde(default = "one")]
    coef: f64,
    var: String,
    #[serde(default, skip_serializing_if = "is_false")]
    if_acting: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    family: Option<Family>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnalytic {
    terms: Vec<RawTerm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    constant: Option<NumOrName>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstraint {
    id: String,
    role: Role,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    decree: Vec<RawAtom>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    analytic: Option<RawAnalytic>,
    #[serde(default, skip_serializing_if = "is_false")]
    blackbox: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    family: Option<Family>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum RawBlackbox {
    Builtin {
        builtin: String,
        #[serde(default)]
        params: serde_json::Value,
    },
    Command {
        command: Vec<String>,
        #[serde(default = "default_timeout")]
        timeout: f64,
    },
}

fn default_timeout() -> f64 {
    60.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNeighborhoods {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<RawMapping>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    categorical: Option<RawMapping>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum RawMapping {
    Builtin {
        builtin: String,
        layers: String,
        optimizer: String,
    },
    Rules {
        rules: Vec<RawRule>,
    },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    increment: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    step: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    delta: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    swap: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    combined: Option<Vec<RawRule>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    custom: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    guard: Vec<RawAtom>,
}

/// Replaces `{i}`, `{i-K}` and `{i+K}` placeholders.
fn substitute(text: &str, i: Option<i64>, path: &str) -> Result<String, DomainError> {
    let Some(i) = i else {
        return Ok(text.to_owned());
    };
    let mut out = String::new();
    let mut rest = text;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let end = rest[start..].find('}').ok_or_else(|| {
            DomainError::new(
                ErrorCode::ScopeMalformed,
                path,
                format!("unclosed placeholder in {text:?}"),
            )
        })? + start;
        let inner = rest[start + 1..end].replace(' ', "");
        let value = if inner == "i" {
            i
        } else if let Some(k) = inner.strip_prefix("i-") {
            i - k.parse::<i64>().map_err(|_| bad_placeholder(path, text))?
        } else if let Some(k) = inner.strip_prefix("i+") {
            i + k.parse::<i64>().map_err(|_| bad_placeholder(path, text))?
        } else {
            return Err(bad_placeholder(path, text));
        };
        out.push_str(&value.to_string());
        rest = &rest[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn bad_placeholder(path: &str, text: &str) -> DomainError {
    DomainError::new(ErrorCode::ScopeMalformed, path, format!("bad placeholder in {text:?}"))
}

fn family_members(f: Option<Family>) -> Vec<Option<i64>> {
    match f {
        Some(f) => (f.from..=f.to).map(Some).collect(),
        None => vec![None],
    }
}

impl RawScope {
    fn to_scope(&self, t: VarType, path: &str) -> Result<Scope, DomainError> {
        let bad = |m: &str| DomainError::new(ErrorCode::ScopeMalformed, path, m);
        match t {
            VarType::MetaCategorical | VarType::Nominal | VarType::Ordinal => {
                let categories = self
                    .categories
                    .clone()
                    .ok_or_else(|| bad("categorical scope needs \"categories\""))?;
                Ok(Scope::Categorical { categories })
            }
            VarType::MetaInteger | VarType::Integer => {
                let (Some(lo), Some(hi)) = (self.lo, self.hi) else {
                    return Err(bad("integer scope needs lo and hi"));
                };
                if lo.fract() != 0.0 || hi.fract() != 0.0 {
                    return Err(bad("integer scope bounds must be integers"));
                }
                Ok(Scope::Integer {
                    lo: lo as i64,
                    hi: hi as i64,
                })
            }
            VarType::MetaContinuous | VarType::Continuous => {
                let (Some(lo), Some(hi)) = (self.lo, self.hi) else {
                    return Err(bad("continuous scope needs lo and hi"));
                };
                Ok(Scope::Continuous {
                    lo,
                    hi,
                    lo_open: self.lo_open,
                    hi_open: self.hi_open,
                    log: self.log,
                })
            }
        }
    }

    fn from_scope(s: &Scope) -> RawScope {
        match s {
            Scope::Categorical { categories } => RawScope {
                categories: Some(categories.clone()),
                ..RawScope::default()
            },
            Scope::Integer { lo, hi } => RawScope {
                lo: Some(*lo as f64),
                hi: Some(*hi as f64),
                ..RawScope::default()
            },
            Scope::Continuous {
                lo,
                hi,
                lo_open,
                hi_open,
                log,
            } => RawScope {
                lo: Some(*lo),
                hi: Some(*hi),
                lo_open: *lo_open,
                hi_open: *hi_open,
                log: *log,
                ..RawScope::default()
            },
        }
    }
}

struct Resolver<'a> {
    variables: &'a [VariableSpec],
}

impl Resolver<'_> {
    fn spec(&self, id: &str) -> Option<&VariableSpec> {
        self.variables.iter().find(|v| v.id == id)
    }

    fn atom(&self, raw: &RawAtom, i: Option<i64>, path: &str) -> Result<Atom, DomainError> {
        let var = substitute(&raw.var, i, path)?;
        let spec = self
            .spec(&var)
            .ok_or_else(|| DomainError::new(ErrorCode::UnknownId, path, format!("unknown variable {var:?}")))?;
        if !spec.var_type.is_meta() {
            return Err(DomainError::new(
                ErrorCode::MetaDecreeingMeta,
                path,
                format!("decree references non-meta variable {var:?}"),
            ));
        }
        let kinds = [raw.members.is_some(), raw.at_least.is_some(), raw.in_range.is_some()];
        if kinds.iter().filter(|&&k| k).count() != 1 {
            return Err(DomainError::new(
                ErrorCode::ScopeMalformed,
                path,
                "atom needs exactly one of \"in\", \"at_least\", \"in_range\"",
            ));
        }
        if let Some(min) = &raw.at_least {
            let min = match min {
                IntOrTemplate::Int(k) => *k,
                IntOrTemplate::Template(t) => substitute(t, i, path)?
                    .parse::<i64>()
                    .map_err(|_| bad_placeholder(path, t))?,
            };
            return Ok(Atom::Threshold { var, min });
        }
        if let Some(ranges) = &raw.in_range {
            return Ok(Atom::Membership {
                var,
                allowed: Allowed::Intervals(ranges.iter().map(|[lo, hi]| Interval { lo: *lo, hi: *hi }).collect()),
            });
        }
        let members = raw.members.as_deref().unwrap_or_default();
        let bad_member = |m: &serde_json::Value| {
            DomainError::new(
                ErrorCode::ScopeMalformed,
                path,
                format!("{m} is not a value of {var:?}"),
            )
        };
        let allowed = match spec.var_type {
            VarType::MetaCategorical => Allowed::Categories(
                members
                    .iter()
                    .map(|m| {
                        m.as_str()
                            .and_then(|s| spec.scope.category_index(s))
                            .ok_or_else(|| bad_member(m))
                    })
                    .collect::<Result<_, _>>()?,
            ),
            VarType::MetaInteger => Allowed::Integers(
                members
                    .iter()
                    .map(|m| m.as_i64().ok_or_else(|| bad_member(m)))
                    .collect::<Result<_, _>>()?,
            ),
            _ => {
                return Err(DomainError::new(
                    ErrorCode::ScopeMalformed,
                    path,
                    "use \"in_range\" for meta-continuous variables",
                ))
            }
        };
        Ok(Atom::Membership { var, allowed })
    }

    fn predicate(&self, raws: &[RawAtom], i: Option<i64>, path: &str) -> Result<DecreePredicate, DomainError> {
        raws.iter()
            .enumerate()
            .map(|(j, a)| self.atom(a, i, &format!("{path}.decree[{j}]")))
            .collect::<Result<Vec<_>, _>>()
            .map(DecreePredicate::new)
    }

    fn rule(&self, raw: &RawRule, path: &str) -> Result<RuleKind, DomainError> {
        let bad = |m: &str| DomainError::new(ErrorCode::ScopeMalformed, path, m);
        let check = |id: &String| -> Result<String, DomainError> {
            self.spec(id)
                .map(|s| s.id.clone())
                .ok_or_else(|| DomainError::new(ErrorCode::UnknownId, path, format!("unknown variable {id:?}")))
        };
        let kind = match raw {
            RawRule { increment: Some(v), .. } => RuleKind::IncrementMeta {
                var: check(v)?,
                delta: raw.delta.ok_or_else(|| bad("increment rule needs delta"))?,
            },
            RawRule { step: Some(v), .. } => RuleKind::StepOrdinal {
                var: check(v)?,
                delta: raw.delta.ok_or_else(|| bad("step rule needs delta"))?,
            },
            RawRule { swap: Some(v), .. } => RuleKind::Swap { var: check(v)? },
            RawRule {
                combined: Some(parts), ..
            } => RuleKind::Combined(
                parts
                    .iter()
                    .enumerate()
                    .map(|(j, p)| self.rule(p, &format!("{path}.combined[{j}]")))
                    .collect::<Result<_, _>>()?,
            ),
            RawRule { custom: Some(name), .. } => RuleKind::Custom(name.clone()),
            _ => return Err(bad("rule needs one of increment, step, swap, combined, custom")),
        };
        Ok(kind)
    }

    fn mapping(
        &self,
        raw: &RawMapping,
        target: Target,
        domain: &Domain,
        path: &str,
    ) -> Result<NeighborhoodMapping, DomainError> {
        match raw {
            RawMapping::Builtin {
                builtin,
                layers,
                optimizer,
            } => {
                if builtin != "mlp" || target != Target::Meta {
                    return Err(DomainError::new(
                        ErrorCode::UnknownId,
                        path,
                        format!("unknown builtin neighborhood {builtin:?}"),
                    ));
                }
                NeighborhoodMapping::mlp_meta(domain, layers, optimizer)
                    .map_err(|e| DomainError::new(e.code, path, e.message))
            }
            RawMapping::Rules { rules } => {
                let rules = rules
                    .iter()
                    .enumerate()
                    .map(|(j, r)| {
                        let rpath = format!("{path}.rules[{j}]");
                        Ok(NeighborRule::guarded(
                            self.rule(r, &rpath)?,
                            self.predicate(&r.guard, None, &rpath)?,
                        ))
                    })
                    .collect::<Result<_, DomainError>>()?;
                Ok(NeighborhoodMapping { target, rules })
            }
        }
    }
}

fn value_from_json(spec: &VariableSpec, j: &serde_json::Value) -> Option<Value> {
    match &spec.scope {
        Scope::Categorical { .. } => j
            .as_str()
            .and_then(|s| spec.scope.category_index(s))
            .map(Value::Category),
        Scope::Integer { .. } => j.as_i64().map(Value::Integer),
        Scope::Continuous { .. } => j.as_f64().map(Value::Real),
    }
}

fn value_to_json(spec: &VariableSpec, v: Value) -> serde_json::Value {
    match v {
        Value::Category(c) => spec.scope.category_label(c).unwrap_or_default().into(),
        Value::Integer(i) => i.into(),
        Value::Real(r) => r.into(),
    }
}

fn atom_to_raw(atom: &Atom, domain: &Domain) -> RawAtom {
    match atom {
        Atom::Threshold { var, min } => RawAtom {
            var: var.clone(),
            members: None,
            at_least: Some(IntOrTemplate::Int(*min)),
            in_range: None,
        },
        Atom::Membership { var, allowed } => {
            let spec = domain.variable(var);
            let (members, in_range) = match allowed {
                Allowed::Categories(cs) => (
                    Some(
                        cs.iter()
                            .map(|&c| spec.and_then(|s| s.scope.category_label(c)).unwrap_or_default().into())
                            .collect(),
                    ),
                    None,
                ),
                Allowed::Integers(is) => (Some(is.iter().map(|&i| i.into()).collect()), None),
                Allowed::Intervals(ivs) => (None, Some(ivs.iter().map(|iv| [iv.lo, iv.hi]).collect())),
            };
            RawAtom {
                var: var.clone(),
                members,
                at_least: None,
                in_range,
            }
        }
    }
}

fn rule_to_raw(kind: &RuleKind) -> RawRule {
    match kind {
        RuleKind::IncrementMeta { var, delta } => RawRule {
            increment: Some(var.clone()),
            delta: Some(*delta),
            ..RawRule::default()
        },
        RuleKind::StepOrdinal { var, delta } => RawRule {
            step: Some(var.clone()),
            delta: Some(*delta),
            ..RawRule::default()
        },
        RuleKind::Swap { var } => RawRule {
            swap: Some(var.clone()),
            ..RawRule::default()
        },
        RuleKind::Combined(parts) => RawRule {
            combined: Some(parts.iter().map(rule_to_raw).collect()),
            ..RawRule::default()
        },
        RuleKind::Custom(name) => RawRule {
            custom: Some(name.clone()),
            ..RawRule::default()
        },
    }
}

fn mapping_to_raw(m: &NeighborhoodMapping, domain: &Domain) -> RawMapping {
    RawMapping::Rules {
        rules: m
            .rules
            .iter()
            .map(|r| RawRule {
                guard: r.guard.conjuncts.iter().map(|a| atom_to_raw(a, domain)).collect(),
                ..rule_to_raw(&r.kind)
            })
            .collect(),
    }
}

impl RawProblem {
    fn into_problem(self) -> Result<Problem, DomainError> {
        // Expand variable families; scopes and decrees are resolved in a
        // second pass once every id is known.
        let mut expanded: Vec<(usize, Option<i64>, String, VariableSpec)> = Vec::new();
        for (k, rv) in self.variables.iter().enumerate() {
            let path = format!("variables[{k}]");
            let scope = rv.scope.to_scope(rv.var_type, &format!("{path}.scope"))?;
            for i in family_members(rv.family) {
                let id = substitute(&rv.id, i, &format!("{path}.id"))?;
                expanded.push((
                    k,
                    i,
                    path.clone(),
                    VariableSpec::new(id, rv.var_type, rv.role, scope.clone()),
                ));
            }
        }
        let specs: Vec<VariableSpec> = expanded.iter().map(|e| e.3.clone()).collect();
        let resolver = Resolver { variables: &specs };
        let mut variables = Vec::with_capacity(expanded.len());
        for (k, i, path, mut spec) in expanded {
            let rv = &self.variables[k];
            spec.decree = resolver.predicate(&rv.decree, i, &path)?;
            if let Some(d) = &rv.default {
                spec.default = Some(value_from_json(&spec, d).ok_or_else(|| {
                    DomainError::new(
                        ErrorCode::ScopeViolation,
                        format!("{path}.default"),
                        format!("{d} is not a value of {:?}", spec.id),
                    )
                })?);
            }
            variables.push((path, spec));
        }
        let origins: Vec<String> = variables.iter().map(|(p, _)| p.clone()).collect();
        let domain = Domain::new(variables.into_iter().map(|(_, s)| s).collect()).map_err(|mut e| {
            // Report the path of the family declaration, not the expanded index.
            if let Some(rest) = e.path.strip_prefix("variables[") {
                if let Some((idx, tail)) = rest.split_once(']') {
                    if let Some(origin) = idx.parse::<usize>().ok().and_then(|n| origins.get(n)) {
                        e.path = format!("{origin}{tail}");
                    }
                }
            }
            e
        })?;
        let resolver = Resolver {
            variables: domain.variables(),
        };

        let mut constraints = Vec::new();
        for (k, rc) in self.constraints.iter().enumerate() {
            let path = format!("constraints[{k}]");
            for i in family_members(rc.family) {
                let id = substitute(&rc.id, i, &format!("{path}.id"))?;
                let decree = resolver.predicate(&rc.decree, i, &path)?;
                let body = match (&rc.analytic, rc.blackbox) {
                    (Some(a), false) => {
                        let mut terms = Vec::new();
                        for (j, t) in a.terms.iter().enumerate() {
                            let tpath = format!("{path}.analytic.terms[{j}]");
                            for ti in family_members(t.family) {
                                let idx = ti.or(i);
                                terms.push(LinearTerm {
                                    coef: t.coef,
                                    var: substitute(&t.var, idx, &tpath)?,
                                    if_acting: t.if_acting,
                                });
                            }
                        }
                        let constant = match &a.constant {
                            None => 0.0,
                            Some(NumOrName::Num(x)) => *x,
                            Some(NumOrName::Name(name)) => {
                                let (sign, key) = match name.strip_prefix('-') {
                                    Some(rest) => (-1.0, rest.trim()),
                                    None => (1.0, name.trim()),
                                };
                                sign * self.constants.get(key).copied().ok_or_else(|| {
                                    DomainError::new(
                                        ErrorCode::UnknownId,
                                        format!("{path}.analytic.constant"),
                                        format!("unknown constant {key:?}"),
                                    )
                                })?
                            }
                        };
                        ConstraintBody::Analytic { terms, constant }
                    }
                    (None, true) => ConstraintBody::Blackbox,
                    _ => {
                        return Err(DomainError::new(
                            ErrorCode::ScopeMalformed,
                            path,
                            "constraint needs exactly one of \"analytic\" or \"blackbox\": true",
                        ))
                    }
                };
                constraints.push((
                    path.clone(),
                    ConstraintSpec {
                        id,
                        role: rc.role,
                        decree,
                        body,
                    },
                ));
            }
        }
        let cpaths: Vec<String> = constraints.iter().map(|(p, _)| p.clone()).collect();
        let constraints =
            ConstraintSystem::new(constraints.into_iter().map(|(_, c)| c).collect(), &domain).map_err(|mut e| {
                if let Some(rest) = e.path.strip_prefix("constraints[") {
                    if let Some((idx, tail)) = rest.split_once(']') {
                        if let Some(origin) = idx.parse::<usize>().ok().and_then(|n| cpaths.get(n)) {
                            e.path = format!("{origin}{tail}");
                        }
                    }
                }
                e
            })?;

        let blackbox = match self.blackbox {
            RawBlackbox::Builtin { builtin, params } => BlackboxBinding::Builtin { name: builtin, params },
            RawBlackbox::Command { command, timeout } => {
                if command.is_empty() {
                    return Err(DomainError::new(
                        ErrorCode::ScopeMalformed,
                        "blackbox.command",
                        "empty command",
                    ));
                }
                BlackboxBinding::Command {
                    argv: command,
                    timeout_secs: timeout,
                }
            }
        };

        let raw_n = self.neighborhoods.unwrap_or(RawNeighborhoods {
            meta: None,
            categorical: None,
        });
        let meta = match &raw_n.meta {
            Some(m) => resolver.mapping(m, Target::Meta, &domain, "neighborhoods.meta")?,
            None => NeighborhoodMapping::default_meta(&domain),
        };
        let categorical = match &raw_n.categorical {
            Some(m) => Some(resolver.mapping(m, Target::Categorical, &domain, "neighborhoods.categorical")?),
            None => None,
        };

        Ok(Problem {
            name: self.name,
            constants: self.constants,
            domain,
            constraints,
            blackbox,
            neighborhoods: Neighborhoods { meta, categorical },
        })
    }

    fn from_problem(p: &Problem) -> RawProblem {
        let d = &p.domain;
        let variables = d
            .variables()
            .iter()
            .map(|v| RawVariable {
                id: v.id.clone(),
                var_type: v.var_type,
                role: v.role,
                scope: RawScope::from_scope(&v.scope),
                decree: v.decree.conjuncts.iter().map(|a| atom_to_raw(a, d)).collect(),
                default: v.default.map(|x| value_to_json(v, x)),
                family: None,
            })
            .collect();
        let constraints = p
            .constraints
            .constraints()
            .iter()
            .map(|c| RawConstraint {
                id: c.id.clone(),
                role: c.role,
                decree: c.decree.conjuncts.iter().map(|a| atom_to_raw(a, d)).collect(),
                analytic: match &c.body {
                    ConstraintBody::Analytic { terms, constant } => Some(RawAnalytic {
                        terms: terms
                            .iter()
                            .map(|t| RawTerm {
                                coef: t.coef,
                                var: t.var.clone(),
                                if_acting: t.if_acting,
                                family: None,
                            })
                            .collect(),
                        constant: Some(NumOrName::Num(*constant)),
                    }),
                    ConstraintBody::Blackbox => None,
                },
                blackbox: c.body == ConstraintBody::Blackbox,
                family: None,
            })
            .collect();
        let blackbox = match &p.blackbox {
            BlackboxBinding::Builtin { name, params } => RawBlackbox::Builtin {
                builtin: name.clone(),
                params: params.clone(),
            },
            BlackboxBinding::Command { argv, timeout_secs } => RawBlackbox::Command {
                command: argv.clone(),
                timeout: *timeout_secs,
            },
        };
        RawProblem {
            name: p.name.clone(),
            constants: p.constants.clone(),
            variables,
            constraints,
            blackbox,
            neighborhoods: Some(RawNeighborhoods {
                meta: Some(mapping_to_raw(&p.neighborhoods.meta, d)),
                categorical: p.neighborhoods.categorical.as_ref().map(|m| mapping_to_raw(m, d)),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placeholders() {
        assert_eq!(substitute("u{i}", Some(3), "p").unwrap(), "u3");
        assert_eq!(substitute("u{i-1}", Some(3), "p").unwrap(), "u2");
        assert_eq!(substitute("u{ i+2 }", Some(3), "p").unwrap(), "u5");
        assert_eq!(substitute("u{i}", None, "p").unwrap(), "u{i}");
        assert!(substitute("u{j}", Some(1), "p").is_err());
        assert!(substitute("u{i", Some(1), "p").is_err());
    }

    #[test]
    fn bundled_files_load() {
        let mlp = Problem::mlp();
        assert_eq!(mlp.domain.variables().len(), 13);
        let toy = Problem::toy();
        assert!(toy.domain.enumerate_meta_set().unwrap().len() == 2);
    }

    #[test]
    fn mlp_with_layers_matches_bundled() {
        assert_eq!(Problem::mlp_with_layers(2, 3).unwrap(), Problem::mlp());
    }

    #[test]
    fn reserialized_problem_is_a_fixpoint() {
        for p in [Problem::mlp(), Problem::toy(), Problem::mlp_with_layers(0, 4).unwrap()] {
            let text = serde_json::to_string_pretty(&p.to_json()).unwrap();
            let again = Problem::from_json_str(&text).unwrap();
            assert_eq!(again, p);
        }
    }

    #[test]
    fn syntax_errors_are_reported() {
        let err = Problem::from_json_str("{ not json").unwrap_err();
        assert!(matches!(err, LoadError::Syntax(_)));
    }
}
