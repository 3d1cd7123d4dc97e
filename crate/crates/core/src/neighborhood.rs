//! User-defined neighborhood mappings over meta and categorical components.
//!
//! A mapping is an ordered list of rules. Each rule turns the current
//! component into zero or more neighbor components; the mapping collects them
//! in rule order, drops the current component and removes duplicates.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use crate::domain::{
    Allowed, Atom, DecreePredicate, Domain, DomainError, MetaComponent, Point, Scope, TypeGroup, Value, VarType,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Meta,
    Categorical,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RuleKind {
    /// Adds `delta` to a meta-integer variable, clamped to its scope.
    IncrementMeta { var: String, delta: i64 },
    /// One neighbor per other category of a (meta-)categorical variable.
    Swap { var: String },
    /// Moves an ordinal level by `delta`, clamped to the scope.
    StepOrdinal { var: String, delta: i64 },
    /// Applies each listed move in turn; branches multiply.
    Combined(Vec<RuleKind>),
    /// Registered hook, looked up by name in a [`HookRegistry`].
    Custom(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborRule {
    pub kind: RuleKind,
    /// Applicability guard over the meta component the rule starts from.
    pub guard: DecreePredicate,
}

impl NeighborRule {
    pub fn new(kind: RuleKind) -> Self {
        NeighborRule {
            kind,
            guard: DecreePredicate::always(),
        }
    }

    pub fn guarded(kind: RuleKind, guard: DecreePredicate) -> Self {
        NeighborRule { kind, guard }
    }
}

/// Partial assignment produced by a custom hook.
pub type Change = Vec<(String, Value)>;

pub type CustomHook = Arc<dyn Fn(&Domain, &Point) -> Vec<Change> + Send + Sync>;

/// Custom rules, registered by name when embedding the library.
#[derive(Clone, Default)]
pub struct HookRegistry {
    hooks: HashMap<String, CustomHook>,
}

impl fmt::Debug for HookRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.hooks.keys()).finish()
    }
}

impl HookRegistry {
    pub fn register(&mut self, name: impl Into<String>, hook: CustomHook) {
        self.hooks.insert(name.into(), hook);
    }

    pub fn get(&self, name: &str) -> Option<&CustomHook> {
        self.hooks.get(name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodMapping {
    pub target: Target,
    pub rules: Vec<NeighborRule>,
}

type Assignment = BTreeMap<String, Value>;

impl NeighborhoodMapping {
    /// One `+1`/`-1` rule per meta-integer and one swap per meta-categorical
    /// variable, in declaration order.
    pub fn default_meta(domain: &Domain) -> Self {
        let mut rules = Vec::new();
        for spec in domain.meta_variables() {
            match spec.var_type {
                VarType::MetaInteger => {
                    for delta in [1, -1] {
                        rules.push(NeighborRule::new(RuleKind::IncrementMeta {
                            var: spec.id.clone(),
                            delta,
                        }));
                    }
                }
                VarType::MetaCategorical => rules.push(NeighborRule::new(RuleKind::Swap { var: spec.id.clone() })),
                _ => {}
            }
        }
        NeighborhoodMapping {
            target: Target::Meta,
            rules,
        }
    }

    /// Swaps on nominal variables and `+-1` level moves on ordinal variables.
    /// Rules on variables that are nonacting under the target meta component
    /// simply yield nothing.
    pub fn default_categorical(domain: &Domain) -> Self {
        let mut rules = Vec::new();
        for spec in domain.variables() {
            match spec.var_type {
                VarType::Nominal => rules.push(NeighborRule::new(RuleKind::Swap { var: spec.id.clone() })),
                VarType::Ordinal => {
                    for delta in [1, -1] {
                        rules.push(NeighborRule::new(RuleKind::StepOrdinal {
                            var: spec.id.clone(),
                            delta,
                        }));
                    }
                }
                _ => {}
            }
        }
        NeighborhoodMapping {
            target: Target::Categorical,
            rules,
        }
    }

    /// The five meta rules of the MLP example over layer count `layers` and a
    /// two-valued categorical `optimizer`:
    /// `(l+1,o)`, `(l-1,o)`, `(l,o')`, `(l+1,o')`, `(l-1,o')`, with the
    /// `l+1` rules guarded by `l < l_max` and the `l-1` rules by `l > l_min`.
    pub fn mlp_meta(domain: &Domain, layers: &str, optimizer: &str) -> Result<Self, DomainError> {
        let spec = domain
            .variable(layers)
            .ok_or_else(|| DomainError::new(crate::domain::ErrorCode::UnknownId, layers, "unknown variable"))?;
        domain
            .variable(optimizer)
            .ok_or_else(|| DomainError::new(crate::domain::ErrorCode::UnknownId, optimizer, "unknown variable"))?;
        let Scope::Integer { lo, hi } = spec.scope else {
            return Err(DomainError::new(
                crate::domain::ErrorCode::ScopeMalformed,
                layers,
                "layer count must be meta-integer",
            ));
        };
        let below_max = DecreePredicate::new(vec![Atom::Membership {
            var: layers.into(),
            allowed: Allowed::Integers((lo..hi).collect()),
        }]);
        let above_min = DecreePredicate::new(vec![Atom::Threshold {
            var: layers.into(),
            min: lo + 1,
        }]);
        let inc = |delta| RuleKind::IncrementMeta {
            var: layers.into(),
            delta,
        };
        let swap = || RuleKind::Swap { var: optimizer.into() };
        Ok(NeighborhoodMapping {
            target: Target::Meta,
            rules: vec![
                NeighborRule::guarded(inc(1), below_max.clone()),
                NeighborRule::guarded(inc(-1), above_min.clone()),
                NeighborRule::new(swap()),
                NeighborRule::guarded(RuleKind::Combined(vec![inc(1), swap()]), below_max),
                NeighborRule::guarded(RuleKind::Combined(vec![inc(-1), swap()]), above_min),
            ],
        })
    }

    fn expand(
        &self,
        kind: &RuleKind,
        domain: &Domain,
        point: &Point,
        base: Assignment,
        hooks: &HookRegistry,
    ) -> Vec<Assignment> {
        match kind {
            RuleKind::IncrementMeta { var, delta } | RuleKind::StepOrdinal { var, delta } => {
                let (Some(spec), Some(v)) = (domain.variable(var), base.get(var).copied()) else {
                    return Vec::new();
                };
                let moved = match (v, &spec.scope) {
                    (Value::Integer(i), Scope::Integer { lo, hi }) => Value::Integer((i + delta).clamp(*lo, *hi)),
                    (Value::Category(c), Scope::Categorical { categories }) => {
                        Value::Category((c as i64 + delta).clamp(1, categories.len() as i64) as u32)
                    }
                    _ => return Vec::new(),
                };
                let mut next = base;
                next.insert(var.clone(), moved);
                vec![next]
            }
            RuleKind::Swap { var } => {
                let (Some(spec), Some(Value::Category(c))) = (domain.variable(var), base.get(var).copied()) else {
                    return Vec::new();
                };
                let n = spec.scope.n_categories().unwrap_or(0);
                (1..=n)
                    .filter(|&o| o != c)
                    .map(|o| {
                        let mut next = base.clone();
                        next.insert(var.clone(), Value::Category(o));
                        next
                    })
                    .collect()
            }
            RuleKind::Combined(parts) => {
                let mut frontier = vec![base];
                for part in parts {
                    frontier = frontier
                        .into_iter()
                        .flat_map(|b| self.expand(part, domain, point, b, hooks))
                        .collect();
                }
                frontier
            }
            RuleKind::Custom(name) => {
                let Some(hook) = hooks.get(name) else {
                    return Vec::new();
                };
                hook(domain, point)
                    .into_iter()
                    .map(|change| {
                        let mut next = base.clone();
                        for (id, v) in change {
                            if next.contains_key(&id) {
                                next.insert(id, v);
                            }
                        }
                        next
                    })
                    .collect()
            }
        }
    }

    fn collect(
        &self,
        domain: &Domain,
        point: &Point,
        guard_meta: &MetaComponent,
        base: &Assignment,
        hooks: &HookRegistry,
    ) -> Vec<Assignment> {
        let mut out: Vec<Assignment> = Vec::new();
        for rule in &self.rules {
            if !rule.guard.holds(guard_meta) {
                continue;
            }
            for n in self.expand(&rule.kind, domain, point, base.clone(), hooks) {
                if &n != base && !out.contains(&n) {
                    out.push(n);
                }
            }
        }
        out
    }
}

/// `N^m(x)`: distinct meta components produced by the mapping, excluding the
/// current one, in rule order.
pub fn meta_neighbors(
    mapping: &NeighborhoodMapping,
    domain: &Domain,
    p: &Point,
    hooks: &HookRegistry,
) -> Vec<MetaComponent> {
    let base: Assignment = p.meta.iter().map(|(k, v)| (k.to_owned(), v)).collect();
    mapping
        .collect(domain, p, &p.meta, &base, hooks)
        .into_iter()
        .map(|a| {
            let mut xm = MetaComponent::new();
            for (k, v) in a {
                xm.insert(k, v);
            }
            xm
        })
        .filter(|xm| domain.validate_meta(xm).is_ok())
        .collect()
}

/// The categorical component of `p` carried over to meta component `tm`:
/// surviving values are kept, newly acting variables take their defaults.
pub fn carried_categorical(domain: &Domain, p: &Point, tm: &MetaComponent) -> BTreeMap<String, u32> {
    domain
        .acting_positions_unchecked(tm, TypeGroup::Categorical)
        .into_iter()
        .map(|i| {
            let spec = &domain.variables()[i];
            let c = p
                .categorical
                .get(&spec.id)
                .copied()
                .unwrap_or_else(|| match spec.default_value() {
                    Value::Category(c) => c,
                    _ => 1,
                });
            (spec.id.clone(), c)
        })
        .collect()
}

/// `N^q(x; t^m)`: categorical neighbors of the carried component under `tm`.
/// `mapping = None` uses [`NeighborhoodMapping::default_categorical`].
pub fn categorical_neighbors(
    mapping: Option<&NeighborhoodMapping>,
    domain: &Domain,
    p: &Point,
    tm: &MetaComponent,
    hooks: &HookRegistry,
) -> Vec<BTreeMap<String, u32>> {
    let default;
    let mapping = match mapping {
        Some(m) => m,
        None => {
            default = NeighborhoodMapping::default_categorical(domain);
            &default
        }
    };
    let base: Assignment = carried_categorical(domain, p, tm)
        .into_iter()
        .map(|(k, c)| (k, Value::Category(c)))
        .collect();
    mapping
        .collect(domain, p, tm, &base, hooks)
        .into_iter()
        .map(|a| {
            a.into_iter()
                .filter_map(|(k, v)| match v {
                    Value::Category(c) => Some((k, c)),
                    _ => None,
                })
                .collect()
        })
        .collect()
}

/// Completes the point `(tm, tq, x^s)`, keeping every surviving assignment of
/// `p` and defaulting variables that become acting under `tm`.
pub fn realize_neighbor(
    domain: &Domain,
    p: &Point,
    tm: &MetaComponent,
    tq: &BTreeMap<String, u32>,
) -> Result<Point, DomainError> {
    let mut partial = domain.assignments(p);
    for (id, &c) in tq {
        partial.insert(id.clone(), Value::Category(c));
    }
    domain.complete_point(tm, &partial)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Role, VariableSpec};

    fn pizza() -> Domain {
        Domain::new(vec![VariableSpec::new(
            "size",
            VarType::Ordinal,
            Role::Global,
            Scope::Categorical {
                categories: vec!["small".into(), "medium".into(), "large".into()],
            },
        )])
        .unwrap()
    }

    #[test]
    fn ordinal_moves_one_level() {
        let d = pizza();
        let mut p = Point::default();
        p.categorical.insert("size".into(), 2);
        let n = categorical_neighbors(None, &d, &p, &MetaComponent::new(), &HookRegistry::default());
        let labels: Vec<u32> = n.iter().map(|c| c["size"]).collect();
        assert_eq!(labels, vec![3, 1]);

        p.categorical.insert("size".into(), 3);
        let n = categorical_neighbors(None, &d, &p, &MetaComponent::new(), &HookRegistry::default());
        assert_eq!(n.len(), 1);
        assert_eq!(n[0]["size"], 2);
    }

    #[test]
    fn no_categorical_variables_means_no_neighbors() {
        let d = Domain::new(vec![VariableSpec::new(
            "x",
            VarType::Integer,
            Role::Global,
            Scope::Integer { lo: 0, hi: 1 },
        )])
        .unwrap();
        let p = d.complete_point(&MetaComponent::new(), &Default::default()).unwrap();
        let n = categorical_neighbors(None, &d, &p, &MetaComponent::new(), &HookRegistry::default());
        assert!(n.is_empty());
    }

    #[test]
    fn custom_hook_is_called_by_name() {
        let d = pizza();
        let mut hooks = HookRegistry::default();
        hooks.register(
            "always_large",
            Arc::new(|_: &Domain, _: &Point| vec![vec![("size".to_string(), Value::Category(3))]]),
        );
        let mapping = NeighborhoodMapping {
            target: Target::Categorical,
            rules: vec![NeighborRule::new(RuleKind::Custom("always_large".into()))],
        };
        let mut p = Point::default();
        p.categorical.insert("size".into(), 1);
        let n = categorical_neighbors(Some(&mapping), &d, &p, &MetaComponent::new(), &hooks);
        assert_eq!(n.len(), 1);
        assert_eq!(n[0]["size"], 3);
        let unknown = categorical_neighbors(Some(&mapping), &d, &p, &MetaComponent::new(), &HookRegistry::default());
        assert!(unknown.is_empty());
    }
}
