//! Process-algebra abstract syntax: terms, models, name binding and
//! structural validation.
//!
//! A [`Model`] is a set of named sequential definitions plus a system
//! equation composing replicated components with cooperation sets. All
//! values are immutable after construction and safe to share across
//! threads.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use thiserror::Error;

/// A rate annotation on a prefix: a named parameter, a literal value in
/// actions per unit time, or the passive (unbounded) marker.
#[derive(Debug, Clone, PartialEq)]
pub enum RateSpec {
    Named(String),
    Literal(f64),
    Passive,
}

impl fmt::Display for RateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateSpec::Named(n) => write!(f, "{n}"),
            RateSpec::Literal(v) => write!(f, "{}", fmt_number(*v)),
            RateSpec::Passive => write!(f, "infty"),
        }
    }
}

/// Product of identifiers and integer literals used as a population count,
/// e.g. `N_pssf*N_pssfp*N_t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountExpr {
    pub factors: Vec<CountFactor>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CountFactor {
    Name(String),
    Literal(u64),
}

impl CountExpr {
    pub fn literal(v: u64) -> Self {
        CountExpr { factors: vec![CountFactor::Literal(v)] }
    }

    /// Evaluates the product under `counts`; every named factor must be bound.
    pub fn eval(&self, counts: &BTreeMap<String, u64>) -> Result<u64, BindError> {
        let mut acc: u64 = 1;
        for f in &self.factors {
            let v = match f {
                CountFactor::Literal(v) => *v,
                CountFactor::Name(n) => *counts
                    .get(n)
                    .ok_or_else(|| BindError::UnboundCount(n.clone()))?,
            };
            acc = acc
                .checked_mul(v)
                .ok_or_else(|| BindError::CountOverflow(self.to_string()))?;
        }
        Ok(acc)
    }
}

impl fmt::Display for CountExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, fac) in self.factors.iter().enumerate() {
            if i > 0 {
                write!(f, "*")?;
            }
            match fac {
                CountFactor::Name(n) => write!(f, "{n}")?,
                CountFactor::Literal(v) => write!(f, "{v}")?,
            }
        }
        Ok(())
    }
}

/// The action set of a cooperation operator. Empty means pure interleaving.
/// Source order is preserved for serialization; membership is set-like.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CooperationSet {
    pub actions: Vec<String>,
}

impl CooperationSet {
    pub fn empty() -> Self {
        CooperationSet { actions: Vec::new() }
    }

    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(actions: I) -> Self {
        CooperationSet { actions: actions.into_iter().map(Into::into).collect() }
    }

    pub fn contains(&self, action: &str) -> bool {
        self.actions.iter().any(|a| a == action)
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// A process term. Sequential definitions use only `Prefix`, `Choice` and
/// `Constant`; the system equation additionally uses `Cooperation` and
/// `Population` (of a named constant only).
#[derive(Debug, Clone, PartialEq)]
pub enum ProcessExpr {
    Prefix {
        action: String,
        rate: RateSpec,
        continuation: Box<ProcessExpr>,
    },
    Choice(Box<ProcessExpr>, Box<ProcessExpr>),
    Constant(String),
    Cooperation {
        left: Box<ProcessExpr>,
        set: CooperationSet,
        right: Box<ProcessExpr>,
    },
    Population {
        constant: String,
        count: CountExpr,
    },
}

impl ProcessExpr {
    pub fn prefix(action: &str, rate: RateSpec, cont: ProcessExpr) -> ProcessExpr {
        ProcessExpr::Prefix {
            action: action.to_string(),
            rate,
            continuation: Box::new(cont),
        }
    }

    pub fn constant(name: &str) -> ProcessExpr {
        ProcessExpr::Constant(name.to_string())
    }

    /// True if the term uses only the sequential fragment.
    pub fn is_sequential(&self) -> bool {
        match self {
            ProcessExpr::Prefix { continuation, .. } => continuation.is_sequential(),
            ProcessExpr::Choice(l, r) => l.is_sequential() && r.is_sequential(),
            ProcessExpr::Constant(_) => true,
            ProcessExpr::Cooperation { .. } | ProcessExpr::Population { .. } => false,
        }
    }
}

/// A named definition `Name = body;`.
#[derive(Debug, Clone, PartialEq)]
pub struct Definition {
    pub name: String,
    pub body: ProcessExpr,
}

/// A parsed model: definitions, optional embedded parameter bindings, and
/// the system equation. Rate and count names may remain free until
/// [`Model::bind`] produces a [`ConcreteModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub definitions: Vec<Definition>,
    pub rate_bindings: BTreeMap<String, f64>,
    pub count_bindings: BTreeMap<String, u64>,
    pub system: ProcessExpr,
}

impl Model {
    pub fn definition(&self, name: &str) -> Option<&Definition> {
        self.definitions.iter().find(|d| d.name == name)
    }
}

/// Numeric bindings supplied at instantiation time. Entries here override
/// bindings embedded in the model text.
#[derive(Debug, Clone, Default)]
pub struct Bindings {
    pub rates: BTreeMap<String, f64>,
    pub counts: BTreeMap<String, u64>,
}

/// A model with every rate and count resolved to a number: all prefixes
/// carry literal or passive rates and all populations carry literal counts.
#[derive(Debug, Clone)]
pub struct ConcreteModel {
    model: Model,
}

impl ConcreteModel {
    pub fn model(&self) -> &Model {
        &self.model
    }

    /// Population of a leaf `constant` of the system equation, if present.
    pub fn population_of(&self, constant: &str) -> Option<u64> {
        fn walk(e: &ProcessExpr, target: &str) -> Option<u64> {
            match e {
                ProcessExpr::Population { constant, count } if constant == target => {
                    count.eval(&BTreeMap::new()).ok()
                }
                ProcessExpr::Cooperation { left, right, .. } => {
                    walk(left, target).or_else(|| walk(right, target))
                }
                _ => None,
            }
        }
        walk(&self.model.system, constant)
    }
}

/// One structural violation found by [`validate_model`]. Violations are
/// data, not failures: an empty report means the model is well formed.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    UndefinedConstant { name: String, referenced_from: String },
    DuplicateDefinition { name: String },
    UnguardedRecursion { name: String },
    NonSequentialDefinition { name: String },
    CooperationActionMissing { action: String, side: &'static str },
    NonpositiveRate { definition: String, action: String, value: f64 },
    BothSidesPassive { action: String },
    PopulationNotInSystem { name: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UndefinedConstant { name, referenced_from } => {
                write!(f, "undefined constant {name} (referenced from {referenced_from})")
            }
            Violation::DuplicateDefinition { name } => {
                write!(f, "constant {name} is defined more than once")
            }
            Violation::UnguardedRecursion { name } => {
                write!(f, "unguarded recursion at {name}")
            }
            Violation::NonSequentialDefinition { name } => {
                write!(f, "definition {name} is not a sequential term")
            }
            Violation::CooperationActionMissing { action, side } => {
                write!(f, "cooperation action {action} missing from the {side} operand alphabet")
            }
            Violation::NonpositiveRate { definition, action, value } => {
                write!(f, "nonpositive rate {value} on ({action}, ...) in {definition}")
            }
            Violation::BothSidesPassive { action } => {
                write!(f, "both cooperation operands are passive on {action}")
            }
            Violation::PopulationNotInSystem { name } => {
                write!(f, "system equation references no population (leaf {name} unusable)")
            }
        }
    }
}

/// Validation outcome: a list of violations, possibly empty.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            write!(f, "ok")
        } else {
            for v in &self.violations {
                writeln!(f, "{v}")?;
            }
            Ok(())
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AstError {
    #[error("undefined constant {0}")]
    UndefinedConstant(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BindError {
    #[error("unbound rate {0}")]
    UnboundRate(String),
    #[error("unbound count {0}")]
    UnboundCount(String),
    #[error("nonpositive rate {name} = {value}")]
    NonpositiveRate { name: String, value: f64 },
    #[error("population count {expr} evaluates to {value}, expected >= 1")]
    NonpositiveCount { expr: String, value: u64 },
    #[error("population count {0} overflows")]
    CountOverflow(String),
}

fn constants_in(expr: &ProcessExpr, out: &mut Vec<String>) {
    match expr {
        ProcessExpr::Prefix { continuation, .. } => constants_in(continuation, out),
        ProcessExpr::Choice(l, r) => {
            constants_in(l, out);
            constants_in(r, out);
        }
        ProcessExpr::Constant(name) => out.push(name.clone()),
        ProcessExpr::Cooperation { left, right, .. } => {
            constants_in(left, out);
            constants_in(right, out);
        }
        ProcessExpr::Population { constant, .. } => out.push(constant.clone()),
    }
}

/// Constants reachable in `expr` without passing through a prefix guard.
/// A cycle in this relation over definitions is unguarded recursion.
fn exposed_constants(expr: &ProcessExpr, out: &mut Vec<String>) {
    match expr {
        ProcessExpr::Prefix { .. } => {}
        ProcessExpr::Choice(l, r) => {
            exposed_constants(l, out);
            exposed_constants(r, out);
        }
        ProcessExpr::Constant(name) => out.push(name.clone()),
        // Non-sequential terms are reported separately; nothing to add here.
        ProcessExpr::Cooperation { .. } | ProcessExpr::Population { .. } => {}
    }
}

fn syntactic_actions(expr: &ProcessExpr, out: &mut BTreeSet<String>) {
    match expr {
        ProcessExpr::Prefix { action, continuation, .. } => {
            out.insert(action.clone());
            syntactic_actions(continuation, out);
        }
        ProcessExpr::Choice(l, r) => {
            syntactic_actions(l, out);
            syntactic_actions(r, out);
        }
        ProcessExpr::Constant(_) => {}
        ProcessExpr::Cooperation { left, right, .. } => {
            syntactic_actions(left, out);
            syntactic_actions(right, out);
        }
        ProcessExpr::Population { .. } => {}
    }
}

/// Actions syntactically occurring in any prefix reachable from `expr`,
/// following constant references transitively.
pub fn action_alphabet(expr: &ProcessExpr, model: &Model) -> Result<BTreeSet<String>, AstError> {
    let mut alphabet = BTreeSet::new();
    syntactic_actions(expr, &mut alphabet);

    let mut pending: Vec<String> = Vec::new();
    constants_in(expr, &mut pending);
    let mut seen: HashSet<String> = HashSet::new();
    while let Some(name) = pending.pop() {
        if !seen.insert(name.clone()) {
            continue;
        }
        let def = model
            .definition(&name)
            .ok_or_else(|| AstError::UndefinedConstant(name.clone()))?;
        syntactic_actions(&def.body, &mut alphabet);
        constants_in(&def.body, &mut pending);
    }
    Ok(alphabet)
}

/// Checks the structural invariants of a model and reports every violation
/// found: undefined or duplicated constants, unguarded recursion,
/// non-sequential definition bodies, cooperation actions missing from an
/// operand alphabet, nonpositive literal rates, and cooperations where both
/// sides are passive on a shared action.
pub fn validate_model(model: &Model) -> ValidationReport {
    let mut violations = Vec::new();

    let mut seen = HashSet::new();
    for def in &model.definitions {
        if !seen.insert(def.name.clone()) {
            violations.push(Violation::DuplicateDefinition { name: def.name.clone() });
        }
        if !def.body.is_sequential() {
            violations.push(Violation::NonSequentialDefinition { name: def.name.clone() });
        }
    }

    // Undefined constants, from definition bodies and the system equation.
    for def in &model.definitions {
        let mut refs = Vec::new();
        constants_in(&def.body, &mut refs);
        for r in refs {
            if model.definition(&r).is_none() {
                violations.push(Violation::UndefinedConstant {
                    name: r,
                    referenced_from: def.name.clone(),
                });
            }
        }
    }
    let mut sys_refs = Vec::new();
    constants_in(&model.system, &mut sys_refs);
    for r in sys_refs {
        if model.definition(&r).is_none() {
            violations.push(Violation::UndefinedConstant {
                name: r,
                referenced_from: "system equation".to_string(),
            });
        }
    }

    // Nonpositive literal rates.
    fn check_rates(name: &str, expr: &ProcessExpr, violations: &mut Vec<Violation>) {
        match expr {
            ProcessExpr::Prefix { action, rate, continuation } => {
                if let RateSpec::Literal(v) = rate {
                    if !(*v > 0.0) {
                        violations.push(Violation::NonpositiveRate {
                            definition: name.to_string(),
                            action: action.clone(),
                            value: *v,
                        });
                    }
                }
                check_rates(name, continuation, violations);
            }
            ProcessExpr::Choice(l, r) => {
                check_rates(name, l, violations);
                check_rates(name, r, violations);
            }
            _ => {}
        }
    }
    for def in &model.definitions {
        check_rates(&def.name, &def.body, &mut violations);
    }

    // Unguarded recursion: cycle in the exposed-constant graph.
    let exposed: HashMap<&str, Vec<String>> = model
        .definitions
        .iter()
        .map(|d| {
            let mut out = Vec::new();
            exposed_constants(&d.body, &mut out);
            (d.name.as_str(), out)
        })
        .collect();
    for def in &model.definitions {
        // DFS from each definition, looking for a path back to itself.
        let mut stack = exposed.get(def.name.as_str()).cloned().unwrap_or_default();
        let mut visited = HashSet::new();
        let mut cyclic = false;
        while let Some(next) = stack.pop() {
            if next == def.name {
                cyclic = true;
                break;
            }
            if visited.insert(next.clone()) {
                if let Some(more) = exposed.get(next.as_str()) {
                    stack.extend(more.iter().cloned());
                }
            }
        }
        if cyclic {
            violations.push(Violation::UnguardedRecursion { name: def.name.clone() });
        }
    }

    // Cooperation sets: each listed action must occur in both operand
    // alphabets, and not passively on both sides.
    fn check_coop(model: &Model, expr: &ProcessExpr, violations: &mut Vec<Violation>) {
        if let ProcessExpr::Cooperation { left, set, right } = expr {
            let la = action_alphabet(left, model).unwrap_or_default();
            let ra = action_alphabet(right, model).unwrap_or_default();
            for a in &set.actions {
                if !la.contains(a) {
                    violations.push(Violation::CooperationActionMissing {
                        action: a.clone(),
                        side: "left",
                    });
                }
                if !ra.contains(a) {
                    violations.push(Violation::CooperationActionMissing {
                        action: a.clone(),
                        side: "right",
                    });
                }
                if la.contains(a)
                    && ra.contains(a)
                    && side_all_passive(model, left, a)
                    && side_all_passive(model, right, a)
                {
                    violations.push(Violation::BothSidesPassive { action: a.clone() });
                }
            }
            check_coop(model, left, violations);
            check_coop(model, right, violations);
        }
    }
    check_coop(model, &model.system, &mut violations);

    ValidationReport { violations }
}

/// True when every syntactic prefix of `action` reachable from `expr`
/// carries the passive rate.
fn side_all_passive(model: &Model, expr: &ProcessExpr, action: &str) -> bool {
    fn scan(expr: &ProcessExpr, action: &str, any_active: &mut bool, any: &mut bool) {
        match expr {
            ProcessExpr::Prefix { action: a, rate, continuation } => {
                if a == action {
                    *any = true;
                    if !matches!(rate, RateSpec::Passive) {
                        *any_active = true;
                    }
                }
                scan(continuation, action, any_active, any);
            }
            ProcessExpr::Choice(l, r) => {
                scan(l, action, any_active, any);
                scan(r, action, any_active, any);
            }
            _ => {}
        }
    }
    let mut any_active = false;
    let mut any = false;
    let mut pending = Vec::new();
    constants_in(expr, &mut pending);
    scan(expr, action, &mut any_active, &mut any);
    let mut seen = HashSet::new();
    while let Some(name) = pending.pop() {
        if !seen.insert(name.clone()) {
            continue;
        }
        if let Some(def) = model.definition(&name) {
            scan(&def.body, action, &mut any_active, &mut any);
            constants_in(&def.body, &mut pending);
        }
    }
    any && !any_active
}

impl Model {
    /// Resolves every named rate and count to a number, producing a
    /// [`ConcreteModel`]. `extra` overrides bindings embedded in the model
    /// text. Fails on the first missing name or nonpositive value.
    pub fn bind(&self, extra: &Bindings) -> Result<ConcreteModel, BindError> {
        let mut rates = self.rate_bindings.clone();
        rates.extend(extra.rates.iter().map(|(k, v)| (k.clone(), *v)));
        let mut counts = self.count_bindings.clone();
        counts.extend(extra.counts.iter().map(|(k, v)| (k.clone(), *v)));

        for (name, v) in &rates {
            if !(*v > 0.0) {
                return Err(BindError::NonpositiveRate { name: name.clone(), value: *v });
            }
        }

        fn bind_expr(
            expr: &ProcessExpr,
            rates: &BTreeMap<String, f64>,
            counts: &BTreeMap<String, u64>,
        ) -> Result<ProcessExpr, BindError> {
            Ok(match expr {
                ProcessExpr::Prefix { action, rate, continuation } => {
                    let rate = match rate {
                        RateSpec::Named(n) => RateSpec::Literal(
                            *rates.get(n).ok_or_else(|| BindError::UnboundRate(n.clone()))?,
                        ),
                        other => other.clone(),
                    };
                    ProcessExpr::Prefix {
                        action: action.clone(),
                        rate,
                        continuation: Box::new(bind_expr(continuation, rates, counts)?),
                    }
                }
                ProcessExpr::Choice(l, r) => ProcessExpr::Choice(
                    Box::new(bind_expr(l, rates, counts)?),
                    Box::new(bind_expr(r, rates, counts)?),
                ),
                ProcessExpr::Constant(name) => ProcessExpr::Constant(name.clone()),
                ProcessExpr::Cooperation { left, set, right } => ProcessExpr::Cooperation {
                    left: Box::new(bind_expr(left, rates, counts)?),
                    set: set.clone(),
                    right: Box::new(bind_expr(right, rates, counts)?),
                },
                ProcessExpr::Population { constant, count } => {
                    let v = count.eval(counts)?;
                    if v < 1 {
                        return Err(BindError::NonpositiveCount {
                            expr: count.to_string(),
                            value: v,
                        });
                    }
                    ProcessExpr::Population {
                        constant: constant.clone(),
                        count: CountExpr::literal(v),
                    }
                }
            })
        }

        let definitions = self
            .definitions
            .iter()
            .map(|d| {
                Ok(Definition {
                    name: d.name.clone(),
                    body: bind_expr(&d.body, &rates, &counts)?,
                })
            })
            .collect::<Result<Vec<_>, BindError>>()?;
        let system = bind_expr(&self.system, &rates, &counts)?;

        Ok(ConcreteModel {
            model: Model {
                definitions,
                rate_bindings: BTreeMap::new(),
                count_bindings: BTreeMap::new(),
                system,
            },
        })
    }
}

/// Formats a float with the shortest representation that round-trips,
/// writing integral values without a fractional part.
pub(crate) fn fmt_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> Model {
        // P1 = (a, 1).P2;  P2 = (b, 3).P1;  system = P1[1] <> P2[1]
        Model {
            definitions: vec![
                Definition {
                    name: "P1".into(),
                    body: ProcessExpr::prefix("a", RateSpec::Literal(1.0), ProcessExpr::constant("P2")),
                },
                Definition {
                    name: "P2".into(),
                    body: ProcessExpr::prefix("b", RateSpec::Literal(3.0), ProcessExpr::constant("P1")),
                },
            ],
            rate_bindings: BTreeMap::new(),
            count_bindings: BTreeMap::new(),
            system: ProcessExpr::Population {
                constant: "P1".into(),
                count: CountExpr::literal(1),
            },
        }
    }

    #[test]
    fn alphabet_of_cycle() {
        let m = two_state();
        let a = action_alphabet(&ProcessExpr::constant("P1"), &m).unwrap();
        assert_eq!(a.into_iter().collect::<Vec<_>>(), vec!["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn alphabet_union_under_choice() {
        let m = two_state();
        let p = ProcessExpr::prefix("x", RateSpec::Literal(1.0), ProcessExpr::constant("P1"));
        let q = ProcessExpr::prefix("y", RateSpec::Literal(1.0), ProcessExpr::constant("P2"));
        let choice = ProcessExpr::Choice(Box::new(p.clone()), Box::new(q.clone()));
        let ap = action_alphabet(&p, &m).unwrap();
        let aq = action_alphabet(&q, &m).unwrap();
        let ac = action_alphabet(&choice, &m).unwrap();
        assert_eq!(ac, ap.union(&aq).cloned().collect());
    }

    #[test]
    fn undefined_constant_reported() {
        let mut m = two_state();
        m.definitions[1].body =
            ProcessExpr::prefix("b", RateSpec::Literal(3.0), ProcessExpr::constant("X"));
        let report = validate_model(&m);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::UndefinedConstant { name, .. } if name == "X")));
    }

    #[test]
    fn unguarded_recursion_reported() {
        let mut m = two_state();
        m.definitions[0].body = ProcessExpr::constant("P1");
        let report = validate_model(&m);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::UnguardedRecursion { name } if name == "P1")));
    }

    #[test]
    fn self_loop_is_guarded() {
        let mut m = two_state();
        m.definitions[0].body =
            ProcessExpr::prefix("a", RateSpec::Literal(1.0), ProcessExpr::constant("P1"));
        let report = validate_model(&m);
        assert!(!report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::UnguardedRecursion { .. })));
    }

    #[test]
    fn coop_action_must_be_shared() {
        let mut m = two_state();
        m.system = ProcessExpr::Cooperation {
            left: Box::new(ProcessExpr::Population {
                constant: "P1".into(),
                count: CountExpr::literal(1),
            }),
            set: CooperationSet::new(["zz"]),
            right: Box::new(ProcessExpr::Population {
                constant: "P2".into(),
                count: CountExpr::literal(1),
            }),
        };
        let report = validate_model(&m);
        assert_eq!(
            report
                .violations
                .iter()
                .filter(|v| matches!(v, Violation::CooperationActionMissing { .. }))
                .count(),
            2
        );
    }

    #[test]
    fn bind_reports_missing_rate() {
        let mut m = two_state();
        m.definitions[0].body =
            ProcessExpr::prefix("a", RateSpec::Named("r_p".into()), ProcessExpr::constant("P2"));
        let err = m.bind(&Bindings::default()).unwrap_err();
        assert_eq!(err, BindError::UnboundRate("r_p".into()));
    }

    #[test]
    fn bind_rejects_zero_count() {
        let mut m = two_state();
        m.system = ProcessExpr::Population {
            constant: "P1".into(),
            count: CountExpr { factors: vec![CountFactor::Name("n".into())] },
        };
        let mut b = Bindings::default();
        b.counts.insert("n".into(), 0);
        let err = m.bind(&b).unwrap_err();
        assert!(matches!(err, BindError::NonpositiveCount { .. }));
    }

    #[test]
    fn bind_evaluates_count_products() {
        let mut m = two_state();
        m.system = ProcessExpr::Population {
            constant: "P1".into(),
            count: CountExpr {
                factors: vec![
                    CountFactor::Name("N_pssf".into()),
                    CountFactor::Name("N_pssfp".into()),
                    CountFactor::Name("N_t".into()),
                ],
            },
        };
        let mut b = Bindings::default();
        b.counts.insert("N_pssf".into(), 3);
        b.counts.insert("N_pssfp".into(), 3);
        b.counts.insert("N_t".into(), 1);
        let cm = m.bind(&b).unwrap();
        assert_eq!(cm.population_of("P1"), Some(9));
    }
}
