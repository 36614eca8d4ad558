//! Operational semantics over the counting abstraction.
//!
//! A [`ConcreteModel`] is compiled once into a [`CompiledSystem`]:
//!
//! * every population leaf of the system equation becomes a
//!   [`ComponentGroup`] whose local states are the derivatives of its
//!   sequential component (named constants plus anonymous mid-definition
//!   states, written `Name#k`);
//! * the system equation becomes a cooperation tree;
//! * the enabled moves of the whole system are precomputed as symbolic
//!   [`TransitionClass`]es — one per combination of participating local
//!   transitions along shared actions — whose rates are evaluated per
//!   population state.
//!
//! Copies of a component are indistinguishable: a system state is the
//! vector of per-local-state counts, never a labelled vector of copies.
//! Rates follow the standard apparent-rate rules: within a population
//! rates add; across a cooperation on a shared action the combined rate is
//! the minimum of the two sides, split over participant combinations in
//! proportion to their rate shares; unshared actions interleave.
//!
//! Everything here is immutable after compilation; evaluation scratch
//! space lives in [`RateEvaluator`] so distinct threads can evaluate
//! states concurrently with one evaluator each.

use std::collections::{BTreeSet, HashMap, HashSet};

use thiserror::Error;

use crate::ast::{ConcreteModel, Model, ProcessExpr, RateSpec};

pub type ActionId = usize;

/// One aggregated local move `state --action,rate--> target` of a
/// sequential component. Identical syntactic prefixes are merged with
/// their rates summed.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTransition {
    pub action: ActionId,
    pub rate: RateValue,
    pub target: usize,
}

/// An active rate in actions per unit time, or a passive weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateValue {
    Active(f64),
    Passive(f64),
}

#[derive(Debug, Clone)]
pub struct LocalStateInfo {
    /// Display name: a constant name, or `Const#k` for the k-th anonymous
    /// derivative inside that constant's definition.
    pub name: String,
    pub transitions: Vec<LocalTransition>,
}

/// A replicated sequential component: one leaf of the system equation.
#[derive(Debug, Clone)]
pub struct ComponentGroup {
    /// The leaf constant, e.g. `Pssf1`; used as the group name.
    pub leaf: String,
    pub population: u64,
    /// Offset of this group's states in the global count vector.
    pub offset: usize,
    pub states: Vec<LocalStateInfo>,
}

impl ComponentGroup {
    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s.name == name)
    }
}

/// A node of the cooperation tree. Children precede parents in
/// [`CompiledSystem::nodes`]; the root is the last entry.
#[derive(Debug, Clone)]
pub enum CoopNode {
    Leaf { group: usize },
    Coop { left: usize, right: usize, sync: Vec<ActionId> },
}

/// One participating local move of a class: consume one copy at `from`,
/// produce one at `to` (global state indices).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Move {
    pub from: usize,
    pub to: usize,
}

/// Symbolic rate of a class: a leaf contribution `x[state] * rate`, or a
/// cooperation combining both sides with the min law. Node indices let the
/// evaluator look up the sides' apparent rates.
#[derive(Debug, Clone)]
pub enum RateExpr {
    Leaf {
        state: usize,
        rate: RateValue,
    },
    Sync {
        action: ActionId,
        left: Box<RateExpr>,
        right: Box<RateExpr>,
        left_node: usize,
        right_node: usize,
    },
}

/// An aggregated system-level transition: the set of local moves performed
/// together (at most one per group) and the symbolic rate function.
#[derive(Debug, Clone)]
pub struct TransitionClass {
    pub action: ActionId,
    pub moves: Vec<Move>,
    pub rate: RateExpr,
}

/// A population state: per-local-state counts, grouped by component.
/// Per-group sums are invariant under every transition class.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PopulationState {
    pub counts: Vec<u32>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CompileError {
    #[error("undefined constant {0}")]
    UndefinedConstant(String),
    #[error("definition {0} is not sequential")]
    NotSequential(String),
    #[error("prefix ({0}, {1}) carries an unbound named rate; bind the model first")]
    UnboundRate(String, String),
    #[error("action {0} is both active and passive on one side of a cooperation")]
    MixedActivePassive(String),
    #[error("action {0} is passive on both sides of a cooperation")]
    BothSidesPassive(String),
    #[error("system equation has no population leaves")]
    EmptySystem,
}

/// The compiled system: immutable, shareable across threads.
#[derive(Debug, Clone)]
pub struct CompiledSystem {
    pub actions: Vec<String>,
    pub groups: Vec<ComponentGroup>,
    pub nodes: Vec<CoopNode>,
    pub root: usize,
    pub classes: Vec<TransitionClass>,
    pub initial: PopulationState,
    /// Total number of local states across groups (the state-vector length).
    pub dim: usize,
    /// Per-node action alphabets (action ids).
    pub alphabets: Vec<BTreeSet<ActionId>>,
    /// Per group, per action: (global state index, active sum, passive weight)
    /// rows used for leaf apparent rates.
    leaf_rates: Vec<HashMap<ActionId, Vec<(usize, f64, f64)>>>,
}

impl CompiledSystem {
    pub fn action_id(&self, name: &str) -> Option<ActionId> {
        self.actions.iter().position(|a| a == name)
    }

    pub fn action_name(&self, id: ActionId) -> &str {
        &self.actions[id]
    }

    pub fn group_index(&self, leaf: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.leaf == leaf)
    }

    /// Global index of `state_name` within group `leaf`.
    pub fn state_global_index(&self, leaf: &str, state_name: &str) -> Option<usize> {
        let g = &self.groups[self.group_index(leaf)?];
        Some(g.offset + g.state_index(state_name)?)
    }

    pub fn state_display_name(&self, global: usize) -> String {
        for g in &self.groups {
            if global >= g.offset && global < g.offset + g.states.len() {
                return format!("{}.{}", g.leaf, g.states[global - g.offset].name);
            }
        }
        format!("state{global}")
    }

    /// Enabled local moves of one local state, as (action name, rate, target name).
    pub fn local_transitions(&self, leaf: &str, state_name: &str) -> Option<Vec<(String, RateValue, String)>> {
        let g = &self.groups[self.group_index(leaf)?];
        let s = &g.states[g.state_index(state_name)?];
        Some(
            s.transitions
                .iter()
                .map(|t| {
                    (
                        self.actions[t.action].clone(),
                        t.rate,
                        g.states[t.target].name.clone(),
                    )
                })
                .collect(),
        )
    }

    /// Apparent rate of `action` at tree node `node` in state `x`.
    /// Passive-only sides report `f64::INFINITY`.
    pub fn apparent_rate(&self, x: &[f64], node: usize, action: &str) -> Result<f64, CompileError> {
        let a = match self.action_id(action) {
            Some(a) => a,
            None => return Ok(0.0),
        };
        let mut eval = RateEvaluator::new(self);
        eval.fill_apparent(x);
        let app = eval.apparent(node, a);
        if app.passive > 0.0 && app.active > 0.0 {
            return Err(CompileError::MixedActivePassive(action.to_string()));
        }
        Ok(if app.passive > 0.0 { f64::INFINITY } else { app.active })
    }

    /// All enabled transition classes in state `x` with their rates.
    pub fn population_transitions(&self, x: &[f64]) -> Vec<(usize, f64)> {
        let mut eval = RateEvaluator::new(self);
        let rates = eval.class_rates(x).to_vec();
        rates
            .into_iter()
            .enumerate()
            .filter(|(_, r)| *r > 0.0)
            .collect()
    }

    /// Applies class `class` to `state` (caller checked the rate is positive).
    pub fn apply(&self, state: &PopulationState, class: usize) -> PopulationState {
        let mut counts = state.counts.clone();
        for m in &self.classes[class].moves {
            counts[m.from] -= 1;
            counts[m.to] += 1;
        }
        PopulationState { counts }
    }

    /// Per-group population sums of `x` (conservation checks).
    pub fn group_sums(&self, x: &[f64]) -> Vec<f64> {
        self.groups
            .iter()
            .map(|g| x[g.offset..g.offset + g.states.len()].iter().sum())
            .collect()
    }

    pub fn initial_f64(&self) -> Vec<f64> {
        self.initial.counts.iter().map(|&c| c as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Apparent {
    pub active: f64,
    pub passive: f64,
}

/// Reusable evaluation scratch: apparent-rate tables and per-class rates
/// for one population state at a time.
#[derive(Debug)]
pub struct RateEvaluator<'a> {
    sys: &'a CompiledSystem,
    apparent: Vec<Apparent>,
    class_rates: Vec<f64>,
}

impl<'a> RateEvaluator<'a> {
    pub fn new(sys: &'a CompiledSystem) -> Self {
        RateEvaluator {
            sys,
            apparent: vec![Apparent::default(); sys.nodes.len() * sys.actions.len()],
            class_rates: vec![0.0; sys.classes.len()],
        }
    }

    fn apparent(&self, node: usize, action: ActionId) -> Apparent {
        self.apparent[node * self.sys.actions.len() + action]
    }

    /// Computes apparent rates for every (node, action in alphabet) pair,
    /// bottom-up (children precede parents in `nodes`).
    pub fn fill_apparent(&mut self, x: &[f64]) {
        let na = self.sys.actions.len();
        for (ni, node) in self.sys.nodes.iter().enumerate() {
            match node {
                CoopNode::Leaf { group } => {
                    for (&a, rows) in &self.sys.leaf_rates[*group] {
                        let mut app = Apparent::default();
                        for &(state, active, passive) in rows {
                            app.active += x[state] * active;
                            app.passive += x[state] * passive;
                        }
                        self.apparent[ni * na + a] = app;
                    }
                }
                CoopNode::Coop { left, right, sync } => {
                    for &a in &self.sys.alphabets[ni] {
                        let l = self.apparent[left * na + a];
                        let r = self.apparent[right * na + a];
                        let combined = if sync.binary_search(&a).is_ok() {
                            // Min law; a passive side adopts the other side's rate.
                            let le = effective(l);
                            let re = effective(r);
                            let m = le.min(re);
                            if m.is_finite() {
                                Apparent { active: m, passive: 0.0 }
                            } else {
                                // Both passive: validation rejects this; keep
                                // passive weight so shares stay well-defined.
                                Apparent { active: 0.0, passive: l.passive + r.passive }
                            }
                        } else {
                            Apparent { active: l.active + r.active, passive: l.passive + r.passive }
                        };
                        self.apparent[ni * na + a] = combined;
                    }
                }
            }
        }
    }

    fn eval_rate(&self, expr: &RateExpr, x: &[f64]) -> f64 {
        match expr {
            RateExpr::Leaf { state, rate } => match rate {
                RateValue::Active(r) => x[*state] * r,
                RateValue::Passive(w) => x[*state] * w,
            },
            RateExpr::Sync { action, left, right, left_node, right_node } => {
                let rl = self.eval_rate(left, x);
                let rr = self.eval_rate(right, x);
                if rl <= 0.0 || rr <= 0.0 {
                    return 0.0;
                }
                let al = self.apparent(*left_node, *action);
                let ar = self.apparent(*right_node, *action);
                let el = effective(al);
                let er = effective(ar);
                let m = el.min(er);
                if !(m > 0.0) || m.is_infinite() {
                    return 0.0;
                }
                let share_l = rl / total(al);
                let share_r = rr / total(ar);
                share_l * share_r * m
            }
        }
    }

    /// Rates of every class in state `x`; the returned slice is indexed by
    /// class and reused across calls.
    pub fn class_rates(&mut self, x: &[f64]) -> &[f64] {
        self.fill_apparent(x);
        for (i, class) in self.sys.classes.iter().enumerate() {
            self.class_rates[i] = self.eval_rate(&class.rate, x);
        }
        &self.class_rates
    }
}

fn effective(a: Apparent) -> f64 {
    if a.active > 0.0 {
        a.active
    } else if a.passive > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

fn total(a: Apparent) -> f64 {
    if a.active > 0.0 {
        a.active
    } else {
        a.passive
    }
}

/// Compiles a validated, fully bound model.
pub fn compile(concrete: &ConcreteModel) -> Result<CompiledSystem, CompileError> {
    Compiler::new(concrete.model()).run()
}

struct Compiler<'a> {
    model: &'a Model,
    actions: Vec<String>,
    action_ids: HashMap<String, ActionId>,
    groups: Vec<ComponentGroup>,
    nodes: Vec<CoopNode>,
    alphabets: Vec<BTreeSet<ActionId>>,
    leaf_rates: Vec<HashMap<ActionId, Vec<(usize, f64, f64)>>>,
    offset: usize,
    anon_names: HashMap<String, String>,
    body_names: HashMap<String, String>,
}

impl<'a> Compiler<'a> {
    fn new(model: &'a Model) -> Self {
        Compiler {
            model,
            actions: Vec::new(),
            action_ids: HashMap::new(),
            groups: Vec::new(),
            nodes: Vec::new(),
            alphabets: Vec::new(),
            leaf_rates: Vec::new(),
            offset: 0,
            anon_names: HashMap::new(),
            body_names: HashMap::new(),
        }
    }

    fn action(&mut self, name: &str) -> ActionId {
        if let Some(&id) = self.action_ids.get(name) {
            return id;
        }
        let id = self.actions.len();
        self.actions.push(name.to_string());
        self.action_ids.insert(name.to_string(), id);
        id
    }

    fn run(mut self) -> Result<CompiledSystem, CompileError> {
        // Stable names for anonymous derivatives: Def#k for the k-th
        // non-constant continuation inside Def's body, in prefix order.
        // A constant's own body is named by the constant.
        for def in &self.model.definitions {
            let key = canon(&def.body);
            self.body_names.entry(key).or_insert_with(|| def.name.clone());
            let mut k = 0usize;
            collect_anon(&def.body, &def.name, &mut k, &mut self.anon_names);
        }

        let system = self.model.system.clone();
        let root = self.compile_node(&system)?;
        if self.groups.is_empty() {
            return Err(CompileError::EmptySystem);
        }

        let mut counts = vec![0u32; self.offset];
        for g in &self.groups {
            counts[g.offset] = g.population as u32;
        }

        let mut sys = CompiledSystem {
            actions: self.actions,
            groups: self.groups,
            nodes: self.nodes,
            root,
            classes: Vec::new(),
            initial: PopulationState { counts },
            dim: self.offset,
            alphabets: self.alphabets,
            leaf_rates: self.leaf_rates,
        };
        sys.classes = build_classes(&sys, root)?;
        Ok(sys)
    }

    fn compile_node(&mut self, expr: &ProcessExpr) -> Result<usize, CompileError> {
        match expr {
            ProcessExpr::Cooperation { left, set, right } => {
                let l = self.compile_node(left)?;
                let r = self.compile_node(right)?;
                let mut sync: Vec<ActionId> =
                    set.actions.iter().map(|a| self.action(a)).collect();
                sync.sort_unstable();
                sync.dedup();
                let alphabet: BTreeSet<ActionId> =
                    self.alphabets[l].union(&self.alphabets[r]).copied().collect();
                let idx = self.nodes.len();
                self.nodes.push(CoopNode::Coop { left: l, right: r, sync });
                self.alphabets.push(alphabet);
                Ok(idx)
            }
            ProcessExpr::Population { constant, count } => {
                let population = count
                    .eval(&Default::default())
                    .map_err(|_| CompileError::UnboundRate(constant.clone(), "count".into()))?;
                self.compile_leaf(constant, population)
            }
            // A bare constant at system level is a population of one.
            ProcessExpr::Constant(name) => self.compile_leaf(name, 1),
            _ => Err(CompileError::NotSequential("system equation".into())),
        }
    }

    fn compile_leaf(&mut self, leaf: &str, population: u64) -> Result<usize, CompileError> {
        let def = self
            .model
            .definition(leaf)
            .ok_or_else(|| CompileError::UndefinedConstant(leaf.to_string()))?;
        if !def.body.is_sequential() {
            return Err(CompileError::NotSequential(leaf.to_string()));
        }

        // Enumerate derivatives breadth-first from the leaf constant.
        let mut states: Vec<LocalStateInfo> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut exprs: Vec<ProcessExpr> = Vec::new();
        let start_key = canon(&def.body);
        index.insert(start_key, 0);
        states.push(LocalStateInfo { name: leaf.to_string(), transitions: Vec::new() });
        exprs.push(def.body.clone());

        let mut cursor = 0usize;
        while cursor < states.len() {
            let expr = exprs[cursor].clone();
            let mut prefixes = Vec::new();
            collect_prefixes(self.model, &expr, &mut prefixes, &mut HashSet::new())?;
            let mut transitions: Vec<LocalTransition> = Vec::new();
            for (action, rate, cont) in prefixes {
                let action = self.action(&action);
                let rate = match rate {
                    RateSpec::Literal(v) => RateValue::Active(v),
                    RateSpec::Passive => RateValue::Passive(1.0),
                    RateSpec::Named(n) => {
                        return Err(CompileError::UnboundRate(action.to_string(), n));
                    }
                };
                // Resolve the continuation to a state, creating it if new.
                let (key, resolved) = match &cont {
                    ProcessExpr::Constant(d) => {
                        let body = self
                            .model
                            .definition(d)
                            .ok_or_else(|| CompileError::UndefinedConstant(d.clone()))?
                            .body
                            .clone();
                        (canon(&body), body)
                    }
                    other => (canon(other), (*other).clone()),
                };
                let target = match index.get(&key) {
                    Some(&i) => i,
                    None => {
                        let name = self
                            .body_names
                            .get(&key)
                            .or_else(|| self.anon_names.get(&key))
                            .cloned()
                            .unwrap_or_else(|| format!("{leaf}#{}", states.len()));
                        let i = states.len();
                        index.insert(key, i);
                        states.push(LocalStateInfo { name, transitions: Vec::new() });
                        exprs.push(resolved);
                        i
                    }
                };
                // Merge identical (action, target) entries.
                match transitions.iter_mut().find(|t| {
                    t.action == action
                        && t.target == target
                        && matches!(
                            (&t.rate, &rate),
                            (RateValue::Active(_), RateValue::Active(_))
                                | (RateValue::Passive(_), RateValue::Passive(_))
                        )
                }) {
                    Some(t) => {
                        t.rate = match (t.rate, rate) {
                            (RateValue::Active(a), RateValue::Active(b)) => RateValue::Active(a + b),
                            (RateValue::Passive(a), RateValue::Passive(b)) => {
                                RateValue::Passive(a + b)
                            }
                            _ => unreachable!(),
                        };
                    }
                    None => transitions.push(LocalTransition { action, rate, target }),
                }
            }
            states[cursor].transitions = transitions;
            cursor += 1;
        }

        // Leaf apparent-rate rows, grouped by action.
        let mut rows: HashMap<ActionId, Vec<(usize, f64, f64)>> = HashMap::new();
        let mut alphabet = BTreeSet::new();
        for (si, st) in states.iter().enumerate() {
            for t in &st.transitions {
                alphabet.insert(t.action);
                let (active, passive) = match t.rate {
                    RateValue::Active(r) => (r, 0.0),
                    RateValue::Passive(w) => (0.0, w),
                };
                let row = rows.entry(t.action).or_default();
                match row.iter_mut().find(|(s, _, _)| *s == self.offset + si) {
                    Some(entry) => {
                        entry.1 += active;
                        entry.2 += passive;
                    }
                    None => row.push((self.offset + si, active, passive)),
                }
            }
        }

        let group_idx = self.groups.len();
        self.groups.push(ComponentGroup {
            leaf: leaf.to_string(),
            population,
            offset: self.offset,
            states,
        });
        self.offset += self.groups[group_idx].states.len();
        self.leaf_rates.push(rows);

        let idx = self.nodes.len();
        self.nodes.push(CoopNode::Leaf { group: group_idx });
        self.alphabets.push(alphabet);
        Ok(idx)
    }
}

/// Canonical text of a sequential term, used as a state key. Constants are
/// kept as references so syntactically identical derivatives unify.
fn canon(expr: &ProcessExpr) -> String {
    let mut out = String::new();
    fn walk(out: &mut String, e: &ProcessExpr) {
        match e {
            ProcessExpr::Prefix { action, rate, continuation } => {
                out.push('(');
                out.push_str(action);
                out.push(',');
                out.push_str(&rate.to_string());
                out.push(')');
                out.push('.');
                walk(out, continuation);
            }
            ProcessExpr::Constant(n) => out.push_str(n),
            ProcessExpr::Choice(l, r) => {
                walk(out, l);
                out.push('+');
                walk(out, r);
            }
            _ => out.push('?'),
        }
    }
    walk(&mut out, expr);
    out
}

fn collect_anon(
    expr: &ProcessExpr,
    def: &str,
    k: &mut usize,
    out: &mut HashMap<String, String>,
) {
    match expr {
        ProcessExpr::Prefix { continuation, .. } => {
            if !matches!(**continuation, ProcessExpr::Constant(_)) {
                *k += 1;
                out.entry(canon(continuation)).or_insert_with(|| format!("{def}#{k}"));
            }
            collect_anon(continuation, def, k, out);
        }
        ProcessExpr::Choice(l, r) => {
            collect_anon(l, def, k, out);
            collect_anon(r, def, k, out);
        }
        _ => {}
    }
}

/// Syntactic prefixes enabled in `expr`, unfolding constants (guardedness
/// ensures termination; `seen` guards against unvalidated input).
fn collect_prefixes(
    model: &Model,
    expr: &ProcessExpr,
    out: &mut Vec<(String, RateSpec, ProcessExpr)>,
    seen: &mut HashSet<String>,
) -> Result<(), CompileError> {
    match expr {
        ProcessExpr::Prefix { action, rate, continuation } => {
            out.push((action.clone(), rate.clone(), (**continuation).clone()));
            Ok(())
        }
        ProcessExpr::Choice(l, r) => {
            collect_prefixes(model, l, out, seen)?;
            collect_prefixes(model, r, out, seen)
        }
        ProcessExpr::Constant(name) => {
            if !seen.insert(name.clone()) {
                return Ok(());
            }
            let def = model
                .definition(name)
                .ok_or_else(|| CompileError::UndefinedConstant(name.clone()))?;
            collect_prefixes(model, &def.body, out, seen)
        }
        _ => Err(CompileError::NotSequential("population body".into())),
    }
}

/// Builds the class list bottom-up along the cooperation tree.
fn build_classes(sys: &CompiledSystem, root: usize) -> Result<Vec<TransitionClass>, CompileError> {
    #[derive(Clone)]
    struct Draft {
        action: ActionId,
        moves: Vec<Move>,
        rate: RateExpr,
    }

    fn node_classes(sys: &CompiledSystem, node: usize) -> Result<Vec<Draft>, CompileError> {
        match &sys.nodes[node] {
            CoopNode::Leaf { group } => {
                let g = &sys.groups[*group];
                let mut out = Vec::new();
                for (si, st) in g.states.iter().enumerate() {
                    for t in &st.transitions {
                        out.push(Draft {
                            action: t.action,
                            moves: vec![Move { from: g.offset + si, to: g.offset + t.target }],
                            rate: RateExpr::Leaf { state: g.offset + si, rate: t.rate },
                        });
                    }
                }
                Ok(out)
            }
            CoopNode::Coop { left, right, sync } => {
                let lefts = node_classes(sys, *left)?;
                let rights = node_classes(sys, *right)?;
                let mut out = Vec::new();
                for d in lefts.iter().chain(rights.iter()) {
                    if sync.binary_search(&d.action).is_err() {
                        out.push(d.clone());
                    }
                }
                for a in sync {
                    let ls: Vec<&Draft> = lefts.iter().filter(|d| d.action == *a).collect();
                    let rs: Vec<&Draft> = rights.iter().filter(|d| d.action == *a).collect();
                    for dl in &ls {
                        for dr in &rs {
                            let mut moves = dl.moves.clone();
                            moves.extend(dr.moves.iter().copied());
                            out.push(Draft {
                                action: *a,
                                moves,
                                rate: RateExpr::Sync {
                                    action: *a,
                                    left: Box::new(dl.rate.clone()),
                                    right: Box::new(dr.rate.clone()),
                                    left_node: *left,
                                    right_node: *right,
                                },
                            });
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    let drafts = node_classes(sys, root)?;
    Ok(drafts
        .into_iter()
        .map(|d| TransitionClass { action: d.action, moves: d.moves, rate: d.rate })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::Bindings;
    use crate::parser::{parse_model, SourceModel};

    fn compile_text(text: &str) -> CompiledSystem {
        let model = parse_model(&SourceModel::inline(text)).unwrap();
        let report = crate::ast::validate_model(&model);
        assert!(report.is_clean(), "{report}");
        compile(&model.bind(&Bindings::default()).unwrap()).unwrap()
    }

    #[test]
    fn min_law_on_shared_action() {
        let sys = compile_text(
            "A1 = (a, 2.0).A2;\nA2 = (b, 1).A1;\n\
             B1 = (a, 3.0).B2;\nB2 = (c, 1).B1;\n\
             system = A1[1] <a> B1[1];",
        );
        let x = sys.initial_f64();
        let enabled = sys.population_transitions(&x);
        let a = sys.action_id("a").unwrap();
        let shared: Vec<&(usize, f64)> = enabled
            .iter()
            .filter(|(c, _)| sys.classes[*c].action == a)
            .collect();
        assert_eq!(shared.len(), 1);
        assert!((shared[0].1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn apparent_rate_adds_over_copies() {
        let sys = compile_text("P1 = (a, 2.0).P2;\nP2 = (b, 1).P1;\nsystem = P1[3];");
        let x = sys.initial_f64();
        let leaf = 0;
        assert!((sys.apparent_rate(&x, leaf, "a").unwrap() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn single_enabled_prefix_has_its_own_rate() {
        let sys = compile_text("P1 = (a, 2.0).P2;\nP2 = (b, 1).P1;\nsystem = P1[1];");
        let x = sys.initial_f64();
        assert!((sys.apparent_rate(&x, 0, "a").unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn interleaving_is_disjoint_union() {
        let sys = compile_text(
            "A1 = (a, 1).A2;\nA2 = (b, 2).A1;\nB1 = (c, 3).B2;\nB2 = (d, 4).B1;\n\
             system = A1[1] <> B1[1];",
        );
        let x = sys.initial_f64();
        let enabled = sys.population_transitions(&x);
        assert_eq!(enabled.len(), 2);
        let names: BTreeSet<&str> = enabled
            .iter()
            .map(|(c, _)| sys.action_name(sys.classes[*c].action))
            .collect();
        assert_eq!(names, BTreeSet::from(["a", "c"]));
    }

    #[test]
    fn zero_population_disables_classes() {
        let sys = compile_text(
            "A1 = (a, 1).A2;\nA2 = (b, 2).A1;\nB1 = (a, 3).B2;\nB2 = (d, 4).B1;\n\
             system = A1[1] <a> B1[1];",
        );
        let mut x = sys.initial_f64();
        // Move the B copy out of B1: the shared class must disappear.
        x[2] = 0.0;
        x[3] = 1.0;
        let enabled = sys.population_transitions(&x);
        assert!(enabled
            .iter()
            .all(|(c, _)| sys.action_name(sys.classes[*c].action) != "a"));
    }

    #[test]
    fn choice_contributes_both_branches() {
        let sys = compile_text(
            "M1 = (acc, 1).M2;\nM2 = (x, 1).M1 + (y, 2).M1 + (z, 3).M1;\nsystem = M1[1];",
        );
        let ts = sys.local_transitions("M1", "M2").unwrap();
        assert_eq!(ts.len(), 3);
        assert!(ts.iter().all(|(_, _, tgt)| tgt == "M1"));
    }

    #[test]
    fn self_loop_is_a_transition() {
        let sys = compile_text("P = (a, 1.5).P;\nsystem = P[1];");
        let ts = sys.local_transitions("P", "P").unwrap();
        assert_eq!(ts.len(), 1);
        assert_eq!(ts[0].0, "a");
        assert_eq!(ts[0].2, "P");
    }

    #[test]
    fn anonymous_states_are_named_and_conserved() {
        let sys = compile_text(
            "U1 = (go, 1).(think, 2).U2;\nU2 = (done, 3).U1;\nsystem = U1[5];",
        );
        let g = &sys.groups[0];
        assert_eq!(g.states.len(), 3);
        assert_eq!(g.states[0].name, "U1");
        assert_eq!(g.states[1].name, "U1#1");
        assert_eq!(g.states[2].name, "U2");

        // Conservation under every enabled class from a few states.
        let mut state = sys.initial.clone();
        for _ in 0..10 {
            let x: Vec<f64> = state.counts.iter().map(|&c| c as f64).collect();
            let enabled = sys.population_transitions(&x);
            assert!(!enabled.is_empty());
            let before: Vec<f64> = sys.group_sums(&x);
            state = sys.apply(&state, enabled[0].0);
            let xa: Vec<f64> = state.counts.iter().map(|&c| c as f64).collect();
            assert_eq!(before, sys.group_sums(&xa));
        }
    }

    #[test]
    fn doubling_populations_doubles_apparent_rates() {
        let text = |n: u64| {
            format!(
                "A1 = (a, 2).A2;\nA2 = (b, 1).A1;\nB1 = (a, 3).B2;\nB2 = (c, 1).B1;\n\
                 system = A1[{n}] <a> B1[{n}];"
            )
        };
        let s1 = compile_text(&text(2));
        let s2 = compile_text(&text(4));
        let r1 = s1.apparent_rate(&s1.initial_f64(), s1.root, "a").unwrap();
        let r2 = s2.apparent_rate(&s2.initial_f64(), s2.root, "a").unwrap();
        assert!((r2 - 2.0 * r1).abs() < 1e-12);
    }

    #[test]
    fn passive_side_adopts_active_rate() {
        let sys = compile_text(
            "A1 = (a, 4.0).A2;\nA2 = (b, 1).A1;\nB1 = (a, infty).B2;\nB2 = (c, 1).B1;\n\
             system = A1[1] <a> B1[1];",
        );
        let x = sys.initial_f64();
        let enabled = sys.population_transitions(&x);
        let a = sys.action_id("a").unwrap();
        let shared: Vec<f64> = enabled
            .iter()
            .filter(|(c, _)| sys.classes[*c].action == a)
            .map(|(_, r)| *r)
            .collect();
        assert_eq!(shared.len(), 1);
        assert!((shared[0] - 4.0).abs() < 1e-12);
    }
}
