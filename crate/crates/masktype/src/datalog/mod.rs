//! Datalog engine specialized to program-shaped fact bases.
//!
//! Relations have arity one or two; constants are node ids. A program maps
//! to a fact base with one unary relation per gate operator (`and`, `or`,
//! `not`, `xor`, `mul`), `leaf` plus `inrand`/`inpub`/`inkey` for inputs,
//! binary child edges `lc`/`rc` (a `not` gate contributes only `lc`), the
//! identity relation `eq`, and bookkeeping relations `node`, `has_lc`,
//! `has_rc` over the universe.
//!
//! Rules are evaluated bottom-up, either naively or semi-naively, after
//! stratifying negation. Unsafe rules (head or negated variables missing
//! from positive literals) are repaired by padding with `node(V)` atoms
//! rather than rejected, since learned rules legitimately contain
//! negation-only paths.

pub mod synth;
pub mod unroll;

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::ir::{InputClass, Node, Program};

/// Constant in a relation tuple: a node id.
pub type Const = u32;

/// Term of an atom: a variable (uppercase in text form) or a constant.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(String),
    Const(Const),
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => f.write_str(v),
            Term::Const(c) => write!(f, "{c}"),
        }
    }
}

/// A predicate applied to terms, e.g. `lc(X,L)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub pred: String,
    pub args: Vec<Term>,
}

impl Atom {
    /// Convenience constructor.
    pub fn new(pred: impl Into<String>, args: Vec<Term>) -> Atom {
        Atom {
            pred: pred.into(),
            args,
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args: Vec<String> = self.args.iter().map(|t| t.to_string()).collect();
        write!(f, "{}({})", self.pred, args.join(","))
    }
}

/// A possibly negated atom.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal {
    pub positive: bool,
    pub atom: Atom,
}

impl Literal {
    /// Positive literal.
    pub fn pos(atom: Atom) -> Literal {
        Literal {
            positive: true,
            atom,
        }
    }

    /// Negated literal.
    pub fn neg(atom: Atom) -> Literal {
        Literal {
            positive: false,
            atom,
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.positive {
            write!(f, "{}", self.atom)
        } else {
            write!(f, "not {}", self.atom)
        }
    }
}

/// A Horn rule `head :- body.` with stratified negation in the body.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rule {
    pub head: Atom,
    pub body: Vec<Literal>,
}

impl Rule {
    /// Convenience constructor.
    pub fn new(head: Atom, body: Vec<Literal>) -> Rule {
        Rule { head, body }
    }

    /// Canonical text with body literals sorted, used to deduplicate rules
    /// that differ only in literal order.
    pub fn canonical(&self) -> String {
        let mut body: Vec<String> = self.body.iter().map(|l| l.to_string()).collect();
        body.sort();
        format!("{} :- {}.", self.head, body.join(", "))
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.body.is_empty() {
            write!(f, "{}.", self.head)
        } else {
            let body: Vec<String> = self.body.iter().map(|l| l.to_string()).collect();
            write!(f, "{} :- {}.", self.head, body.join(", "))
        }
    }
}

/// Errors from parsing, validation, or evaluation.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum DatalogError {
    /// Rule text does not parse.
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    /// A predicate is used with two different arities.
    #[error("predicate `{pred}` used with arity {got} but elsewhere {expected}")]
    ArityMismatch {
        pred: String,
        expected: usize,
        got: usize,
    },
    /// Arity outside the supported range 1..=2.
    #[error("predicate `{pred}` has arity {arity}, only 1 and 2 are supported")]
    UnsupportedArity { pred: String, arity: usize },
    /// Negation participates in a recursive cycle.
    #[error("negation cycle through `{pred}` prevents stratification")]
    Unstratifiable { pred: String },
}

/// A stored relation of arity 1 or 2 with access indexes.
#[derive(Debug, Clone, Default)]
pub struct Relation {
    arity: usize,
    unary: HashSet<Const>,
    pairs: HashSet<(Const, Const)>,
    by_first: HashMap<Const, Vec<Const>>,
    by_second: HashMap<Const, Vec<Const>>,
}

impl Relation {
    /// Creates an empty relation of the given arity (1 or 2).
    pub fn new(arity: usize) -> Relation {
        assert!(arity == 1 || arity == 2);
        Relation {
            arity,
            ..Relation::default()
        }
    }

    /// Arity of the relation.
    pub fn arity(&self) -> usize {
        self.arity
    }

    /// Number of stored tuples.
    pub fn len(&self) -> usize {
        if self.arity == 1 {
            self.unary.len()
        } else {
            self.pairs.len()
        }
    }

    /// True when no tuples are stored.
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Inserts a tuple; returns true when it was not present before.
    pub fn insert(&mut self, tuple: &[Const]) -> bool {
        assert_eq!(tuple.len(), self.arity);
        if self.arity == 1 {
            self.unary.insert(tuple[0])
        } else {
            let pair = (tuple[0], tuple[1]);
            if self.pairs.insert(pair) {
                self.by_first.entry(pair.0).or_default().push(pair.1);
                self.by_second.entry(pair.1).or_default().push(pair.0);
                true
            } else {
                false
            }
        }
    }

    /// Membership test.
    pub fn contains(&self, tuple: &[Const]) -> bool {
        if self.arity == 1 {
            self.unary.contains(&tuple[0])
        } else {
            self.pairs.contains(&(tuple[0], tuple[1]))
        }
    }

    /// All tuples, padded to two slots (second slot 0 for unary), in
    /// unspecified order.
    pub fn tuples(&self) -> Vec<[Const; 2]> {
        if self.arity == 1 {
            self.unary.iter().map(|&a| [a, 0]).collect()
        } else {
            self.pairs.iter().map(|&(a, b)| [a, b]).collect()
        }
    }

    /// Sorted tuples, for deterministic output.
    pub fn sorted_tuples(&self) -> Vec<[Const; 2]> {
        let mut all = self.tuples();
        all.sort();
        all
    }

    /// Calls `f` for every tuple compatible with the pattern: `Some(c)`
    /// entries must match, `None` entries are free.
    pub fn for_each_match(&self, pat: [Option<Const>; 2], f: &mut dyn FnMut([Const; 2])) {
        if self.arity == 1 {
            match pat[0] {
                Some(c) => {
                    if self.unary.contains(&c) {
                        f([c, 0]);
                    }
                }
                None => {
                    for &c in &self.unary {
                        f([c, 0]);
                    }
                }
            }
            return;
        }
        match pat {
            [Some(a), Some(b)] => {
                if self.pairs.contains(&(a, b)) {
                    f([a, b]);
                }
            }
            [Some(a), None] => {
                if let Some(seconds) = self.by_first.get(&a) {
                    for &b in seconds {
                        f([a, b]);
                    }
                }
            }
            [None, Some(b)] => {
                if let Some(firsts) = self.by_second.get(&b) {
                    for &a in firsts {
                        f([a, b]);
                    }
                }
            }
            [None, None] => {
                for &(a, b) in &self.pairs {
                    f([a, b]);
                }
            }
        }
    }
}

/// A set of named relations over one universe of node ids.
#[derive(Debug, Clone, Default)]
pub struct FactBase {
    relations: HashMap<String, Relation>,
    universe: Vec<Const>,
}

impl FactBase {
    /// Creates an empty fact base.
    pub fn new() -> FactBase {
        FactBase::default()
    }

    /// The universe of node ids (contents of the `node` relation).
    pub fn universe(&self) -> &[Const] {
        &self.universe
    }

    /// Adds an id to the universe and the `node` relation.
    pub fn add_node(&mut self, id: Const) {
        if self
            .relations
            .entry("node".to_string())
            .or_insert_with(|| Relation::new(1))
            .insert(&[id])
        {
            self.universe.push(id);
        }
    }

    /// Inserts a fact, creating the relation on first use. Returns true
    /// when the fact is new.
    pub fn insert(&mut self, pred: &str, tuple: &[Const]) -> bool {
        if pred == "node" {
            let fresh = !self
                .relations
                .get("node")
                .is_some_and(|r| r.contains(tuple));
            if fresh {
                self.add_node(tuple[0]);
            }
            return fresh;
        }
        self.relations
            .entry(pred.to_string())
            .or_insert_with(|| Relation::new(tuple.len()))
            .insert(tuple)
    }

    /// Looks up a relation.
    pub fn relation(&self, pred: &str) -> Option<&Relation> {
        self.relations.get(pred)
    }

    /// Membership test; missing relations contain nothing.
    pub fn holds(&self, pred: &str, tuple: &[Const]) -> bool {
        self.relations
            .get(pred)
            .is_some_and(|r| r.arity() == tuple.len() && r.contains(tuple))
    }

    /// Number of tuples in a relation (0 when absent).
    pub fn count(&self, pred: &str) -> usize {
        self.relations.get(pred).map_or(0, Relation::len)
    }

    /// Relation names in sorted order.
    pub fn predicates(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.relations.keys().map(String::as_str).collect();
        names.sort();
        names
    }

    /// Renders all facts sorted by predicate then tuple, one per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for pred in self.predicates() {
            let rel = &self.relations[pred];
            for t in rel.sorted_tuples() {
                if rel.arity() == 1 {
                    out.push_str(&format!("{pred}({}).\n", t[0]));
                } else {
                    out.push_str(&format!("{pred}({},{}).\n", t[0], t[1]));
                }
            }
        }
        out
    }

    /// Extracts the fact base of a program: operator and input-class
    /// relations, child edges, identity, and universe bookkeeping.
    pub fn from_program(program: &Program) -> FactBase {
        let mut fb = FactBase::new();
        for (id, node) in program.nodes.iter().enumerate() {
            let id = id as Const;
            fb.add_node(id);
            fb.insert("eq", &[id, id]);
            match node {
                Node::Input(class) => {
                    fb.insert("leaf", &[id]);
                    let pred = match class {
                        InputClass::Rand => "inrand",
                        InputClass::Pub => "inpub",
                        InputClass::Key => "inkey",
                    };
                    fb.insert(pred, &[id]);
                }
                Node::Gate { op, .. } => {
                    fb.insert(op.keyword(), &[id]);
                    let operands = node.operands();
                    fb.insert("lc", &[id, operands[0] as Const]);
                    fb.insert("has_lc", &[id]);
                    if operands.len() == 2 {
                        fb.insert("rc", &[id, operands[1] as Const]);
                        fb.insert("has_rc", &[id]);
                    }
                }
            }
        }
        fb
    }
}

/// Evaluation strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// Re-derive everything each round until fixpoint.
    Naive,
    /// Join each round against the facts new in the previous round.
    SemiNaive,
}

/// Pads unsafe rules: any variable appearing in the head or in a negative
/// literal but in no positive literal gets a `node(V)` guard appended.
pub fn pad_unsafe(rules: &[Rule]) -> Vec<Rule> {
    rules
        .iter()
        .map(|rule| {
            let mut positive_vars: HashSet<&str> = HashSet::new();
            for lit in rule.body.iter().filter(|l| l.positive) {
                for t in &lit.atom.args {
                    if let Term::Var(v) = t {
                        positive_vars.insert(v);
                    }
                }
            }
            let mut need: Vec<String> = Vec::new();
            let mut consider = |t: &Term| {
                if let Term::Var(v) = t {
                    if !positive_vars.contains(v.as_str()) && !need.contains(v) {
                        need.push(v.clone());
                    }
                }
            };
            for t in &rule.head.args {
                consider(t);
            }
            for lit in rule.body.iter().filter(|l| !l.positive) {
                for t in &lit.atom.args {
                    consider(t);
                }
            }
            if need.is_empty() {
                return rule.clone();
            }
            let mut padded = rule.clone();
            for v in need {
                padded
                    .body
                    .push(Literal::pos(Atom::new("node", vec![Term::Var(v)])));
            }
            padded
        })
        .collect()
}

/// Checks arity consistency across rules and the fact base.
fn check_arities(rules: &[Rule], base: &FactBase) -> Result<(), DatalogError> {
    let mut arity: HashMap<String, usize> = HashMap::new();
    for (name, rel) in &base.relations {
        arity.insert(name.clone(), rel.arity());
    }
    let mut check = |atom: &Atom| -> Result<(), DatalogError> {
        let got = atom.args.len();
        if got == 0 || got > 2 {
            return Err(DatalogError::UnsupportedArity {
                pred: atom.pred.clone(),
                arity: got,
            });
        }
        match arity.get(&atom.pred) {
            Some(&expected) if expected != got => Err(DatalogError::ArityMismatch {
                pred: atom.pred.clone(),
                expected,
                got,
            }),
            Some(_) => Ok(()),
            None => {
                arity.insert(atom.pred.clone(), got);
                Ok(())
            }
        }
    };
    for rule in rules {
        check(&rule.head)?;
        for lit in &rule.body {
            check(&lit.atom)?;
        }
    }
    Ok(())
}

/// Assigns each IDB predicate a stratum so that positive dependencies stay
/// within a stratum and negative dependencies point strictly downward.
/// Returns rule indices grouped by stratum, in evaluation order.
pub fn stratify(rules: &[Rule]) -> Result<Vec<Vec<usize>>, DatalogError> {
    let idb: HashSet<&str> = rules.iter().map(|r| r.head.pred.as_str()).collect();
    let mut stratum: HashMap<&str, usize> = idb.iter().map(|&p| (p, 0)).collect();
    let limit = idb.len() + 1;
    loop {
        let mut changed = false;
        for rule in rules {
            let head = rule.head.pred.as_str();
            let mut want = stratum[head];
            for lit in &rule.body {
                let pred = lit.atom.pred.as_str();
                if !idb.contains(pred) {
                    continue;
                }
                let dep = stratum[pred] + usize::from(!lit.positive);
                want = want.max(dep);
            }
            if want > stratum[head] {
                if want >= limit {
                    return Err(DatalogError::Unstratifiable {
                        pred: head.to_string(),
                    });
                }
                stratum.insert(head, want);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let max_stratum = stratum.values().copied().max().unwrap_or(0);
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); max_stratum + 1];
    for (i, rule) in rules.iter().enumerate() {
        groups[stratum[rule.head.pred.as_str()]].push(i);
    }
    groups.retain(|g| !g.is_empty());
    Ok(groups)
}

/// Compiled body literal: predicate plus argument slots.
struct CompiledLit {
    positive: bool,
    pred: String,
    args: Vec<CompiledTerm>,
}

#[derive(Clone, Copy)]
enum CompiledTerm {
    Slot(usize),
    Const(Const),
}

struct CompiledRule {
    head_pred: String,
    head_args: Vec<CompiledTerm>,
    /// Positive literals first (original order), then negatives.
    body: Vec<CompiledLit>,
    n_slots: usize,
}

fn compile_rule(rule: &Rule) -> CompiledRule {
    let mut slots: HashMap<String, usize> = HashMap::new();
    let slot_of = |t: &Term, slots: &mut HashMap<String, usize>| -> CompiledTerm {
        match t {
            Term::Const(c) => CompiledTerm::Const(*c),
            Term::Var(v) => {
                let next = slots.len();
                let entry = slots.entry(v.clone()).or_insert(next);
                CompiledTerm::Slot(*entry)
            }
        }
    };
    let mut body = Vec::new();
    for lit in rule.body.iter().filter(|l| l.positive) {
        body.push(CompiledLit {
            positive: true,
            pred: lit.atom.pred.clone(),
            args: lit.atom.args.iter().map(|t| slot_of(t, &mut slots)).collect(),
        });
    }
    for lit in rule.body.iter().filter(|l| !l.positive) {
        body.push(CompiledLit {
            positive: false,
            pred: lit.atom.pred.clone(),
            args: lit.atom.args.iter().map(|t| slot_of(t, &mut slots)).collect(),
        });
    }
    let head_args = rule
        .head
        .args
        .iter()
        .map(|t| slot_of(t, &mut slots))
        .collect();
    CompiledRule {
        head_pred: rule.head.pred.clone(),
        head_args,
        body,
        n_slots: slots.len(),
    }
}

/// Derives all head tuples of one compiled rule against `facts`. When
/// `delta` is given, the positive literal at that body index is evaluated
/// against the delta relation instead of the full one.
fn eval_rule(
    rule: &CompiledRule,
    facts: &FactBase,
    delta: Option<(usize, &Relation)>,
    out: &mut Vec<(String, Vec<Const>)>,
) {
    let mut bindings: Vec<Option<Const>> = vec![None; rule.n_slots];
    join(rule, facts, delta, 0, &mut bindings, out);
}

fn join(
    rule: &CompiledRule,
    facts: &FactBase,
    delta: Option<(usize, &Relation)>,
    idx: usize,
    bindings: &mut Vec<Option<Const>>,
    out: &mut Vec<(String, Vec<Const>)>,
) {
    if idx == rule.body.len() {
        let tuple: Vec<Const> = rule
            .head_args
            .iter()
            .map(|t| match t {
                CompiledTerm::Const(c) => *c,
                CompiledTerm::Slot(s) => {
                    bindings[*s].expect("unsafe rule slipped past padding")
                }
            })
            .collect();
        out.push((rule.head_pred.clone(), tuple));
        return;
    }
    let lit = &rule.body[idx];
    let value_of = |t: &CompiledTerm, bindings: &[Option<Const>]| -> Option<Const> {
        match t {
            CompiledTerm::Const(c) => Some(*c),
            CompiledTerm::Slot(s) => bindings[*s],
        }
    };
    if !lit.positive {
        let tuple: Vec<Const> = lit
            .args
            .iter()
            .map(|t| value_of(t, bindings).expect("negated literal with unbound variable"))
            .collect();
        if !facts.holds(&lit.pred, &tuple) {
            join(rule, facts, delta, idx + 1, bindings, out);
        }
        return;
    }
    let rel = match delta {
        Some((d, rel)) if d == idx => Some(rel),
        _ => facts.relation(&lit.pred),
    };
    let Some(rel) = rel else {
        return;
    };
    if rel.arity() != lit.args.len() {
        return;
    }
    let pat = [
        lit.args.first().and_then(|t| value_of(t, bindings)),
        lit.args.get(1).and_then(|t| value_of(t, bindings)),
    ];
    let mut matches: Vec<[Const; 2]> = Vec::new();
    rel.for_each_match(pat, &mut |t| matches.push(t));
    for tuple in matches {
        let mut touched: Vec<usize> = Vec::new();
        let mut ok = true;
        for (i, term) in lit.args.iter().enumerate() {
            if let CompiledTerm::Slot(s) = term {
                match bindings[*s] {
                    Some(v) if v != tuple[i] => {
                        ok = false;
                        break;
                    }
                    Some(_) => {}
                    None => {
                        bindings[*s] = Some(tuple[i]);
                        touched.push(*s);
                    }
                }
            }
        }
        if ok {
            join(rule, facts, delta, idx + 1, bindings, out);
        }
        for s in touched {
            bindings[s] = None;
        }
    }
}

/// Evaluates a stratified rule program over a fact base, returning the base
/// extended with all derived facts. Naive and semi-naive modes compute the
/// same fixpoint.
pub fn evaluate(rules: &[Rule], base: &FactBase, mode: EvalMode) -> Result<FactBase, DatalogError> {
    let rules = pad_unsafe(rules);
    check_arities(&rules, base)?;
    let strata = stratify(&rules)?;
    let compiled: Vec<CompiledRule> = rules.iter().map(compile_rule).collect();
    let mut facts = base.clone();

    for group in strata {
        match mode {
            EvalMode::Naive => {
                loop {
                    let mut derived = Vec::new();
                    for &ri in &group {
                        eval_rule(&compiled[ri], &facts, None, &mut derived);
                    }
                    let mut changed = false;
                    for (pred, tuple) in derived {
                        changed |= facts.insert(&pred, &tuple);
                    }
                    if !changed {
                        break;
                    }
                }
            }
            EvalMode::SemiNaive => {
                let stratum_preds: HashSet<&str> = group
                    .iter()
                    .map(|&ri| compiled[ri].head_pred.as_str())
                    .collect();
                // Round 0: full evaluation picks up EDB facts and facts
                // from earlier strata.
                let mut derived = Vec::new();
                for &ri in &group {
                    eval_rule(&compiled[ri], &facts, None, &mut derived);
                }
                let mut delta: HashMap<String, Relation> = HashMap::new();
                for (pred, tuple) in derived {
                    if facts.insert(&pred, &tuple) {
                        delta
                            .entry(pred)
                            .or_insert_with(|| Relation::new(tuple.len()))
                            .insert(&tuple);
                    }
                }
                while !delta.is_empty() {
                    let mut derived = Vec::new();
                    for &ri in &group {
                        let rule = &compiled[ri];
                        for (li, lit) in rule.body.iter().enumerate() {
                            if !lit.positive || !stratum_preds.contains(lit.pred.as_str()) {
                                continue;
                            }
                            if let Some(d) = delta.get(&lit.pred) {
                                eval_rule(rule, &facts, Some((li, d)), &mut derived);
                            }
                        }
                    }
                    let mut next: HashMap<String, Relation> = HashMap::new();
                    for (pred, tuple) in derived {
                        if facts.insert(&pred, &tuple) {
                            next.entry(pred)
                                .or_insert_with(|| Relation::new(tuple.len()))
                                .insert(&tuple);
                        }
                    }
                    delta = next;
                }
            }
        }
    }
    Ok(facts)
}

/// Parses one rule from text, e.g. `rud(X) :- xor(X), not f1(X).`
/// A leading `not ` (with whitespace) negates the following atom; `not(`
/// without whitespace is the unary NOT-gate predicate.
pub fn parse_rule(text: &str) -> Result<Rule, DatalogError> {
    parse_rule_at(text, 0)
}

/// Parses one rule per nonempty line; `#` starts a comment line.
pub fn parse_rules(text: &str) -> Result<Vec<Rule>, DatalogError> {
    let mut rules = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        rules.push(parse_rule_at(line, i + 1)?);
    }
    Ok(rules)
}

fn parse_rule_at(text: &str, line: usize) -> Result<Rule, DatalogError> {
    let err = |msg: &str| DatalogError::Parse {
        line,
        msg: msg.to_string(),
    };
    let text = text.trim();
    let text = text
        .strip_suffix('.')
        .ok_or_else(|| err("rule must end with `.`"))?;
    let (head_str, body_str) = match text.find(":-") {
        Some(i) => (&text[..i], Some(&text[i + 2..])),
        None => (text, None),
    };
    let head = parse_atom(head_str.trim(), line)?;
    let mut body = Vec::new();
    if let Some(body_str) = body_str {
        for part in split_literals(body_str) {
            let part = part.trim();
            if part.is_empty() {
                return Err(err("empty literal"));
            }
            let (positive, atom_str) = match part.strip_prefix("not") {
                Some(rest)
                    if rest
                        .chars()
                        .next()
                        .is_some_and(|c| c.is_whitespace()) =>
                {
                    (false, rest.trim())
                }
                _ => (true, part),
            };
            body.push(Literal {
                positive,
                atom: parse_atom(atom_str, line)?,
            });
        }
    }
    Ok(Rule { head, body })
}

/// Splits a rule body at top-level commas (commas inside parentheses
/// separate atom arguments, not literals).
fn split_literals(body: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    for (i, c) in body.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                parts.push(&body[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&body[start..]);
    parts
}

fn parse_atom(text: &str, line: usize) -> Result<Atom, DatalogError> {
    let err = |msg: String| DatalogError::Parse { line, msg };
    let open = text
        .find('(')
        .ok_or_else(|| err(format!("expected `(` in atom `{text}`")))?;
    if !text.ends_with(')') {
        return Err(err(format!("missing `)` in atom `{text}`")));
    }
    let pred = text[..open].trim();
    if pred.is_empty()
        || !pred
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
    {
        return Err(err(format!("invalid predicate name `{pred}`")));
    }
    let mut args = Vec::new();
    for arg in text[open + 1..text.len() - 1].split(',') {
        let arg = arg.trim();
        if arg.is_empty() {
            return Err(err(format!("empty argument in atom `{text}`")));
        }
        let first = arg.chars().next().unwrap();
        if first.is_ascii_uppercase() || first == '_' {
            args.push(Term::Var(arg.to_string()));
        } else if first.is_ascii_digit() {
            let value: Const = arg
                .parse()
                .map_err(|_| err(format!("invalid constant `{arg}`")))?;
            args.push(Term::Const(value));
        } else {
            return Err(err(format!(
                "argument `{arg}` must be a variable (uppercase) or number"
            )));
        }
    }
    if args.is_empty() {
        return Err(err(format!("atom `{text}` needs at least one argument")));
    }
    Ok(Atom::new(pred, args))
}

/// A named feature definition: auxiliary predicates computed by rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamedFeature {
    pub name: String,
    pub rules: Vec<Rule>,
}

/// A rules file: feature definitions followed by type-inference rules.
///
/// Text form:
///
/// ```text
/// # feature g1
/// g1(X,Y) :- inrand(X), eq(X,Y).
/// g1(X,Y) :- lc(X,Z), g1(Z,Y).
///
/// # rules
/// rud(X) :- xor(X), lc(X,L), rc(X,R), rud(L), not g1x(X).
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleFile {
    pub features: Vec<NamedFeature>,
    pub rules: Vec<Rule>,
}

impl RuleFile {
    /// All rules, feature definitions first, as one flat program.
    pub fn all_rules(&self) -> Vec<Rule> {
        let mut out = Vec::new();
        for f in &self.features {
            out.extend(f.rules.iter().cloned());
        }
        out.extend(self.rules.iter().cloned());
        out
    }

    /// Serializes to the text form; parsing it back yields an equal file.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for f in &self.features {
            out.push_str(&format!("# feature {}\n", f.name));
            for r in &f.rules {
                out.push_str(&format!("{r}\n"));
            }
            out.push('\n');
        }
        out.push_str("# rules\n");
        for r in &self.rules {
            out.push_str(&format!("{r}\n"));
        }
        out
    }
}

/// Parses a rules file. `# feature <name>` opens a feature section,
/// `# rules` (or a `rud`/`sid` head) switches to the type-rule section,
/// other `#` lines are comments.
pub fn parse_rule_file(text: &str) -> Result<RuleFile, DatalogError> {
    let mut file = RuleFile::default();
    let mut current: Option<NamedFeature> = None;
    let mut in_rules = false;
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(name) = rest.strip_prefix("feature ") {
                if let Some(f) = current.take() {
                    file.features.push(f);
                }
                current = Some(NamedFeature {
                    name: name.trim().to_string(),
                    rules: Vec::new(),
                });
                in_rules = false;
            } else if rest == "rules" {
                if let Some(f) = current.take() {
                    file.features.push(f);
                }
                in_rules = true;
            }
            continue;
        }
        let rule = parse_rule_at(trimmed, line)?;
        let head = rule.head.pred.as_str();
        if in_rules || head == "rud" || head == "sid" || head == "ukd" {
            if let Some(f) = current.take() {
                file.features.push(f);
            }
            in_rules = true;
            file.rules.push(rule);
        } else if let Some(f) = current.as_mut() {
            f.rules.push(rule);
        } else {
            file.rules.push(rule);
        }
    }
    if let Some(f) = current.take() {
        file.features.push(f);
    }
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{parse_program, Program};

    fn rules(lines: &[&str]) -> Vec<Rule> {
        lines.iter().map(|l| parse_rule(l).unwrap()).collect()
    }

    fn chain_program() -> Program {
        parse_program(
            "input r1 : rand\ninput k1 : key\n\
             t1 = xor(r1, k1)\nt2 = not(t1)\nt3 = and(t2, r1)\n",
        )
        .unwrap()
    }

    #[test]
    fn fact_extraction_covers_all_relations() {
        let program = chain_program();
        let fb = FactBase::from_program(&program);
        assert_eq!(fb.count("node"), 5);
        assert_eq!(fb.count("eq"), 5);
        assert_eq!(fb.count("leaf"), 2);
        assert_eq!(fb.count("inrand"), 1);
        assert_eq!(fb.count("inkey"), 1);
        assert_eq!(fb.count("xor"), 1);
        assert_eq!(fb.count("not"), 1);
        assert_eq!(fb.count("and"), 1);
        // Three gates contribute lc; the unary not gate contributes no rc.
        assert_eq!(fb.count("lc"), 3);
        assert_eq!(fb.count("rc"), 2);
        assert_eq!(fb.count("has_lc"), 3);
        assert_eq!(fb.count("has_rc"), 2);
        assert!(fb.holds("lc", &[3, 2]));
        assert!(!fb.holds("rc", &[3, 2]));
        assert!(fb.holds("eq", &[4, 4]));
        assert!(!fb.holds("eq", &[4, 3]));
    }

    #[test]
    fn reachability_fixpoint() {
        let program = chain_program();
        let fb = FactBase::from_program(&program);
        let prog = rules(&[
            "reach(X,Y) :- lc(X,Y).",
            "reach(X,Y) :- rc(X,Y).",
            "reach(X,Y) :- lc(X,Z), reach(Z,Y).",
            "reach(X,Y) :- rc(X,Z), reach(Z,Y).",
        ]);
        let result = evaluate(&prog, &fb, EvalMode::SemiNaive).unwrap();
        // t3 reaches t2, t1, r1, k1; t2 reaches t1, r1, k1; t1 reaches
        // r1, k1.
        assert!(result.holds("reach", &[4, 3]));
        assert!(result.holds("reach", &[4, 0]));
        assert!(result.holds("reach", &[4, 1]));
        assert!(!result.holds("reach", &[0, 1]));
        assert_eq!(result.count("reach"), 4 + 3 + 2);
    }

    #[test]
    fn naive_and_semi_naive_agree() {
        let program = chain_program();
        let fb = FactBase::from_program(&program);
        let prog = rules(&[
            "reach(X,Y) :- lc(X,Y).",
            "reach(X,Y) :- rc(X,Y).",
            "reach(X,Y) :- reach(X,Z), reach(Z,Y).",
            "masked(X) :- xor(X), lc(X,L), inrand(L).",
            "masked(X) :- xor(X), rc(X,R), inrand(R).",
            "quiet(X) :- node(X), not masked(X).",
        ]);
        let a = evaluate(&prog, &fb, EvalMode::Naive).unwrap();
        let b = evaluate(&prog, &fb, EvalMode::SemiNaive).unwrap();
        for pred in ["reach", "masked", "quiet"] {
            let mut ta = a.relation(pred).unwrap().sorted_tuples();
            let mut tb = b.relation(pred).unwrap().sorted_tuples();
            ta.sort();
            tb.sort();
            assert_eq!(ta, tb, "{pred}");
        }
        assert!(a.holds("masked", &[2]));
        assert!(a.holds("quiet", &[3]));
        assert!(a.holds("quiet", &[0]));
    }

    #[test]
    fn negation_requires_lower_stratum() {
        let prog = rules(&["p(X) :- node(X), not q(X).", "q(X) :- node(X), not p(X)."]);
        let err = stratify(&prog).unwrap_err();
        assert!(matches!(err, DatalogError::Unstratifiable { .. }));

        let ok = rules(&[
            "base(X) :- inrand(X).",
            "derived(X) :- node(X), not base(X).",
        ]);
        let strata = stratify(&ok).unwrap();
        assert_eq!(strata.len(), 2);
        assert_eq!(strata[0], vec![0]);
        assert_eq!(strata[1], vec![1]);
    }

    #[test]
    fn unsafe_rules_get_node_padding() {
        let prog = rules(&["weird(X) :- not inrand(X)."]);
        let padded = pad_unsafe(&prog);
        assert_eq!(
            padded[0].to_string(),
            "weird(X) :- not inrand(X), node(X)."
        );
        let program = chain_program();
        let fb = FactBase::from_program(&program);
        let result = evaluate(&prog, &fb, EvalMode::SemiNaive).unwrap();
        // Everything except the single rand input.
        assert_eq!(result.count("weird"), 4);
    }

    #[test]
    fn rule_text_round_trip_and_not_disambiguation() {
        let text = "rud(X) :- xor(X), lc(X,L), rc(X,R), rud(L), not f1(X).";
        let rule = parse_rule(text).unwrap();
        assert_eq!(rule.to_string(), text);
        assert_eq!(rule.body.len(), 5);
        assert!(!rule.body[4].positive);
        assert_eq!(rule.body[4].atom.pred, "f1");

        // `not(` without whitespace is the NOT-gate predicate.
        let gate = parse_rule("sid(X) :- not(X), lc(X,L), sid(L).").unwrap();
        assert!(gate.body[0].positive);
        assert_eq!(gate.body[0].atom.pred, "not");
        assert_eq!(gate.to_string(), "sid(X) :- not(X), lc(X,L), sid(L).");

        // Negated NOT-gate atom.
        let both = parse_rule("p(X) :- node(X), not not(X).").unwrap();
        assert!(!both.body[1].positive);
        assert_eq!(both.body[1].atom.pred, "not");
    }

    #[test]
    fn constants_in_rules() {
        let program = chain_program();
        let fb = FactBase::from_program(&program);
        let prog = rules(&["special(X) :- lc(X,2)."]);
        let result = evaluate(&prog, &fb, EvalMode::Naive).unwrap();
        assert!(result.holds("special", &[3]));
        assert_eq!(result.count("special"), 1);
    }

    #[test]
    fn arity_mismatch_detected() {
        let program = chain_program();
        let fb = FactBase::from_program(&program);
        let prog = rules(&["bad(X) :- lc(X)."]);
        let err = evaluate(&prog, &fb, EvalMode::Naive).unwrap_err();
        assert!(matches!(err, DatalogError::ArityMismatch { .. }));
    }

    #[test]
    fn rule_file_round_trip() {
        let text = "\
# feature g1
g1(X,Y) :- inrand(X), eq(X,Y).
g1(X,Y) :- lc(X,Z), g1(Z,Y).

# feature h1
h1(X) :- lc(X,L), rc(X,R), g1(L,Y), g1(R,Y).

# rules
rud(X) :- xor(X), lc(X,L), rc(X,R), rud(L), not h1(X).
sid(X) :- and(X).
";
        let file = parse_rule_file(text).unwrap();
        assert_eq!(file.features.len(), 2);
        assert_eq!(file.features[0].name, "g1");
        assert_eq!(file.features[0].rules.len(), 2);
        assert_eq!(file.features[1].name, "h1");
        assert_eq!(file.rules.len(), 2);
        let reparsed = parse_rule_file(&file.to_text()).unwrap();
        assert_eq!(file, reparsed);
    }

    #[test]
    fn canonical_ignores_literal_order() {
        let a = parse_rule("rud(X) :- xor(X), lc(X,L), rud(L).").unwrap();
        let b = parse_rule("rud(X) :- lc(X,L), rud(L), xor(X).").unwrap();
        assert_eq!(a.canonical(), b.canonical());
        let c = parse_rule("rud(X) :- xor(X), rc(X,L), rud(L).").unwrap();
        assert_ne!(a.canonical(), c.canonical());
    }

    #[test]
    fn stratified_negation_chain() {
        // even/odd style alternation over a linear chain built from lc.
        let program = parse_program(
            "input r1 : rand\nt1 = not(r1)\nt2 = not(t1)\nt3 = not(t2)\nt4 = not(t3)\n",
        )
        .unwrap();
        let fb = FactBase::from_program(&program);
        let prog = rules(&[
            "reach(X,Y) :- lc(X,Y).",
            "reach(X,Y) :- lc(X,Z), reach(Z,Y).",
            "deep(X) :- reach(X,Y), reach(Y,Z), reach(Z,W).",
            "shallow(X) :- node(X), not deep(X).",
        ]);
        for mode in [EvalMode::Naive, EvalMode::SemiNaive] {
            let result = evaluate(&prog, &fb, mode).unwrap();
            assert!(result.holds("deep", &[4]));
            assert!(result.holds("deep", &[3]));
            assert!(!result.holds("deep", &[2]));
            assert!(result.holds("shallow", &[2]));
            assert!(result.holds("shallow", &[0]));
        }
    }
}
