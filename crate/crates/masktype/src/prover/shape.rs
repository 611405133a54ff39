//! Recognizes the semantics of synthesized feature definitions.
//!
//! The induction encoder cannot treat a feature as an uninterpreted bit: a
//! negated feature premise only helps a proof if the encoder knows what the
//! feature's falsehood guarantees. This module classifies a feature's
//! defining rules into a small set of shapes with exact abstract encodings:
//!
//! - a local test of the node's own operator or input class,
//! - reachability from the node to an input of certain classes,
//! - an input of certain classes shared by both children's cones.
//!
//! Anything else is `Opaque` and is handled conservatively: the encoder
//! learns nothing from such a premise, which can cost precision but never
//! soundness. Recognition is purely syntactic over the rules, so features
//! loaded from rule files written by other tools are classified the same
//! way as freshly synthesized ones.

use std::collections::BTreeSet;

use crate::datalog::{Literal, Rule, Term};
use crate::ir::{InputClass, Operator};

/// The eight possible kinds of a program node: a leaf of one of the three
/// input classes, or a gate with one of the five operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Leaf(InputClass),
    Gate(Operator),
}

/// All node kinds in a fixed order; indexes agree with [`kind_index`].
pub const ALL_KINDS: [NodeKind; 8] = [
    NodeKind::Leaf(InputClass::Rand),
    NodeKind::Leaf(InputClass::Key),
    NodeKind::Leaf(InputClass::Pub),
    NodeKind::Gate(Operator::And),
    NodeKind::Gate(Operator::Or),
    NodeKind::Gate(Operator::Not),
    NodeKind::Gate(Operator::Xor),
    NodeKind::Gate(Operator::Mul),
];

/// Position of a kind in [`ALL_KINDS`].
pub fn kind_index(kind: NodeKind) -> usize {
    ALL_KINDS.iter().position(|&k| k == kind).unwrap()
}

/// Truth of a local feature for each node kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalTruth {
    pub by_kind: [bool; 8],
}

impl LocalTruth {
    /// Truth at one kind.
    pub fn holds(&self, kind: NodeKind) -> bool {
        self.by_kind[kind_index(kind)]
    }
}

/// Which input classes a reachability or sharing feature looks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassSet {
    pub rand: bool,
    pub key: bool,
    pub pub_: bool,
}

impl ClassSet {
    /// Membership test.
    pub fn contains(&self, class: InputClass) -> bool {
        match class {
            InputClass::Rand => self.rand,
            InputClass::Key => self.key,
            InputClass::Pub => self.pub_,
        }
    }
}

/// Recognized feature semantics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FeatureShape {
    /// Truth depends only on the node's own kind.
    Local(LocalTruth),
    /// True when the node's cone contains an input of one of the classes.
    ConeClasses(ClassSet),
    /// True when the left and right child cones share an input of one of
    /// the classes.
    SharedClasses(ClassSet),
    /// Not recognized; no abstract meaning is assumed.
    Opaque,
}

fn as_var(t: &Term) -> Option<&str> {
    match t {
        Term::Var(v) => Some(v.as_str()),
        Term::Const(_) => None,
    }
}

/// Truth of one unary predicate at one kind; `None` for unknown predicates.
pub(crate) fn unary_truth(pred: &str, kind: NodeKind) -> Option<bool> {
    Some(match pred {
        "node" => true,
        "leaf" => matches!(kind, NodeKind::Leaf(_)),
        "inrand" => kind == NodeKind::Leaf(InputClass::Rand),
        "inkey" => kind == NodeKind::Leaf(InputClass::Key),
        "inpub" => kind == NodeKind::Leaf(InputClass::Pub),
        "and" => kind == NodeKind::Gate(Operator::And),
        "or" => kind == NodeKind::Gate(Operator::Or),
        "not" => kind == NodeKind::Gate(Operator::Not),
        "xor" => kind == NodeKind::Gate(Operator::Xor),
        "mul" => kind == NodeKind::Gate(Operator::Mul),
        _ => return None,
    })
}

/// Existence of the edge named by a binary predicate, by node kind.
fn edge_truth(pred: &str, kind: NodeKind) -> Option<bool> {
    Some(match pred {
        "eq" => true,
        "lc" => matches!(kind, NodeKind::Gate(_)),
        "rc" => matches!(kind, NodeKind::Gate(op) if op.arity() == 2),
        _ => return None,
    })
}

/// Evaluates one rule body as a test of the head node's kind. The head
/// variable is `root`; binary atoms may bind fresh sink variables that are
/// used nowhere else. Returns `None` when the body is not such a test.
fn local_rule_truth(root: &str, body: &[Literal], kind: NodeKind) -> Option<bool> {
    let mut seen_sinks: BTreeSet<&str> = BTreeSet::new();
    let mut sink_uses = std::collections::HashMap::new();
    for lit in body {
        for arg in &lit.atom.args {
            if let Some(v) = as_var(arg) {
                *sink_uses.entry(v).or_insert(0usize) += 1;
            }
        }
    }
    let mut value = true;
    for lit in body {
        let args = &lit.atom.args;
        let truth = match args.len() {
            1 => {
                if as_var(&args[0]) != Some(root) {
                    return None;
                }
                unary_truth(&lit.atom.pred, kind)?
            }
            2 => {
                if !lit.positive {
                    return None;
                }
                let sink = as_var(&args[1])?;
                if as_var(&args[0]) != Some(root) || sink == root {
                    return None;
                }
                if sink_uses[sink] != 1 || !seen_sinks.insert(sink) {
                    return None;
                }
                edge_truth(&lit.atom.pred, kind)?
            }
            _ => return None,
        };
        if truth != lit.positive {
            value = false;
        }
    }
    Some(value)
}

/// Recognizes a seed rule `pair(V,V') :- <class lits on V>, eq(V,V').` and
/// returns the truth of its condition per kind.
fn seed_truth(rule: &Rule, pair: &str) -> Option<[bool; 8]> {
    let (v0, v1) = match rule.head.args.as_slice() {
        [a, b] => (as_var(a)?, as_var(b)?),
        _ => return None,
    };
    if rule.head.pred != pair || v0 == v1 {
        return None;
    }
    let mut found_eq = false;
    let mut truth = [true; 8];
    for lit in &rule.body {
        let args = &lit.atom.args;
        match args.len() {
            2 => {
                if !lit.positive
                    || lit.atom.pred != "eq"
                    || as_var(&args[0]) != Some(v0)
                    || as_var(&args[1]) != Some(v1)
                    || found_eq
                {
                    return None;
                }
                found_eq = true;
            }
            1 => {
                if as_var(&args[0]) != Some(v0) {
                    return None;
                }
                for (i, &kind) in ALL_KINDS.iter().enumerate() {
                    if unary_truth(&lit.atom.pred, kind)? != lit.positive {
                        truth[i] = false;
                    }
                }
            }
            _ => return None,
        }
    }
    if found_eq {
        Some(truth)
    } else {
        None
    }
}

/// Recognizes a step rule `pair(V,V') :- lc(V,W), pair(W,V').` and returns
/// the edge predicate.
fn step_edge<'a>(rule: &'a Rule, pair: &str) -> Option<&'a str> {
    let (v0, v1) = match rule.head.args.as_slice() {
        [a, b] => (as_var(a)?, as_var(b)?),
        _ => return None,
    };
    if rule.head.pred != pair || rule.body.len() != 2 || v0 == v1 {
        return None;
    }
    let mut edge = None;
    let mut mid_from_edge = None;
    let mut mid_from_rec = None;
    for lit in &rule.body {
        if !lit.positive || lit.atom.args.len() != 2 {
            return None;
        }
        let a0 = as_var(&lit.atom.args[0])?;
        let a1 = as_var(&lit.atom.args[1])?;
        if lit.atom.pred == pair {
            if a1 != v1 {
                return None;
            }
            mid_from_rec = Some(a0);
        } else if matches!(lit.atom.pred.as_str(), "lc" | "rc") {
            if a0 != v0 {
                return None;
            }
            edge = Some(lit.atom.pred.as_str());
            mid_from_edge = Some(a1);
        } else {
            return None;
        }
    }
    if mid_from_edge.is_some() && mid_from_edge == mid_from_rec {
        edge
    } else {
        None
    }
}

/// Checks that `rules` define `pair` as downward reachability to inputs of
/// some classes and returns that class set.
fn cone_pair(rules: &[Rule], pair: &str) -> Option<ClassSet> {
    let mut edges = BTreeSet::new();
    let mut seed: Option<[bool; 8]> = None;
    for rule in rules {
        if let Some(edge) = step_edge(rule, pair) {
            edges.insert(edge.to_string());
            continue;
        }
        let truth = seed_truth(rule, pair)?;
        let acc = seed.get_or_insert([false; 8]);
        for i in 0..8 {
            acc[i] |= truth[i];
        }
    }
    let seed = seed?;
    if edges.len() != 2 {
        return None;
    }
    // A seed at gate kinds would make the target set structural rather
    // than a set of inputs.
    for (i, kind) in ALL_KINDS.iter().enumerate() {
        if matches!(kind, NodeKind::Gate(_)) && seed[i] {
            return None;
        }
    }
    Some(ClassSet {
        rand: seed[kind_index(NodeKind::Leaf(InputClass::Rand))],
        key: seed[kind_index(NodeKind::Leaf(InputClass::Key))],
        pub_: seed[kind_index(NodeKind::Leaf(InputClass::Pub))],
    })
}

/// Recognizes `head(V) :- pair(V,W).`
fn is_projection(rule: &Rule, head: &str, pair: &str) -> bool {
    let root = match rule.head.args.as_slice() {
        [a] => match as_var(a) {
            Some(v) => v,
            None => return false,
        },
        _ => return false,
    };
    if rule.head.pred != head || rule.body.len() != 1 {
        return false;
    }
    let lit = &rule.body[0];
    lit.positive
        && lit.atom.pred == pair
        && lit.atom.args.len() == 2
        && as_var(&lit.atom.args[0]) == Some(root)
        && as_var(&lit.atom.args[1]).is_some_and(|v| v != root)
}

/// Recognizes `head(V) :- lc(V,L), rc(V,R), pair(L,Y), pair(R,Y).`
fn is_shared_join(rule: &Rule, head: &str, pair: &str) -> bool {
    let root = match rule.head.args.as_slice() {
        [a] => match as_var(a) {
            Some(v) => v,
            None => return false,
        },
        _ => return false,
    };
    if rule.head.pred != head || rule.body.len() != 4 {
        return false;
    }
    let mut left = None;
    let mut right = None;
    let mut pair_srcs = Vec::new();
    let mut pair_sinks = BTreeSet::new();
    for lit in &rule.body {
        if !lit.positive || lit.atom.args.len() != 2 {
            return false;
        }
        let a0 = match as_var(&lit.atom.args[0]) {
            Some(v) => v,
            None => return false,
        };
        let a1 = match as_var(&lit.atom.args[1]) {
            Some(v) => v,
            None => return false,
        };
        match lit.atom.pred.as_str() {
            "lc" if a0 == root => left = Some(a1),
            "rc" if a0 == root => right = Some(a1),
            p if p == pair => {
                pair_srcs.push(a0);
                pair_sinks.insert(a1);
            }
            _ => return false,
        }
    }
    match (left, right) {
        (Some(l), Some(r)) if l != r => {
            let mut srcs = pair_srcs.clone();
            srcs.sort();
            let mut want = vec![l, r];
            want.sort();
            srcs == want && pair_sinks.len() == 1 && !pair_sinks.contains(root)
        }
        _ => false,
    }
}

/// Classifies the rules defining feature `head`.
pub fn recognize(head: &str, rules: &[Rule]) -> FeatureShape {
    let (head_rules, internal): (Vec<&Rule>, Vec<&Rule>) =
        rules.iter().partition(|r| r.head.pred == head);
    if head_rules.is_empty() {
        return FeatureShape::Opaque;
    }

    if internal.is_empty() {
        let mut by_kind = [false; 8];
        for rule in &head_rules {
            let root = match rule.head.args.as_slice() {
                [a] => match as_var(a) {
                    Some(v) => v,
                    None => return FeatureShape::Opaque,
                },
                _ => return FeatureShape::Opaque,
            };
            for (i, &kind) in ALL_KINDS.iter().enumerate() {
                match local_rule_truth(root, &rule.body, kind) {
                    Some(t) => by_kind[i] |= t,
                    None => return FeatureShape::Opaque,
                }
            }
        }
        return FeatureShape::Local(LocalTruth { by_kind });
    }

    let pairs: BTreeSet<&str> = internal.iter().map(|r| r.head.pred.as_str()).collect();
    if pairs.len() != 1 || head_rules.len() != 1 {
        return FeatureShape::Opaque;
    }
    let pair = pairs.into_iter().next().unwrap();
    let internal_owned: Vec<Rule> = internal.iter().map(|&r| r.clone()).collect();
    let classes = match cone_pair(&internal_owned, pair) {
        Some(c) => c,
        None => return FeatureShape::Opaque,
    };
    if is_projection(head_rules[0], head, pair) {
        FeatureShape::ConeClasses(classes)
    } else if is_shared_join(head_rules[0], head, pair) {
        FeatureShape::SharedClasses(classes)
    } else {
        FeatureShape::Opaque
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datalog::synth::{
        materialize_with, p_stream, q_stream, rename_pred, shared_key_candidate,
        shared_rand_candidate,
    };
    use crate::datalog::{pad_unsafe, parse_rules};

    fn rules(text: &str) -> Vec<Rule> {
        parse_rules(text).unwrap()
    }

    #[test]
    fn class_test_is_local() {
        let shape = recognize("f0", &rules("f0(X) :- inkey(X)."));
        match shape {
            FeatureShape::Local(t) => {
                assert!(t.holds(NodeKind::Leaf(InputClass::Key)));
                assert!(!t.holds(NodeKind::Leaf(InputClass::Rand)));
                assert!(!t.holds(NodeKind::Gate(Operator::Xor)));
            }
            other => panic!("expected local, got {other:?}"),
        }
    }

    #[test]
    fn disjunction_and_negation_stay_local() {
        let shape = recognize(
            "f1",
            &rules("f1(X) :- not inkey(X), leaf(X).\nf1(X) :- xor(X), lc(X,Y)."),
        );
        match shape {
            FeatureShape::Local(t) => {
                assert!(t.holds(NodeKind::Leaf(InputClass::Rand)));
                assert!(t.holds(NodeKind::Leaf(InputClass::Pub)));
                assert!(!t.holds(NodeKind::Leaf(InputClass::Key)));
                assert!(t.holds(NodeKind::Gate(Operator::Xor)));
                assert!(!t.holds(NodeKind::Gate(Operator::And)));
            }
            other => panic!("expected local, got {other:?}"),
        }
    }

    #[test]
    fn downward_reach_to_rand_is_a_cone_feature() {
        let text = "g0g(X,Y) :- inrand(X), eq(X,Y).\n\
                    g0g(X,Y) :- lc(X,Z), g0g(Z,Y).\n\
                    g0g(X,Y) :- rc(X,Z), g0g(Z,Y).\n\
                    g0(X) :- g0g(X,Y).";
        match recognize("g0", &rules(text)) {
            FeatureShape::ConeClasses(c) => {
                assert!(c.rand && !c.key && !c.pub_);
            }
            other => panic!("expected cone, got {other:?}"),
        }
    }

    #[test]
    fn left_only_reach_is_not_a_cone_feature() {
        let text = "g0g(X,Y) :- inrand(X), eq(X,Y).\n\
                    g0g(X,Y) :- lc(X,Z), g0g(Z,Y).\n\
                    g0(X) :- g0g(X,Y).";
        assert_eq!(recognize("g0", &rules(text)), FeatureShape::Opaque);
    }

    #[test]
    fn synthesized_shared_detectors_are_recognized() {
        let (ps, qs) = (p_stream(), q_stream());
        for (cand, want_key) in [
            (shared_rand_candidate(), false),
            (shared_key_candidate(), true),
        ] {
            let raw = materialize_with(&cand, &ps, &qs);
            let renamed = rename_pred(&rename_pred(&raw, "g", "h0g"), "h", "h0");
            let padded = pad_unsafe(&renamed);
            match recognize("h0", &padded) {
                FeatureShape::SharedClasses(c) => {
                    assert_eq!(c.key, want_key);
                    assert_eq!(c.rand, !want_key);
                    assert!(!c.pub_);
                }
                other => panic!("expected shared classes, got {other:?}"),
            }
        }
    }

    #[test]
    fn recursive_unary_feature_is_opaque() {
        let text = "f2(X) :- inrand(X).\nf2(X) :- lc(X,Y), f2(Y).";
        assert_eq!(recognize("f2", &rules(text)), FeatureShape::Opaque);
    }

    #[test]
    fn asymmetric_share_is_opaque() {
        let text = "ha(X,Y) :- inrand(X), eq(X,Y).\n\
                    ha(X,Y) :- lc(X,Z), ha(Z,Y).\n\
                    ha(X,Y) :- rc(X,Z), ha(Z,Y).\n\
                    hb(X,Y) :- inkey(X), eq(X,Y).\n\
                    hb(X,Y) :- lc(X,Z), hb(Z,Y).\n\
                    hb(X,Y) :- rc(X,Z), hb(Z,Y).\n\
                    h1(X) :- lc(X,L), rc(X,R), ha(L,Y), hb(R,Y).";
        assert_eq!(recognize("h1", &rules(text)), FeatureShape::Opaque);
    }
}
