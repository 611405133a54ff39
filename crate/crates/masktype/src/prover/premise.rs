//! Structural view of a candidate rule's body.
//!
//! Both prover backends, the concrete bounded check and the abstract
//! induction step, need the same reading of a rule: what the body demands
//! of the node it fires on, of that node's children, and which feature
//! predicates must hold or fail. Rules produced by decision-tree paths fit
//! a narrow grammar; anything outside it is reported as an error and the
//! caller returns an inconclusive verdict rather than guessing.

use std::collections::HashMap;

use crate::datalog::{Rule, Term};
use crate::oracle::DistType;
use crate::prover::shape::{kind_index, unary_truth, NodeKind, ALL_KINDS};

/// Bit set over [`ALL_KINDS`]: which kinds a node may have.
pub type KindMask = u8;

/// Mask accepting every kind.
pub const ANY_KIND: KindMask = 0xff;

/// True when `mask` admits `kind`.
pub fn mask_admits(mask: KindMask, kind: NodeKind) -> bool {
    mask >> kind_index(kind) & 1 == 1
}

fn mask_of_pred(pred: &str, positive: bool) -> Option<KindMask> {
    let mut mask = 0;
    for (i, &kind) in ALL_KINDS.iter().enumerate() {
        if unary_truth(pred, kind)? == positive {
            mask |= 1 << i;
        }
    }
    Some(mask)
}

fn mask_where(f: impl Fn(NodeKind) -> bool) -> KindMask {
    let mut mask = 0;
    for (i, &kind) in ALL_KINDS.iter().enumerate() {
        if f(kind) {
            mask |= 1 << i;
        }
    }
    mask
}

/// What a rule demands of one child of the node it fires on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChildPremise {
    /// Kinds the child may have.
    pub kinds: KindMask,
    /// Child must carry a RUD judgment.
    pub rud: bool,
    /// Child must carry a SID judgment.
    pub sid: bool,
}

impl Default for ChildPremise {
    fn default() -> Self {
        ChildPremise {
            kinds: ANY_KIND,
            rud: false,
            sid: false,
        }
    }
}

/// Structural premises of one candidate rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Premises {
    /// Type the rule concludes; always RUD or SID.
    pub head: DistType,
    /// Kinds the node itself may have.
    pub root_kinds: KindMask,
    /// Demands on the left child; `Some` exactly when the body binds it.
    pub left: Option<ChildPremise>,
    /// Demands on the right child.
    pub right: Option<ChildPremise>,
    /// Feature premises as (feature index, required truth) at the node.
    pub features: Vec<(usize, bool)>,
}

/// Parses `rule` into premises. `feature_names` maps feature predicates to
/// indices used in [`Premises::features`].
pub fn parse_premises(rule: &Rule, feature_names: &[String]) -> Result<Premises, String> {
    let head = match rule.head.pred.as_str() {
        "rud" => DistType::Rud,
        "sid" => DistType::Sid,
        other => return Err(format!("head `{other}` is not a type judgment")),
    };
    let root = match rule.head.args.as_slice() {
        [Term::Var(v)] => v.as_str(),
        _ => return Err("head must apply to a single variable".into()),
    };
    let feature_index: HashMap<&str, usize> = feature_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();

    let mut p = Premises {
        head,
        root_kinds: ANY_KIND,
        left: None,
        right: None,
        features: Vec::new(),
    };
    let mut left_var: Option<&str> = None;
    let mut right_var: Option<&str> = None;

    // Bind child variables first so conditions may precede the edge atom.
    for lit in &rule.body {
        let args = &lit.atom.args;
        if args.len() != 2 {
            continue;
        }
        let (a0, a1) = match (&args[0], &args[1]) {
            (Term::Var(a), Term::Var(b)) => (a.as_str(), b.as_str()),
            _ => return Err("constants in edge atoms are not supported".into()),
        };
        match lit.atom.pred.as_str() {
            "lc" | "rc" if !lit.positive => {
                return Err("negated edge atoms are not supported".into())
            }
            "lc" => {
                if a0 != root || a1 == root || left_var.is_some_and(|v| v != a1) {
                    return Err("unsupported lc binding".into());
                }
                left_var = Some(a1);
                p.left.get_or_insert_with(ChildPremise::default);
                p.root_kinds &= mask_where(|k| matches!(k, NodeKind::Gate(_)));
            }
            "rc" => {
                if a0 != root || a1 == root || right_var.is_some_and(|v| v != a1) {
                    return Err("unsupported rc binding".into());
                }
                right_var = Some(a1);
                p.right.get_or_insert_with(ChildPremise::default);
                p.root_kinds &=
                    mask_where(|k| matches!(k, NodeKind::Gate(op) if op.arity() == 2));
            }
            other => return Err(format!("binary premise `{other}` is not supported")),
        }
    }

    for lit in &rule.body {
        let args = &lit.atom.args;
        if args.len() != 1 {
            continue;
        }
        let v = match &args[0] {
            Term::Var(v) => v.as_str(),
            Term::Const(_) => return Err("ground premises are not supported".into()),
        };
        let pred = lit.atom.pred.as_str();
        if pred == "node" {
            continue;
        }
        if pred == "has_lc" {
            if v != root {
                return Err("has_lc premise off the head node".into());
            }
            p.root_kinds &= if lit.positive {
                mask_where(|k| matches!(k, NodeKind::Gate(_)))
            } else {
                mask_where(|k| matches!(k, NodeKind::Leaf(_)))
            };
            continue;
        }
        if pred == "has_rc" {
            if v != root {
                return Err("has_rc premise off the head node".into());
            }
            p.root_kinds &= if lit.positive {
                mask_where(|k| matches!(k, NodeKind::Gate(op) if op.arity() == 2))
            } else {
                mask_where(|k| !matches!(k, NodeKind::Gate(op) if op.arity() == 2))
            };
            continue;
        }
        if pred == "rud" || pred == "sid" {
            if !lit.positive {
                return Err("negated type premises are not supported".into());
            }
            let slot = if Some(v) == left_var {
                p.left.as_mut()
            } else if Some(v) == right_var {
                p.right.as_mut()
            } else {
                return Err("type premise on an unbound variable".into());
            };
            let slot = slot.unwrap();
            match pred {
                "rud" => slot.rud = true,
                _ => slot.sid = true,
            }
            continue;
        }
        if let Some(&fid) = feature_index.get(pred) {
            if v != root {
                return Err("feature premise off the head node".into());
            }
            p.features.push((fid, lit.positive));
            continue;
        }
        if let Some(mask) = mask_of_pred(pred, lit.positive) {
            if v == root {
                p.root_kinds &= mask;
            } else if Some(v) == left_var {
                p.left.as_mut().unwrap().kinds &= mask;
            } else if Some(v) == right_var {
                p.right.as_mut().unwrap().kinds &= mask;
            } else {
                return Err("kind premise on an unbound variable".into());
            }
            continue;
        }
        return Err(format!("premise `{pred}` is not supported"));
    }

    p.features.sort();
    p.features.dedup();
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datalog::parse_rule;
    use crate::ir::{InputClass, Operator};

    fn premises(text: &str, features: &[&str]) -> Premises {
        let names: Vec<String> = features.iter().map(|s| s.to_string()).collect();
        parse_premises(&parse_rule(text).unwrap(), &names).unwrap()
    }

    #[test]
    fn structural_rule_is_decomposed() {
        let p = premises(
            "rud(X) :- xor(X), lc(X,L), rc(X,R), rud(L), rud(R), not h0(X).",
            &["h0"],
        );
        assert_eq!(p.head, DistType::Rud);
        assert!(mask_admits(p.root_kinds, NodeKind::Gate(Operator::Xor)));
        assert!(!mask_admits(p.root_kinds, NodeKind::Gate(Operator::And)));
        assert!(!mask_admits(p.root_kinds, NodeKind::Leaf(InputClass::Rand)));
        assert!(p.left.as_ref().unwrap().rud);
        assert!(p.right.as_ref().unwrap().rud);
        assert_eq!(p.features, vec![(0, false)]);
    }

    #[test]
    fn child_classes_narrow_child_kinds() {
        let p = premises("rud(X) :- xor(X), lc(X,L), inrand(L).", &[]);
        let left = p.left.as_ref().unwrap();
        assert!(mask_admits(left.kinds, NodeKind::Leaf(InputClass::Rand)));
        assert!(!mask_admits(left.kinds, NodeKind::Leaf(InputClass::Key)));
        assert!(!mask_admits(left.kinds, NodeKind::Gate(Operator::Xor)));
        assert!(p.right.is_none());
    }

    #[test]
    fn absent_children_restrict_the_node_kind() {
        let p = premises("sid(X) :- not has_lc(X), node(X), inpub(X).", &[]);
        assert!(mask_admits(p.root_kinds, NodeKind::Leaf(InputClass::Pub)));
        assert!(!mask_admits(p.root_kinds, NodeKind::Leaf(InputClass::Rand)));
        assert!(!mask_admits(p.root_kinds, NodeKind::Gate(Operator::Not)));
        let q = premises("sid(X) :- not has_rc(X), leaf(X).", &[]);
        assert!(!mask_admits(q.root_kinds, NodeKind::Gate(Operator::And)));
    }

    #[test]
    fn unknown_premises_are_rejected() {
        let rule = parse_rule("rud(X) :- grandchild(X,Y).").unwrap();
        assert!(parse_premises(&rule, &[]).is_err());
        let rule = parse_rule("rud(X) :- lc(X,L), lc(L,Y), inrand(Y).").unwrap();
        assert!(parse_premises(&rule, &[]).is_err());
        let rule = parse_rule("rud(X) :- not rud(X).").unwrap();
        assert!(parse_premises(&rule, &[]).is_err());
    }

    #[test]
    fn negated_kind_premises_invert_the_mask() {
        let p = premises("sid(X) :- not inkey(X), leaf(X).", &[]);
        assert!(mask_admits(p.root_kinds, NodeKind::Leaf(InputClass::Rand)));
        assert!(mask_admits(p.root_kinds, NodeKind::Leaf(InputClass::Pub)));
        assert!(!mask_admits(p.root_kinds, NodeKind::Leaf(InputClass::Key)));
        assert!(!mask_admits(p.root_kinds, NodeKind::Gate(Operator::Mul)));
    }
}
