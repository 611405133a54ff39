//! Concrete bounded checking of candidate rules.
//!
//! The base case of rule verification runs the rule against every tree
//! fragment up to a depth bound over a fixed input pool of three randoms,
//! two keys, and one public. Subtrees may reuse the same input, so mask
//! reuse across operands, the classic source of unsound RUD claims, is
//! inside the space. Premises about children are read as knowledge-base
//! judgments of the fragment's child nodes: the rule under test may assume
//! its premises were derived soundly, and must then not out-claim the
//! knowledge base at the root.
//!
//! Fragment enumeration is deterministic, so per-feature truth columns are
//! cached globally by the feature's rule text and reused across rules,
//! loop iterations, and seeds.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use crate::datalog::{FactBase, Rule};
use crate::ir::{InputClass, Node, NodeId, Operator, Program};
use crate::learner::eval_feature_rules;
use crate::prover::kb::kb_derive;
use crate::prover::premise::{mask_admits, Premises};
use crate::prover::shape::{FeatureShape, NodeKind};
use crate::prover::ProverError;

/// Largest supported base depth; deeper exhaustive fragment sets are not
/// tractable.
pub const MAX_BASE_DEPTH: usize = 3;

/// The fixed fragment input pool as (name, class).
pub const POOL: [(&str, InputClass); 6] = [
    ("r1", InputClass::Rand),
    ("r2", InputClass::Rand),
    ("r3", InputClass::Rand),
    ("k1", InputClass::Key),
    ("k2", InputClass::Key),
    ("p1", InputClass::Pub),
];

/// A tree shape over pool slots. Distinct occurrences of the same slot
/// refer to the same input node.
#[derive(Debug, Clone)]
enum Spec {
    Leaf(usize),
    Un(Operator, Box<Spec>),
    Bin(Operator, Box<Spec>, Box<Spec>),
}

impl Spec {
    fn depth(&self) -> usize {
        match self {
            Spec::Leaf(_) => 1,
            Spec::Un(_, a) => 1 + a.depth(),
            Spec::Bin(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }
}

/// All tree shapes of depth at most `depth`, in a fixed order.
fn specs_upto(depth: usize) -> Vec<Spec> {
    let mut out: Vec<Spec> = (0..POOL.len()).map(Spec::Leaf).collect();
    if depth <= 1 {
        return out;
    }
    let sub = specs_upto(depth - 1);
    for op in Operator::all() {
        if op.arity() == 1 {
            for a in &sub {
                out.push(Spec::Un(op, Box::new(a.clone())));
            }
        } else {
            for a in &sub {
                for b in &sub {
                    out.push(Spec::Bin(op, Box::new(a.clone()), Box::new(b.clone())));
                }
            }
        }
    }
    out
}

fn used_slots(spec: &Spec, used: &mut [bool; 6]) {
    match spec {
        Spec::Leaf(s) => used[*s] = true,
        Spec::Un(_, a) => used_slots(a, used),
        Spec::Bin(_, a, b) => {
            used_slots(a, used);
            used_slots(b, used);
        }
    }
}

fn build_gates(
    spec: &Spec,
    slot_ids: &[Option<NodeId>; 6],
    counter: &mut usize,
    p: &mut Program,
) -> NodeId {
    match spec {
        Spec::Leaf(s) => slot_ids[*s].unwrap(),
        Spec::Un(op, a) => {
            let a = build_gates(a, slot_ids, counter, p);
            *counter += 1;
            p.push_gate(format!("t{counter}"), *op, &[a])
        }
        Spec::Bin(op, a, b) => {
            let a = build_gates(a, slot_ids, counter, p);
            let b = build_gates(b, slot_ids, counter, p);
            *counter += 1;
            p.push_gate(format!("t{counter}"), *op, &[a, b])
        }
    }
}

fn build_program(spec: &Spec) -> Program {
    let mut used = [false; 6];
    used_slots(spec, &mut used);
    let mut p = Program::default();
    let mut slot_ids = [None; 6];
    for (i, &(name, class)) in POOL.iter().enumerate() {
        if used[i] {
            slot_ids[i] = Some(p.push_input(name, class));
        }
    }
    let mut counter = 0;
    build_gates(spec, &slot_ids, &mut counter, &mut p);
    p
}

/// Calls `visit` for every fragment of depth at most `depth` until it
/// returns `false`. Order and content are deterministic.
pub fn for_each_fragment(depth: usize, visit: &mut dyn FnMut(&Program) -> bool) {
    let depth = depth.min(MAX_BASE_DEPTH);
    for spec in specs_upto(depth) {
        if !visit(&build_program(&spec)) {
            return;
        }
    }
}

/// Number of fragments of depth at most `depth`.
pub fn fragment_count(depth: usize) -> usize {
    let mut n = 0;
    for_each_fragment(depth, &mut |_| {
        n += 1;
        true
    });
    n
}

fn kind_of(program: &Program, id: NodeId) -> NodeKind {
    match program.nodes[id] {
        Node::Input(class) => NodeKind::Leaf(class),
        Node::Gate { op, .. } => NodeKind::Gate(op),
    }
}

/// Packed per-fragment data for premise evaluation: kinds and KB bits of
/// the root and its children.
#[derive(Debug, Clone, Copy)]
struct FragMeta {
    depth: usize,
    root: NodeKind,
    root_rud: bool,
    root_sid: bool,
    /// Child kind, KB RUD, KB SID.
    left: Option<(NodeKind, bool, bool)>,
    right: Option<(NodeKind, bool, bool)>,
}

fn frag_metas() -> &'static [FragMeta] {
    static METAS: OnceLock<Vec<FragMeta>> = OnceLock::new();
    METAS.get_or_init(|| {
        let mut metas = Vec::new();
        for spec in specs_upto(MAX_BASE_DEPTH) {
            let program = build_program(&spec);
            let root = program.len() - 1;
            let info = kb_derive(&program).expect("pool fragments respect input bounds");
            let child = |i: usize| {
                let ops = program.nodes[root].operands();
                ops.get(i)
                    .map(|&c| (kind_of(&program, c), info.rud[c], info.sid[c]))
            };
            metas.push(FragMeta {
                depth: spec.depth(),
                root: kind_of(&program, root),
                root_rud: info.rud[root],
                root_sid: info.sid[root],
                left: child(0),
                right: child(1),
            });
        }
        metas
    })
}

/// A feature as the prover sees it: defining rules plus recognized shape.
#[derive(Debug, Clone)]
pub struct FeatureInfo {
    /// Feature predicate name.
    pub name: String,
    /// Defining rules.
    pub rules: Vec<Rule>,
    /// Recognized semantics.
    pub shape: FeatureShape,
}

impl FeatureInfo {
    /// Builds the info for a named feature, recognizing its shape.
    pub fn new(name: impl Into<String>, rules: Vec<Rule>) -> FeatureInfo {
        let name = name.into();
        let shape = crate::prover::shape::recognize(&name, &rules);
        FeatureInfo { name, rules, shape }
    }

    /// Cache key: canonical rule text, order-independent.
    fn signature(&self) -> String {
        let mut lines: Vec<String> = self.rules.iter().map(Rule::canonical).collect();
        lines.sort();
        format!("{}|{}", self.name, lines.join(" "))
    }
}

fn column_cache() -> &'static Mutex<HashMap<String, Arc<Vec<bool>>>> {
    static CACHE: OnceLock<Mutex<HashMap<String, Arc<Vec<bool>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Root truth of `feature` on every fragment, cached by rule text.
fn feature_column(feature: &FeatureInfo) -> Arc<Vec<bool>> {
    let key = feature.signature();
    if let Some(col) = column_cache().lock().unwrap().get(&key) {
        return Arc::clone(col);
    }
    let mut col = Vec::with_capacity(frag_metas().len());
    for_each_fragment(MAX_BASE_DEPTH, &mut |program| {
        let facts = FactBase::from_program(program);
        let values = eval_feature_rules(&feature.rules, &feature.name, &facts, program.len());
        col.push(values[program.len() - 1]);
        true
    });
    let col = Arc::new(col);
    column_cache()
        .lock()
        .unwrap()
        .insert(key, Arc::clone(&col));
    col
}

fn child_ok(want: &Option<crate::prover::premise::ChildPremise>, have: Option<(NodeKind, bool, bool)>) -> bool {
    match want {
        None => true,
        Some(cond) => match have {
            None => false,
            Some((kind, rud, sid)) => {
                mask_admits(cond.kinds, kind) && (!cond.rud || rud) && (!cond.sid || sid)
            }
        },
    }
}

/// Searches fragments of depth at most `base_depth` for one where the
/// premises hold but the knowledge base does not certify the head. Returns
/// the witness program text.
pub fn base_violation(
    premises: &Premises,
    features: &[FeatureInfo],
    base_depth: usize,
    deadline: Instant,
) -> Result<Option<String>, ProverError> {
    let base_depth = base_depth.min(MAX_BASE_DEPTH);
    let metas = frag_metas();
    let columns: Vec<Arc<Vec<bool>>> = features.iter().map(feature_column).collect();
    let mut witness_idx = None;
    for (idx, meta) in metas.iter().enumerate() {
        if idx % 4096 == 0 && Instant::now() > deadline {
            return Err(ProverError::Timeout);
        }
        if meta.depth > base_depth || !mask_admits(premises.root_kinds, meta.root) {
            continue;
        }
        if !child_ok(&premises.left, meta.left) || !child_ok(&premises.right, meta.right) {
            continue;
        }
        if !premises
            .features
            .iter()
            .all(|&(fid, want)| columns[fid][idx] == want)
        {
            continue;
        }
        let certified = match premises.head {
            crate::oracle::DistType::Rud => meta.root_rud,
            _ => meta.root_sid,
        };
        if !certified {
            witness_idx = Some(idx);
            break;
        }
    }
    let Some(target) = witness_idx else {
        return Ok(None);
    };
    let mut text = None;
    let mut i = 0;
    for_each_fragment(MAX_BASE_DEPTH, &mut |program| {
        if i == target {
            text = Some(program.to_text());
            return false;
        }
        i += 1;
        true
    });
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datalog::synth::{
        materialize_with, p_stream, q_stream, rename_pred, shared_key_candidate,
        shared_rand_candidate,
    };
    use crate::datalog::{pad_unsafe, parse_rule};
    use crate::prover::premise::parse_premises;

    fn far_deadline() -> Instant {
        Instant::now() + std::time::Duration::from_secs(600)
    }

    #[test]
    fn fragment_counts_are_exact() {
        assert_eq!(fragment_count(1), 6);
        // Depth two adds 4 * 36 ordered binary gates and 6 NOT gates.
        assert_eq!(fragment_count(2), 156);
        // Depth three adds a gate over any two depth-two fragments.
        assert_eq!(fragment_count(3), 6 + 156 + 4 * 156 * 156);
    }

    #[test]
    fn fragments_share_leaves_across_subtrees() {
        let wanted = "input r1 : rand\ninput k1 : key\ninput k2 : key\n\
                      t1 = xor(r1, k1)\nt2 = xor(r1, k2)\nt3 = xor(t1, t2)\n";
        let mut found = false;
        for_each_fragment(3, &mut |p| {
            if p.to_text() == wanted {
                found = true;
                return false;
            }
            true
        });
        assert!(found, "mask-reuse fragment missing from the base space");
    }

    fn shared_feature(name: &str, key: bool) -> FeatureInfo {
        let cand = if key {
            shared_key_candidate()
        } else {
            shared_rand_candidate()
        };
        let raw = materialize_with(&cand, &p_stream(), &q_stream());
        let renamed = rename_pred(&rename_pred(&raw, "g", &format!("{name}g")), "h", name);
        FeatureInfo::new(name, pad_unsafe(&renamed))
    }

    #[test]
    fn fresh_mask_rule_has_no_base_violation() {
        let rule = parse_rule("rud(X) :- xor(X), lc(X,L), inrand(L), rc(X,R), inkey(R).")
            .unwrap();
        let premises = parse_premises(&rule, &[]).unwrap();
        let witness = base_violation(&premises, &[], 3, far_deadline()).unwrap();
        assert_eq!(witness, None);
    }

    #[test]
    fn unguarded_mask_combination_is_caught() {
        // Without a shared-mask guard, two RUD operands may cancel.
        let rule =
            parse_rule("rud(X) :- xor(X), lc(X,L), rud(L), rc(X,R), rud(R).").unwrap();
        let premises = parse_premises(&rule, &[]).unwrap();
        let witness = base_violation(&premises, &[], 2, far_deadline()).unwrap();
        let text = witness.expect("expected a violation");
        // The witness must itself satisfy the premises and refute the head.
        let program = crate::ir::parse_program(&text).unwrap();
        let labels = crate::oracle::label_program(&program).unwrap();
        assert_ne!(labels[program.len() - 1], crate::oracle::DistType::Rud);
    }

    #[test]
    fn rand_sharing_guard_survives_where_key_guard_fails() {
        let h_rand = shared_feature("h0", false);
        let h_key = shared_feature("h1", true);
        let guarded_rand = parse_rule(
            "rud(X) :- xor(X), lc(X,L), rud(L), rc(X,R), rud(R), not h0(X).",
        )
        .unwrap();
        let guarded_key = parse_rule(
            "rud(X) :- xor(X), lc(X,L), rud(L), rc(X,R), rud(R), not h1(X).",
        )
        .unwrap();
        let names = vec!["h0".to_string(), "h1".to_string()];
        let features = vec![h_rand, h_key];
        let ok = parse_premises(&guarded_rand, &names).unwrap();
        assert_eq!(
            base_violation(&ok, &features, 3, far_deadline()).unwrap(),
            None
        );
        let bad = parse_premises(&guarded_key, &names).unwrap();
        let witness = base_violation(&bad, &features, 3, far_deadline())
            .unwrap()
            .expect("key-disjointness does not prevent mask reuse");
        let program = crate::ir::parse_program(&witness).unwrap();
        let labels = crate::oracle::label_program(&program).unwrap();
        assert_ne!(labels[program.len() - 1], crate::oracle::DistType::Rud);
    }
}
