//! Feature templates and the enumerable candidate stream.
//!
//! New features are Datalog programs assembled from a fixed set of rule
//! templates over three target schemas: unary `f(x)`, binary `g(x,y)`, and
//! unary-with-join `h(x)`. Template slots are filled from two predicate
//! grammars: node predicates `p` (operator and input-class tests, closed
//! under negation and shallow disjunction/conjunction) and edge predicates
//! `q` (`lc`, `rc`, `eq`, likewise closed). Compound predicates expand by
//! DNF into one rule per disjunct, so every emitted candidate is a plain
//! Datalog program.
//!
//! [`enumerate_candidates`] produces a deterministic stream ordered by
//! target schema (`f`, then `g`, then `h`), then by total literal count,
//! then lexicographically, with duplicates up to body-literal order
//! suppressed. The learner consumes this stream in order and keeps the
//! first candidate with positive information gain, which biases learned
//! features toward small definitions.
//!
//! The templates cover guarded and asymmetric recursion, but the enumerated
//! stream instantiates recursion only as monotone cone walks: input-class
//! seeds closed under both child edges, plus the shared-leaf join over two
//! such walks. Guarded spine walks and mixed-seed joins describe properties
//! the rule prover cannot reason about, and adopting one poisons its
//! decision context for good once the resulting rule bounces: the refutation
//! joins the training set as an abstract example that zeroes the gain of
//! every later candidate there. Restricting the stream to prover-expressible
//! shapes keeps rejected rules recoverable.

use std::collections::HashSet;

use crate::datalog::{Atom, Literal, Rule, Term};

/// Default candidate budget per synthesis call.
pub const DEFAULT_BUDGET: usize = 50_000;
/// Default cap on total literal count per candidate program.
pub const DEFAULT_SIZE_CAP: usize = 24;

/// A boolean combination of predicate names, used to fill a template slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PredExpr {
    Atom(String),
    Not(Box<PredExpr>),
    And(Box<PredExpr>, Box<PredExpr>),
    Or(Box<PredExpr>, Box<PredExpr>),
}

impl PredExpr {
    /// Atomic predicate.
    pub fn atom(name: &str) -> PredExpr {
        PredExpr::Atom(name.to_string())
    }

    /// Negation.
    pub fn not(e: PredExpr) -> PredExpr {
        PredExpr::Not(Box::new(e))
    }

    /// Conjunction.
    pub fn and(a: PredExpr, b: PredExpr) -> PredExpr {
        PredExpr::And(Box::new(a), Box::new(b))
    }

    /// Disjunction.
    pub fn or(a: PredExpr, b: PredExpr) -> PredExpr {
        PredExpr::Or(Box::new(a), Box::new(b))
    }

    /// Disjunctive normal form: a list of disjuncts, each a conjunction of
    /// signed atoms.
    pub fn dnf(&self) -> Vec<Vec<(bool, String)>> {
        match self {
            PredExpr::Atom(a) => vec![vec![(true, a.clone())]],
            PredExpr::Or(a, b) => {
                let mut out = a.dnf();
                out.extend(b.dnf());
                out
            }
            PredExpr::And(a, b) => {
                let mut out = Vec::new();
                for da in a.dnf() {
                    for db in b.dnf() {
                        let mut conj = da.clone();
                        conj.extend(db.iter().cloned());
                        out.push(conj);
                    }
                }
                out
            }
            PredExpr::Not(inner) => match inner.as_ref() {
                PredExpr::Atom(a) => vec![vec![(false, a.clone())]],
                PredExpr::Not(e) => e.dnf(),
                PredExpr::And(a, b) => {
                    PredExpr::or(PredExpr::not(*a.clone()), PredExpr::not(*b.clone())).dnf()
                }
                PredExpr::Or(a, b) => {
                    PredExpr::and(PredExpr::not(*a.clone()), PredExpr::not(*b.clone())).dnf()
                }
            },
        }
    }
}

/// Node-predicate alphabet in stream order: the five operators, `leaf`,
/// then the three input classes.
pub const NODE_PREDS: [&str; 9] = [
    "and", "or", "not", "xor", "mul", "leaf", "inrand", "inkey", "inpub",
];

/// The node-predicate stream: atoms, negated atoms, operator-pair
/// disjunctions, and input-class-pair disjunctions (36 expressions).
/// Conjunctions of node predicates are omitted: distinct operator and class
/// atoms are mutually exclusive on any node, so they never add a
/// satisfiable candidate.
pub fn p_stream() -> Vec<PredExpr> {
    let mut out = Vec::new();
    for a in NODE_PREDS {
        out.push(PredExpr::atom(a));
    }
    for a in NODE_PREDS {
        out.push(PredExpr::not(PredExpr::atom(a)));
    }
    for i in 0..6 {
        for j in i + 1..6 {
            out.push(PredExpr::or(
                PredExpr::atom(NODE_PREDS[i]),
                PredExpr::atom(NODE_PREDS[j]),
            ));
        }
    }
    for i in 6..9 {
        for j in i + 1..9 {
            out.push(PredExpr::or(
                PredExpr::atom(NODE_PREDS[i]),
                PredExpr::atom(NODE_PREDS[j]),
            ));
        }
    }
    out
}

/// The edge-predicate stream: `lc`, `rc`, `eq`, their negations, three
/// disjunctions, and the one non-degenerate conjunction (10 expressions).
pub fn q_stream() -> Vec<PredExpr> {
    let lc = || PredExpr::atom("lc");
    let rc = || PredExpr::atom("rc");
    let eq = || PredExpr::atom("eq");
    vec![
        lc(),
        rc(),
        eq(),
        PredExpr::not(lc()),
        PredExpr::not(rc()),
        PredExpr::not(eq()),
        PredExpr::or(lc(), rc()),
        PredExpr::or(lc(), eq()),
        PredExpr::or(rc(), eq()),
        PredExpr::and(lc(), rc()),
    ]
}

/// Rule templates. `F1`..`F5` target `f(x)`, `G1`..`G4` target `g(x,y)`,
/// `H1`..`H3` target `h(x)`. `HShared` is an additional join template,
/// `h(x) <- lc(x,L), rc(x,R), g(L,Y), g(R,Y)`, needed to express
/// shared-operand properties such as two children reaching a common leaf.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetaRule {
    /// `f(x) <- p(x)`
    F1,
    /// `f(x) <- q(x,y)`
    F2,
    /// `f(x) <- p(x), q(x,y)`
    F3,
    /// `f(x) <- q(x,y), f(y)`
    F4,
    /// `f(x) <- q(x,y), p(x), f(y)`
    F5,
    /// `g(x,y) <- q(x,y)`
    G1,
    /// `g(x,y) <- p(x), q(x,y)`
    G2,
    /// `g(x,y) <- q(x,z), g(z,y)`
    G3,
    /// `g(x,y) <- q(x,z), p(x), g(z,y)`
    G4,
    /// `h(x) <- f(x), p(x), q(x,y)`
    H1,
    /// `h(x) <- g(x,y), p(x), q(x,y)`
    H2,
    /// `h(x) <- f(x), g(x,y), p(x), q(x,y)`
    H3,
    /// `h(x) <- lc(x,L), rc(x,R), g(L,Y), g(R,Y)`
    HShared,
}

fn var(v: &str) -> Term {
    Term::Var(v.to_string())
}

/// A template slot: a list of alternatives (one per DNF disjunct), each a
/// list of literals.
type Slot = Vec<Vec<Literal>>;

fn p_slot(expr: &PredExpr, on: &str) -> Slot {
    expr.dnf()
        .into_iter()
        .map(|conj| {
            conj.into_iter()
                .map(|(sign, pred)| Literal {
                    positive: sign,
                    atom: Atom::new(pred, vec![var(on)]),
                })
                .collect()
        })
        .collect()
}

fn q_slot(expr: &PredExpr, a: &str, b: &str) -> Slot {
    expr.dnf()
        .into_iter()
        .map(|conj| {
            conj.into_iter()
                .map(|(sign, pred)| Literal {
                    positive: sign,
                    atom: Atom::new(pred, vec![var(a), var(b)]),
                })
                .collect()
        })
        .collect()
}

fn fixed(literals: Vec<Literal>) -> Slot {
    vec![literals]
}

fn pos(pred: &str, args: Vec<Term>) -> Literal {
    Literal::pos(Atom::new(pred, args))
}

/// Expands slot alternatives into one rule per combination.
fn expand(head: Atom, slots: Vec<Slot>) -> Vec<Rule> {
    let mut rules = vec![Vec::new()];
    for slot in slots {
        let mut next = Vec::new();
        for body in &rules {
            for alt in &slot {
                let mut b: Vec<Literal> = body.clone();
                b.extend(alt.iter().cloned());
                next.push(b);
            }
        }
        rules = next;
    }
    rules
        .into_iter()
        .map(|body| Rule::new(head.clone(), body))
        .collect()
}

/// Instantiates one template with the given predicate expressions. Unused
/// slots are ignored (for example `F1` reads only `p`). Compound
/// expressions yield one rule per DNF disjunct. Recursive templates refer
/// to the placeholder head names `f`, `g`, `h`; rename them with
/// [`rename_pred`] when adopting a candidate.
pub fn instantiate_metarule(m: MetaRule, p: &PredExpr, q: &PredExpr) -> Vec<Rule> {
    let f_head = Atom::new("f", vec![var("X")]);
    let g_head = Atom::new("g", vec![var("X"), var("Y")]);
    let h_head = Atom::new("h", vec![var("X")]);
    match m {
        MetaRule::F1 => expand(f_head, vec![p_slot(p, "X")]),
        MetaRule::F2 => expand(f_head, vec![q_slot(q, "X", "Y")]),
        MetaRule::F3 => expand(f_head, vec![p_slot(p, "X"), q_slot(q, "X", "Y")]),
        MetaRule::F4 => expand(
            f_head,
            vec![
                q_slot(q, "X", "Y"),
                fixed(vec![pos("f", vec![var("Y")])]),
            ],
        ),
        MetaRule::F5 => expand(
            f_head,
            vec![
                q_slot(q, "X", "Y"),
                p_slot(p, "X"),
                fixed(vec![pos("f", vec![var("Y")])]),
            ],
        ),
        MetaRule::G1 => expand(g_head, vec![q_slot(q, "X", "Y")]),
        MetaRule::G2 => expand(g_head, vec![p_slot(p, "X"), q_slot(q, "X", "Y")]),
        MetaRule::G3 => expand(
            g_head,
            vec![
                q_slot(q, "X", "Z"),
                fixed(vec![pos("g", vec![var("Z"), var("Y")])]),
            ],
        ),
        MetaRule::G4 => expand(
            g_head,
            vec![
                q_slot(q, "X", "Z"),
                p_slot(p, "X"),
                fixed(vec![pos("g", vec![var("Z"), var("Y")])]),
            ],
        ),
        MetaRule::H1 => expand(
            h_head,
            vec![
                fixed(vec![pos("f", vec![var("X")])]),
                p_slot(p, "X"),
                q_slot(q, "X", "Y"),
            ],
        ),
        MetaRule::H2 => expand(
            h_head,
            vec![
                fixed(vec![pos("g", vec![var("X"), var("Y")])]),
                p_slot(p, "X"),
                q_slot(q, "X", "Y"),
            ],
        ),
        MetaRule::H3 => expand(
            h_head,
            vec![
                fixed(vec![pos("f", vec![var("X")])]),
                fixed(vec![pos("g", vec![var("X"), var("Y")])]),
                p_slot(p, "X"),
                q_slot(q, "X", "Y"),
            ],
        ),
        MetaRule::HShared => expand(
            h_head,
            vec![fixed(vec![
                pos("lc", vec![var("X"), var("L")]),
                pos("rc", vec![var("X"), var("R")]),
                pos("g", vec![var("L"), var("Y")]),
                pos("g", vec![var("R"), var("Y")]),
            ])],
        ),
    }
}

/// Renames every occurrence of predicate `from` to `to` in a rule set.
pub fn rename_pred(rules: &[Rule], from: &str, to: &str) -> Vec<Rule> {
    rules
        .iter()
        .map(|r| {
            let fix = |atom: &Atom| -> Atom {
                if atom.pred == from {
                    Atom::new(to, atom.args.clone())
                } else {
                    atom.clone()
                }
            };
            Rule {
                head: fix(&r.head),
                body: r
                    .body
                    .iter()
                    .map(|l| Literal {
                        positive: l.positive,
                        atom: fix(&l.atom),
                    })
                    .collect(),
            }
        })
        .collect()
}

/// Target schema of a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Schema {
    F,
    G,
    H,
}

/// Sub-family of `g` candidates used inside `h` joins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GFam {
    /// Single edge rule.
    G1,
    /// Guarded single edge rule.
    G2,
    /// Reflexive seed at `p` nodes plus a `q` step.
    G3,
    /// Reflexive seed plus a guarded `q` step.
    G4,
}

/// Candidate family: which templates are combined and how the slots are
/// read from the `p`/`q` stream indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// `{F1[p]}`
    F1,
    /// `{F2[q]}`
    F2,
    /// `{F3[p,q]}`
    F3,
    /// `{F1[p], F4[q]}`: seeded reachability.
    F4,
    /// `{F1[p], F5[q, guard]}`: guarded reachability.
    F5,
    /// `{G1[q]}`
    G1,
    /// `{G2[p,q]}`
    G2,
    /// `{G2[p, eq], G3[q]}`: reflexive seed plus step.
    G3,
    /// `{G2[p, eq], G4[q, guard]}`
    G4,
    /// Shared join over one `g` candidate on both operands.
    HSym(GFam),
    /// Shared join over two seeds (`p`, `p2`) with a common step `q`.
    HAsym,
    /// `{f-candidate(p2,q2), H1[p,q]}`
    H1,
    /// `{g-candidate(p2,q2), H2[p,q]}`
    H2,
}

/// Compact candidate descriptor; rules are produced by [`materialize`].
/// Fields index into [`p_stream`] / [`q_stream`]; unused slots are 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Candidate {
    pub family: Family,
    pub p: u8,
    pub q: u8,
    pub guard: u8,
    pub p2: u8,
    pub q2: u8,
}

impl Candidate {
    /// Target schema.
    pub fn schema(&self) -> Schema {
        match self.family {
            Family::F1 | Family::F2 | Family::F3 | Family::F4 | Family::F5 => Schema::F,
            Family::G1 | Family::G2 | Family::G3 | Family::G4 => Schema::G,
            Family::HSym(_) | Family::HAsym | Family::H1 | Family::H2 => Schema::H,
        }
    }

    /// Placeholder head predicate of the materialized program.
    pub fn head_pred(&self) -> &'static str {
        match self.schema() {
            Schema::F => "f",
            Schema::G => "g",
            Schema::H => "h",
        }
    }
}

fn g_family_rules(fam: GFam, p: &PredExpr, q: &PredExpr, guard: &PredExpr) -> Vec<Rule> {
    let eq = PredExpr::atom("eq");
    match fam {
        GFam::G1 => instantiate_metarule(MetaRule::G1, p, q),
        GFam::G2 => instantiate_metarule(MetaRule::G2, p, q),
        GFam::G3 => {
            let mut rules = instantiate_metarule(MetaRule::G2, p, &eq);
            rules.extend(instantiate_metarule(MetaRule::G3, p, q));
            rules
        }
        GFam::G4 => {
            let mut rules = instantiate_metarule(MetaRule::G2, p, &eq);
            rules.extend(instantiate_metarule(MetaRule::G4, guard, q));
            rules
        }
    }
}

/// Produces the Datalog program of a candidate, with placeholder head
/// predicates `f`/`g`/`h` and auxiliary predicates `ga`/`gb` for two-seed
/// joins.
pub fn materialize(c: &Candidate) -> Vec<Rule> {
    materialize_with(c, &p_stream(), &q_stream())
}

/// As [`materialize`], with caller-provided predicate pools (avoids
/// rebuilding the streams when materializing many candidates).
pub fn materialize_with(c: &Candidate, ps: &[PredExpr], qs: &[PredExpr]) -> Vec<Rule> {
    let p = &ps[c.p as usize];
    let q = &qs[c.q as usize];
    let guard = &ps[c.guard as usize];
    let p2 = &ps[c.p2 as usize];
    let q2 = &qs[c.q2 as usize];
    match c.family {
        Family::F1 => instantiate_metarule(MetaRule::F1, p, q),
        Family::F2 => instantiate_metarule(MetaRule::F2, p, q),
        Family::F3 => instantiate_metarule(MetaRule::F3, p, q),
        Family::F4 => {
            let mut rules = instantiate_metarule(MetaRule::F1, p, q);
            rules.extend(instantiate_metarule(MetaRule::F4, p, q));
            rules
        }
        Family::F5 => {
            let mut rules = instantiate_metarule(MetaRule::F1, p, q);
            rules.extend(instantiate_metarule(MetaRule::F5, guard, q));
            rules
        }
        Family::G1 => g_family_rules(GFam::G1, p, q, guard),
        Family::G2 => g_family_rules(GFam::G2, p, q, guard),
        Family::G3 => g_family_rules(GFam::G3, p, q, guard),
        Family::G4 => g_family_rules(GFam::G4, p, q, guard),
        Family::HSym(fam) => {
            let mut rules = g_family_rules(fam, p, q, guard);
            rules.extend(instantiate_metarule(MetaRule::HShared, p, q));
            rules
        }
        Family::HAsym => {
            let ga = rename_pred(&g_family_rules(GFam::G3, p, q, guard), "g", "ga");
            let gb = rename_pred(&g_family_rules(GFam::G3, p2, q, guard), "g", "gb");
            let mut rules = ga;
            rules.extend(gb);
            rules.push(Rule::new(
                Atom::new("h", vec![var("X")]),
                vec![
                    pos("lc", vec![var("X"), var("L")]),
                    pos("rc", vec![var("X"), var("R")]),
                    pos("ga", vec![var("L"), var("Y")]),
                    pos("gb", vec![var("R"), var("Y")]),
                ],
            ));
            rules
        }
        Family::H1 => {
            let mut rules = instantiate_metarule(MetaRule::F1, p2, q2);
            rules.extend(instantiate_metarule(MetaRule::F4, p2, q2));
            rules.extend(instantiate_metarule(MetaRule::H1, p, q));
            rules
        }
        Family::H2 => {
            let mut rules = g_family_rules(GFam::G3, p2, q2, guard);
            rules.extend(instantiate_metarule(MetaRule::H2, p, q));
            rules
        }
    }
}

/// Canonical text of a candidate program: rule canonicals sorted and
/// joined. Identifies candidates up to rule and body-literal order.
pub fn candidate_signature(rules: &[Rule]) -> String {
    let mut lines: Vec<String> = rules.iter().map(Rule::canonical).collect();
    lines.sort();
    lines.join(" ")
}

fn program_size(rules: &[Rule]) -> usize {
    rules.iter().map(|r| 1 + r.body.len()).sum()
}

/// Enumerates the candidate stream: deterministic, ordered by (schema,
/// size, text), duplicate-free, truncated to `budget` candidates. Programs
/// whose literal count exceeds `size_cap` are skipped.
pub fn enumerate_candidates(budget: usize, size_cap: usize) -> Vec<Candidate> {
    assert!(budget >= 1);
    let np = p_stream().len() as u8;
    let nq = q_stream().len() as u8;
    // Input-class atoms (`inrand`, `inkey`, `inpub`) in [`p_stream`] order,
    // the only seeds from which recursion is instantiated.
    let class_seeds: [u8; 3] = [6, 7, 8];
    // Primitive edge relations (`lc`, `rc`, `eq`) in [`q_stream`] order.
    let prim_edges: [u8; 3] = [0, 1, 2];
    // Index of `lc(X,Y) ∨ rc(X,Y)` in [`q_stream`]: steps to either child.
    let both_edges: u8 = 6;
    let mut raw: Vec<Candidate> = Vec::new();
    let cand = |family, p, q| Candidate {
        family,
        p,
        q,
        guard: 0,
        p2: 0,
        q2: 0,
    };

    // Local tests: every node property, every edge shape, and every node
    // property paired with one primitive edge.
    for p in 0..np {
        raw.push(cand(Family::F1, p, 0));
    }
    for q in 0..nq {
        raw.push(cand(Family::F2, 0, q));
    }
    for p in 0..np {
        for q in prim_edges {
            raw.push(cand(Family::F3, p, q));
        }
    }
    // Cone membership: an input class seeded at leaves and closed under
    // both child edges.
    for p in class_seeds {
        raw.push(cand(Family::F4, p, both_edges));
    }
    // Pair-valued primitives, reflexive cone walks, and the shared-leaf
    // join of two cone walks rooted at the two operands.
    for q in prim_edges {
        raw.push(cand(Family::G1, 0, q));
    }
    for p in class_seeds {
        raw.push(cand(Family::G3, p, both_edges));
        raw.push(cand(Family::HSym(GFam::G3), p, both_edges));
    }

    let ps = p_stream();
    let qs = q_stream();
    let mut keyed: Vec<(Schema, usize, String, Candidate)> = raw
        .into_iter()
        .filter_map(|c| {
            let rules = materialize_with(&c, &ps, &qs);
            let size = program_size(&rules);
            if size > size_cap {
                return None;
            }
            Some((c.schema(), size, candidate_signature(&rules), c))
        })
        .collect();
    keyed.sort_by(|a, b| (a.0, a.1, &a.2).cmp(&(b.0, b.1, &b.2)));
    let mut seen: HashSet<String> = HashSet::new();
    let mut out = Vec::new();
    for (_, _, sig, c) in keyed {
        if seen.insert(sig) {
            out.push(c);
            if out.len() == budget {
                break;
            }
        }
    }
    out
}

/// The reference shared-random detector: reflexive `g` seeded at random
/// leaves, closed under both child edges, joined on both operands.
pub fn shared_rand_candidate() -> Candidate {
    Candidate {
        family: Family::HSym(GFam::G3),
        p: 6,
        q: 6,
        guard: 0,
        p2: 0,
        q2: 0,
    }
}

/// Same join with a key-leaf seed: detects a key shared by both operands.
pub fn shared_key_candidate() -> Candidate {
    Candidate {
        family: Family::HSym(GFam::G3),
        p: 7,
        q: 6,
        guard: 0,
        p2: 0,
        q2: 0,
    }
}
