//! Rule unrolling: finite-stage derivability as propositional formulas.
//!
//! Stage `k` holds every tuple derivable in at most `k` rounds of rule
//! application starting from the empty derived set (stages are cumulative,
//! so a tuple present at stage `k` stays present at `k+1`, and the stage-K
//! set equals the fixed point once `K` reaches the number of derivable
//! tuples). Each tuple carries a formula over ground base atoms recording
//! how it was derived: base atoms appear as propositional variables, one
//! rule application contributes the conjunction of its ground body, and
//! alternative derivations disjoin.
//!
//! Only groundings whose base atoms actually hold are expanded, so every
//! variable in a stage formula names a true base fact and the formula
//! evaluates to true under the base valuation. Negated base literals are
//! checked during grounding and folded away; negating a derived predicate
//! is rejected (stage semantics would not be monotone).

use std::collections::{HashMap, HashSet};

use crate::datalog::{Const, DatalogError, FactBase, Literal, Rule, Term};
use crate::formula::{Formula, VarPool};

/// Result of unrolling a rule program over a fact base.
#[derive(Debug, Clone)]
pub struct Unrolling {
    /// Names ground base atoms used in stage formulas.
    pub pool: VarPool,
    /// `stages[k]` maps derived tuples to their stage-`k` formulas;
    /// `stages[0]` is empty.
    pub stages: Vec<HashMap<(String, Vec<Const>), Formula>>,
}

impl Unrolling {
    /// Formula of a tuple at stage `k`, if derivable by then.
    pub fn formula(&self, k: usize, pred: &str, tuple: &[Const]) -> Option<&Formula> {
        self.stages
            .get(k)?
            .get(&(pred.to_string(), tuple.to_vec()))
    }

    /// Sorted tuples of one predicate derivable at stage `k`.
    pub fn tuples_at(&self, k: usize, pred: &str) -> Vec<Vec<Const>> {
        let mut out: Vec<Vec<Const>> = self.stages[k]
            .keys()
            .filter(|(p, _)| p == pred)
            .map(|(_, t)| t.clone())
            .collect();
        out.sort();
        out
    }

    /// Sorted union of a predicate's tuples across all stages (equal to the
    /// final stage because stages are cumulative).
    pub fn union_tuples(&self, pred: &str) -> Vec<Vec<Const>> {
        self.tuples_at(self.stages.len() - 1, pred)
    }
}

/// Unrolls all derived predicates of `rules` over `base` for `k` stages.
pub fn unroll(rules: &[Rule], base: &FactBase, k: usize) -> Result<Unrolling, DatalogError> {
    let idb: HashSet<&str> = rules.iter().map(|r| r.head.pred.as_str()).collect();
    for rule in rules {
        for lit in &rule.body {
            if !lit.positive && idb.contains(lit.atom.pred.as_str()) {
                return Err(DatalogError::Unstratifiable {
                    pred: lit.atom.pred.clone(),
                });
            }
        }
    }
    let mut pool = VarPool::new();
    let mut stages: Vec<HashMap<(String, Vec<Const>), Formula>> = vec![HashMap::new()];
    for _ in 0..k {
        let prev = stages.last().unwrap();
        let mut next = prev.clone();
        for rule in rules {
            let mut bindings: HashMap<String, Const> = HashMap::new();
            let mut derivations: Vec<(Vec<Const>, Formula)> = Vec::new();
            ground(
                rule,
                0,
                base,
                prev,
                &idb,
                &mut bindings,
                &mut Vec::new(),
                &mut pool,
                &mut derivations,
            );
            for (tuple, formula) in derivations {
                let key = (rule.head.pred.clone(), tuple);
                match next.get_mut(&key) {
                    Some(existing) => {
                        // Keep the earliest derivation; later alternatives
                        // disjoin only if genuinely new this stage.
                        if prev.contains_key(&key) {
                            continue;
                        }
                        let merged =
                            Formula::or([existing.clone(), formula]);
                        *existing = merged;
                    }
                    None => {
                        next.insert(key, formula);
                    }
                }
            }
        }
        stages.push(next);
    }
    Ok(Unrolling { pool, stages })
}

/// Stage formulas of one relation: index `k` maps tuples to formulas.
pub fn unroll_relation(
    rules: &[Rule],
    base: &FactBase,
    relation: &str,
    k: usize,
) -> Result<Vec<HashMap<Vec<Const>, Formula>>, DatalogError> {
    let u = unroll(rules, base, k)?;
    Ok(u
        .stages
        .iter()
        .map(|stage| {
            stage
                .iter()
                .filter(|((p, _), _)| p == relation)
                .map(|((_, t), f)| (t.clone(), f.clone()))
                .collect()
        })
        .collect())
}

fn atom_var(pool: &mut VarPool, pred: &str, tuple: &[Const]) -> Formula {
    let name = if tuple.len() == 1 {
        format!("{pred}({})", tuple[0])
    } else {
        format!("{pred}({},{})", tuple[0], tuple[1])
    };
    Formula::var(pool.var(name))
}

#[allow(clippy::too_many_arguments)]
fn ground(
    rule: &Rule,
    idx: usize,
    base: &FactBase,
    prev: &HashMap<(String, Vec<Const>), Formula>,
    idb: &HashSet<&str>,
    bindings: &mut HashMap<String, Const>,
    parts: &mut Vec<Formula>,
    pool: &mut VarPool,
    out: &mut Vec<(Vec<Const>, Formula)>,
) {
    if idx == rule.body.len() {
        let tuple: Vec<Const> = rule
            .head
            .args
            .iter()
            .map(|t| match t {
                Term::Const(c) => *c,
                Term::Var(v) => *bindings.get(v).expect("unbound head variable in unroll"),
            })
            .collect();
        out.push((tuple, Formula::and(parts.iter().cloned())));
        return;
    }
    let lit: &Literal = &rule.body[idx];
    let pred = lit.atom.pred.as_str();
    let bound: Vec<Option<Const>> = lit
        .atom
        .args
        .iter()
        .map(|t| match t {
            Term::Const(c) => Some(*c),
            Term::Var(v) => bindings.get(v).copied(),
        })
        .collect();

    if !lit.positive {
        let tuple: Vec<Const> = bound
            .iter()
            .map(|b| b.expect("negated literal with unbound variable in unroll"))
            .collect();
        if !base.holds(pred, &tuple) {
            ground(rule, idx + 1, base, prev, idb, bindings, parts, pool, out);
        }
        return;
    }

    let mut candidates: Vec<(Vec<Const>, Option<Formula>)> = Vec::new();
    if idb.contains(pred) {
        for ((p, tuple), formula) in prev {
            if p == pred {
                candidates.push((tuple.clone(), Some(formula.clone())));
            }
        }
        // A predicate may be both derived and present in the base.
        if let Some(rel) = base.relation(pred) {
            for t in rel.tuples() {
                candidates.push((t[..rel.arity()].to_vec(), None));
            }
        }
    } else if let Some(rel) = base.relation(pred) {
        for t in rel.tuples() {
            candidates.push((t[..rel.arity()].to_vec(), None));
        }
    }

    for (tuple, sub) in candidates {
        if tuple.len() != lit.atom.args.len() {
            continue;
        }
        let mut ok = true;
        let mut added: Vec<String> = Vec::new();
        for (i, b) in bound.iter().enumerate() {
            match b {
                Some(v) if *v != tuple[i] => {
                    ok = false;
                    break;
                }
                Some(_) => {}
                None => {
                    if let Term::Var(name) = &lit.atom.args[i] {
                        match bindings.get(name) {
                            Some(v) if *v != tuple[i] => {
                                ok = false;
                                break;
                            }
                            Some(_) => {}
                            None => {
                                bindings.insert(name.clone(), tuple[i]);
                                added.push(name.clone());
                            }
                        }
                    }
                }
            }
        }
        if ok {
            let part = match &sub {
                Some(f) => f.clone(),
                None => atom_var(pool, pred, &tuple),
            };
            parts.push(part);
            ground(rule, idx + 1, base, prev, idb, bindings, parts, pool, out);
            parts.pop();
        }
        for name in added {
            bindings.remove(&name);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datalog::{evaluate, parse_rule, EvalMode};
    use crate::ir::parse_program;

    fn reach_rules() -> Vec<Rule> {
        [
            "f(X) :- inrand(X).",
            "f(Y) :- lc(Y,X), f(X).",
            "f(Y) :- rc(Y,X), f(X).",
        ]
        .iter()
        .map(|t| parse_rule(t).unwrap())
        .collect()
    }

    #[test]
    fn stage_one_is_the_seed() {
        let program =
            parse_program("input r1 : rand\ninput k1 : key\nt1 = xor(k1, r1)\n").unwrap();
        let base = FactBase::from_program(&program);
        let u = unroll(&reach_rules(), &base, 1).unwrap();
        assert!(u.stages[0].is_empty());
        let r1 = 0;
        let f = u.formula(1, "f", &[r1]).unwrap();
        assert_eq!(f.to_smtlib(&u.pool), "inrand(0)");
        assert_eq!(u.tuples_at(1, "f"), vec![vec![r1]]);
    }

    #[test]
    fn stage_two_adds_child_edges() {
        let program =
            parse_program("input r1 : rand\ninput r2 : rand\nt1 = xor(r1, r2)\n").unwrap();
        let base = FactBase::from_program(&program);
        let u = unroll(&reach_rules(), &base, 2).unwrap();
        let t1 = 2;
        assert!(u.formula(1, "f", &[t1]).is_none());
        let f = u.formula(2, "f", &[t1]).unwrap();
        // Derivable through either child at stage 2.
        assert_eq!(
            f.to_smtlib(&u.pool),
            "(or (and lc(2,0) inrand(0)) (and rc(2,1) inrand(1)))"
        );
        // Every variable names a true base fact, so the certificate holds.
        assert!(f.eval(&|v| {
            let name = u.pool.name(v).to_string();
            let open = name.find('(').unwrap();
            let args: Vec<Const> = name[open + 1..name.len() - 1]
                .split(',')
                .map(|s| s.parse().unwrap())
                .collect();
            base.holds(&name[..open], &args)
        }));
    }

    #[test]
    fn union_matches_fixpoint() {
        for seed in 0..20 {
            let program = crate::ir::random_program(
                seed,
                crate::ir::RandomConfig {
                    n_pub: 1,
                    n_key: 1,
                    n_rand: 2,
                    n_gates: 6,
                    max_depth: 4,
                },
            );
            let base = FactBase::from_program(&program);
            let rules = reach_rules();
            let fixpoint = evaluate(&rules, &base, EvalMode::SemiNaive).unwrap();
            let mut expect: Vec<Vec<Const>> = fixpoint
                .relation("f")
                .map(|r| r.sorted_tuples().iter().map(|t| vec![t[0]]).collect())
                .unwrap_or_default();
            expect.sort();
            let k = program.len() + 1;
            let u = unroll(&rules, &base, k).unwrap();
            assert_eq!(u.union_tuples("f"), expect, "seed {seed}");
        }
    }

    #[test]
    fn stages_are_cumulative() {
        let program = parse_program(
            "input r1 : rand\nt1 = not(r1)\nt2 = not(t1)\nt3 = not(t2)\n",
        )
        .unwrap();
        let base = FactBase::from_program(&program);
        let u = unroll(&reach_rules(), &base, 4).unwrap();
        for k in 1..4 {
            let a = u.tuples_at(k, "f");
            let b = u.tuples_at(k + 1, "f");
            for t in &a {
                assert!(b.contains(t));
            }
            assert_eq!(a.len(), k.min(4));
        }
    }

    #[test]
    fn negated_derived_predicate_rejected() {
        let rules: Vec<Rule> = [
            "f(X) :- inrand(X).",
            "bad(X) :- node(X), not f(X).",
        ]
        .iter()
        .map(|t| parse_rule(t).unwrap())
        .collect();
        let program = parse_program("input r1 : rand\n").unwrap();
        let base = FactBase::from_program(&program);
        assert!(unroll(&rules, &base, 2).is_err());
    }

    #[test]
    fn negated_base_literal_filters_groundings() {
        let rules: Vec<Rule> = ["top(X) :- node(X), not leaf(X)."]
            .iter()
            .map(|t| parse_rule(t).unwrap())
            .collect();
        let program = parse_program("input r1 : rand\nt1 = not(r1)\n").unwrap();
        let base = FactBase::from_program(&program);
        let u = unroll(&rules, &base, 1).unwrap();
        assert_eq!(u.tuples_at(1, "top"), vec![vec![1]]);
    }
}
