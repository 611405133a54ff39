//! A small propositional satisfiability solver.
//!
//! Verification conditions are converted to CNF with the Tseitin
//! transformation and decided by DPLL with unit propagation. Instances
//! produced by the induction encoder are definition-heavy, so propagation
//! resolves most variables and the decision heuristic only has to order the
//! few genuinely free bits.

use std::collections::HashMap;
use std::time::Instant;

use crate::formula::{Formula, Var};

/// Outcome of a satisfiability query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SatOutcome {
    /// Satisfiable, with one model over the variables of the input formula.
    Sat(HashMap<Var, bool>),
    /// Unsatisfiable.
    Unsat,
    /// The deadline expired before a verdict.
    TimedOut,
}

/// Literal: variable index times two, low bit set when negated.
type Lit = u32;

fn lit(v: u32, negated: bool) -> Lit {
    v * 2 + negated as u32
}

fn lit_var(l: Lit) -> u32 {
    l >> 1
}

/// Tseitin conversion. Returns a literal equisatisfiable with `f` and
/// appends the defining clauses.
fn encode(f: &Formula, next: &mut u32, clauses: &mut Vec<Vec<Lit>>) -> Lit {
    match f {
        Formula::Const(b) => {
            let v = *next;
            *next += 1;
            clauses.push(vec![lit(v, !b)]);
            lit(v, false)
        }
        Formula::Var(v) => lit(*v, false),
        Formula::Not(inner) => encode(inner, next, clauses) ^ 1,
        Formula::And(parts) => {
            let x = *next;
            *next += 1;
            let mut wide = vec![lit(x, false)];
            for p in parts {
                let l = encode(p, next, clauses);
                clauses.push(vec![lit(x, true), l]);
                wide.push(l ^ 1);
            }
            clauses.push(wide);
            lit(x, false)
        }
        Formula::Or(parts) => {
            let x = *next;
            *next += 1;
            let mut wide = vec![lit(x, true)];
            for p in parts {
                let l = encode(p, next, clauses);
                clauses.push(vec![lit(x, false), l ^ 1]);
                wide.push(l);
            }
            clauses.push(wide);
            lit(x, false)
        }
    }
}

struct Solver {
    clauses: Vec<Vec<Lit>>,
    /// Clause indices touched when the indexing literal becomes false.
    occur: Vec<Vec<u32>>,
    /// 0 unassigned, 1 true, -1 false.
    assign: Vec<i8>,
    trail: Vec<Lit>,
    /// Decisions as (trail length before the decision, literal, flipped).
    decisions: Vec<(usize, Lit, bool)>,
    /// Static decision order, most frequent variables first.
    order: Vec<u32>,
}

impl Solver {
    fn new(n_vars: u32, clauses: Vec<Vec<Lit>>) -> Solver {
        let mut occur = vec![Vec::new(); n_vars as usize * 2];
        let mut freq = vec![0u32; n_vars as usize];
        for (ci, clause) in clauses.iter().enumerate() {
            for &l in clause {
                occur[(l ^ 1) as usize].push(ci as u32);
                freq[lit_var(l) as usize] += 1;
            }
        }
        let mut order: Vec<u32> = (0..n_vars).collect();
        order.sort_by_key(|&v| std::cmp::Reverse(freq[v as usize]));
        Solver {
            clauses,
            occur,
            assign: vec![0; n_vars as usize],
            trail: Vec::new(),
            decisions: Vec::new(),
            order,
        }
    }

    fn value(&self, l: Lit) -> i8 {
        let a = self.assign[lit_var(l) as usize];
        if l & 1 == 0 {
            a
        } else {
            -a
        }
    }

    fn push(&mut self, l: Lit) {
        self.assign[lit_var(l) as usize] = if l & 1 == 0 { 1 } else { -1 };
        self.trail.push(l);
    }

    /// Propagates unit clauses from `qhead` on. Returns false on conflict.
    fn propagate(&mut self, mut qhead: usize) -> bool {
        while qhead < self.trail.len() {
            let l = self.trail[qhead];
            qhead += 1;
            // Clauses containing the negation of `l` were registered under
            // `l` itself, so this walk visits exactly the clauses that lost
            // a literal.
            for i in 0..self.occur[l as usize].len() {
                let ci = self.occur[l as usize][i] as usize;
                let mut unit = None;
                let mut satisfied = false;
                let mut unassigned = 0;
                for &cl in &self.clauses[ci] {
                    match self.value(cl) {
                        1 => {
                            satisfied = true;
                            break;
                        }
                        0 => {
                            unassigned += 1;
                            unit = Some(cl);
                        }
                        _ => {}
                    }
                }
                if satisfied {
                    continue;
                }
                match unassigned {
                    0 => return false,
                    1 => self.push(unit.unwrap()),
                    _ => {}
                }
            }
        }
        true
    }

    /// Undoes the deepest unflipped decision and asserts its negation.
    /// Returns false when no decision is left to flip.
    fn backtrack(&mut self) -> bool {
        while let Some((mark, l, flipped)) = self.decisions.pop() {
            for &t in &self.trail[mark..] {
                self.assign[lit_var(t) as usize] = 0;
            }
            self.trail.truncate(mark);
            if !flipped {
                self.decisions.push((mark, l ^ 1, true));
                self.push(l ^ 1);
                return true;
            }
        }
        false
    }

    fn solve(&mut self, deadline: Option<Instant>) -> Option<bool> {
        // Seed propagation with pre-existing unit clauses.
        for ci in 0..self.clauses.len() {
            let mut unit = None;
            let mut satisfied = false;
            let mut unassigned = 0;
            for &cl in &self.clauses[ci] {
                match self.value(cl) {
                    1 => {
                        satisfied = true;
                        break;
                    }
                    0 => {
                        unassigned += 1;
                        unit = Some(cl);
                    }
                    _ => {}
                }
            }
            if satisfied {
                continue;
            }
            match unassigned {
                0 => return Some(false),
                1 => {
                    let u = unit.unwrap();
                    if self.value(u) == 0 {
                        self.push(u);
                    }
                }
                _ => {}
            }
        }
        let mut qhead = 0;
        let mut steps: u64 = 0;
        loop {
            let ok = self.propagate(qhead);
            steps += 1;
            if let Some(d) = deadline {
                if steps % 64 == 0 && Instant::now() > d {
                    return None;
                }
            }
            if !ok {
                if !self.backtrack() {
                    return Some(false);
                }
                qhead = self.trail.len() - 1;
                continue;
            }
            let next = self
                .order
                .iter()
                .copied()
                .find(|&v| self.assign[v as usize] == 0);
            match next {
                None => return Some(true),
                Some(v) => {
                    let l = lit(v, true);
                    self.decisions.push((self.trail.len(), l, false));
                    self.push(l);
                    qhead = self.trail.len() - 1;
                }
            }
        }
    }
}

/// Decides satisfiability of `f`. A model maps exactly the variables
/// occurring in `f`; auxiliary Tseitin variables are dropped.
pub fn solve(f: &Formula, deadline: Option<Instant>) -> SatOutcome {
    match f {
        Formula::Const(true) => return SatOutcome::Sat(HashMap::new()),
        Formula::Const(false) => return SatOutcome::Unsat,
        _ => {}
    }
    let vars = f.vars();
    let n_orig = vars.iter().max().map_or(0, |&v| v + 1);
    let mut next = n_orig;
    let mut clauses = Vec::new();
    let root = encode(f, &mut next, &mut clauses);
    clauses.push(vec![root]);
    let mut solver = Solver::new(next, clauses);
    match solver.solve(deadline) {
        None => SatOutcome::TimedOut,
        Some(false) => SatOutcome::Unsat,
        Some(true) => {
            let model = vars
                .into_iter()
                .map(|v| (v, solver.assign[v as usize] == 1))
                .collect();
            SatOutcome::Sat(model)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::VarPool;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn v(pool: &mut VarPool, name: &str) -> Formula {
        Formula::var(pool.var(name))
    }

    #[test]
    fn finds_a_model() {
        let mut pool = VarPool::new();
        let (a, b) = (v(&mut pool, "a"), v(&mut pool, "b"));
        let f = Formula::and([Formula::or([a.clone(), b.clone()]), Formula::not(a.clone())]);
        match solve(&f, None) {
            SatOutcome::Sat(model) => {
                assert!(f.eval(&|x| model.get(&x).copied().unwrap_or(false)));
            }
            other => panic!("expected sat, got {other:?}"),
        }
    }

    #[test]
    fn detects_contradiction() {
        let mut pool = VarPool::new();
        let a = v(&mut pool, "a");
        let f = Formula::and([a.clone(), Formula::not(a)]);
        assert_eq!(solve(&f, None), SatOutcome::Unsat);
    }

    #[test]
    fn pigeonhole_is_unsatisfiable() {
        // Three pigeons into two holes.
        let mut pool = VarPool::new();
        let var = |pool: &mut VarPool, p: usize, h: usize| {
            Formula::var(pool.var(format!("p{p}h{h}")))
        };
        let mut parts = Vec::new();
        for p in 0..3 {
            parts.push(Formula::or([var(&mut pool, p, 0), var(&mut pool, p, 1)]));
        }
        for h in 0..2 {
            for p1 in 0..3 {
                for p2 in p1 + 1..3 {
                    parts.push(Formula::or([
                        Formula::not(var(&mut pool, p1, h)),
                        Formula::not(var(&mut pool, p2, h)),
                    ]));
                }
            }
        }
        assert_eq!(solve(&Formula::and(parts), None), SatOutcome::Unsat);
    }

    fn random_formula(rng: &mut StdRng, depth: usize, n_vars: u32) -> Formula {
        if depth == 0 || rng.gen_bool(0.3) {
            let f = Formula::Var(rng.gen_range(0..n_vars));
            return if rng.gen_bool(0.5) { Formula::not(f) } else { f };
        }
        let n = rng.gen_range(2..4);
        let parts: Vec<Formula> = (0..n)
            .map(|_| random_formula(rng, depth - 1, n_vars))
            .collect();
        if rng.gen_bool(0.5) {
            Formula::and(parts)
        } else {
            Formula::or(parts)
        }
    }

    #[test]
    fn agrees_with_exhaustive_evaluation() {
        let n_vars = 8u32;
        for seed in 0..200 {
            let mut rng = StdRng::seed_from_u64(seed);
            let f = random_formula(&mut rng, 4, n_vars);
            let truly_sat = (0..1u32 << n_vars)
                .any(|bits| f.eval(&|x| bits >> x & 1 == 1));
            match solve(&f, None) {
                SatOutcome::Sat(model) => {
                    assert!(truly_sat, "seed {seed}: solver claimed sat");
                    assert!(
                        f.eval(&|x| model.get(&x).copied().unwrap_or(false)),
                        "seed {seed}: model does not satisfy the formula"
                    );
                }
                SatOutcome::Unsat => {
                    assert!(!truly_sat, "seed {seed}: solver claimed unsat");
                }
                SatOutcome::TimedOut => panic!("seed {seed}: timeout"),
            }
        }
    }
}
