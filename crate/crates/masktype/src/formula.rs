//! Propositional formulas over an interned variable pool.
//!
//! Used in two places: rule unrolling produces, per derivable tuple, a
//! formula over ground base atoms describing how the tuple can be derived;
//! and the induction prover builds verification conditions over abstract
//! summary bits. Constructors simplify constants eagerly so formulas stay
//! small.

use std::collections::BTreeSet;
use std::collections::HashMap;
use std::fmt;

/// Interned propositional variable.
pub type Var = u32;

/// Maps variable names to dense indices and back.
#[derive(Debug, Clone, Default)]
pub struct VarPool {
    names: Vec<String>,
    index: HashMap<String, Var>,
}

impl VarPool {
    /// Creates an empty pool.
    pub fn new() -> VarPool {
        VarPool::default()
    }

    /// Returns the variable for `name`, interning it on first use.
    pub fn var(&mut self, name: impl AsRef<str>) -> Var {
        let name = name.as_ref();
        if let Some(&v) = self.index.get(name) {
            return v;
        }
        let v = self.names.len() as Var;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), v);
        v
    }

    /// Looks up a variable without interning.
    pub fn get(&self, name: &str) -> Option<Var> {
        self.index.get(name).copied()
    }

    /// Name of a variable.
    pub fn name(&self, v: Var) -> &str {
        &self.names[v as usize]
    }

    /// Number of interned variables.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    /// True when no variable has been interned.
    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// All names in interning order.
    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// A propositional formula.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    Const(bool),
    Var(Var),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
}

impl Formula {
    /// The constant true.
    pub fn tru() -> Formula {
        Formula::Const(true)
    }

    /// The constant false.
    pub fn fls() -> Formula {
        Formula::Const(false)
    }

    /// A variable reference.
    pub fn var(v: Var) -> Formula {
        Formula::Var(v)
    }

    /// Negation with constant folding and double-negation elimination.
    pub fn not(f: Formula) -> Formula {
        match f {
            Formula::Const(b) => Formula::Const(!b),
            Formula::Not(inner) => *inner,
            other => Formula::Not(Box::new(other)),
        }
    }

    /// Conjunction; drops `true` operands, short-circuits on `false`,
    /// flattens nested conjunctions, and unwraps singletons.
    pub fn and(parts: impl IntoIterator<Item = Formula>) -> Formula {
        let mut out = Vec::new();
        for p in parts {
            match p {
                Formula::Const(true) => {}
                Formula::Const(false) => return Formula::Const(false),
                Formula::And(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Formula::Const(true),
            1 => out.pop().unwrap(),
            _ => Formula::And(out),
        }
    }

    /// Disjunction; dual of [`Formula::and`].
    pub fn or(parts: impl IntoIterator<Item = Formula>) -> Formula {
        let mut out = Vec::new();
        for p in parts {
            match p {
                Formula::Const(false) => {}
                Formula::Const(true) => return Formula::Const(true),
                Formula::Or(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Formula::Const(false),
            1 => out.pop().unwrap(),
            _ => Formula::Or(out),
        }
    }

    /// Implication `a -> b`.
    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::or([Formula::not(a), b])
    }

    /// Evaluates under an assignment.
    pub fn eval(&self, assign: &dyn Fn(Var) -> bool) -> bool {
        match self {
            Formula::Const(b) => *b,
            Formula::Var(v) => assign(*v),
            Formula::Not(f) => !f.eval(assign),
            Formula::And(fs) => fs.iter().all(|f| f.eval(assign)),
            Formula::Or(fs) => fs.iter().any(|f| f.eval(assign)),
        }
    }

    /// Set of variables occurring in the formula.
    pub fn vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Formula::Const(_) => {}
            Formula::Var(v) => {
                out.insert(*v);
            }
            Formula::Not(f) => f.collect_vars(out),
            Formula::And(fs) | Formula::Or(fs) => {
                for f in fs {
                    f.collect_vars(out);
                }
            }
        }
    }

    /// Renders as an SMT-LIB s-expression using pool names.
    pub fn to_smtlib(&self, pool: &VarPool) -> String {
        match self {
            Formula::Const(b) => if *b { "true" } else { "false" }.to_string(),
            Formula::Var(v) => pool.name(*v).to_string(),
            Formula::Not(f) => format!("(not {})", f.to_smtlib(pool)),
            Formula::And(fs) => {
                let parts: Vec<String> = fs.iter().map(|f| f.to_smtlib(pool)).collect();
                format!("(and {})", parts.join(" "))
            }
            Formula::Or(fs) => {
                let parts: Vec<String> = fs.iter().map(|f| f.to_smtlib(pool)).collect();
                format!("(or {})", parts.join(" "))
            }
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Const(b) => write!(f, "{b}"),
            Formula::Var(v) => write!(f, "v{v}"),
            Formula::Not(inner) => write!(f, "!({inner})"),
            Formula::And(fs) => {
                let parts: Vec<String> = fs.iter().map(|x| x.to_string()).collect();
                write!(f, "({})", parts.join(" & "))
            }
            Formula::Or(fs) => {
                let parts: Vec<String> = fs.iter().map(|x| x.to_string()).collect();
                write!(f, "({})", parts.join(" | "))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructors_fold_constants() {
        let mut pool = VarPool::new();
        let a = Formula::var(pool.var("a"));
        assert_eq!(Formula::and([Formula::tru(), a.clone()]), a);
        assert_eq!(
            Formula::and([Formula::fls(), a.clone()]),
            Formula::fls()
        );
        assert_eq!(Formula::or([Formula::fls()]), Formula::fls());
        assert_eq!(Formula::or([a.clone(), Formula::tru()]), Formula::tru());
        assert_eq!(Formula::not(Formula::not(a.clone())), a);
        assert_eq!(Formula::and([]), Formula::tru());
        assert_eq!(Formula::or([]), Formula::fls());
    }

    #[test]
    fn nested_connectives_flatten() {
        let mut pool = VarPool::new();
        let a = Formula::var(pool.var("a"));
        let b = Formula::var(pool.var("b"));
        let c = Formula::var(pool.var("c"));
        let f = Formula::and([Formula::and([a.clone(), b.clone()]), c.clone()]);
        assert_eq!(f, Formula::And(vec![a, b, c]));
    }

    #[test]
    fn eval_and_vars() {
        let mut pool = VarPool::new();
        let a = pool.var("a");
        let b = pool.var("b");
        let f = Formula::or([
            Formula::and([Formula::var(a), Formula::not(Formula::var(b))]),
            Formula::var(b),
        ]);
        assert!(f.eval(&|v| v == a));
        assert!(f.eval(&|v| v == b));
        assert!(!f.eval(&|_| false));
        assert_eq!(f.vars().len(), 2);
    }

    #[test]
    fn pool_interns_stably() {
        let mut pool = VarPool::new();
        let a1 = pool.var("x");
        let a2 = pool.var("x");
        assert_eq!(a1, a2);
        assert_eq!(pool.name(a1), "x");
        assert_eq!(pool.len(), 1);
    }

    #[test]
    fn smtlib_rendering() {
        let mut pool = VarPool::new();
        let a = Formula::var(pool.var("a"));
        let b = Formula::var(pool.var("b"));
        let f = Formula::and([a, Formula::not(b)]);
        assert_eq!(f.to_smtlib(&pool), "(and a (not b))");
    }
}
