//! Program representation and the `.mbp` text format.
//!
//! A program is a sequence of named nodes in topological order. Leaf nodes
//! are inputs tagged with a class (`pub`, `key`, `rand`); internal nodes
//! apply one of the gate operators to previously defined nodes. The text
//! format is line oriented:
//!
//! ```text
//! # comment
//! input k1 : key
//! input r1 : rand
//! t1 = xor(k1, r1)
//! label t1 : rud
//! ```
//!
//! `label` lines are optional ground-truth annotations used by training and
//! regression fixtures; they do not affect evaluation.

use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::oracle::DistType;

/// Index of a node within a [`Program`]. Nodes are stored in definition
/// order, so every operand index is smaller than the node's own index.
pub type NodeId = usize;

/// Input class of a leaf node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InputClass {
    /// Public value, known to the attacker.
    Pub,
    /// Secret key bit.
    Key,
    /// Uniformly distributed random mask bit, fresh per execution.
    Rand,
}

impl InputClass {
    /// Keyword used in the text format.
    pub fn keyword(self) -> &'static str {
        match self {
            InputClass::Pub => "pub",
            InputClass::Key => "key",
            InputClass::Rand => "rand",
        }
    }
}

/// Gate operator of an internal node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Operator {
    And,
    Or,
    Not,
    Xor,
    /// Alias for logical AND kept distinct so that multiplication gates in
    /// arithmetic-style sources survive round-trips.
    Mul,
}

impl Operator {
    /// Keyword used in the text format.
    pub fn keyword(self) -> &'static str {
        match self {
            Operator::And => "and",
            Operator::Or => "or",
            Operator::Not => "not",
            Operator::Xor => "xor",
            Operator::Mul => "mul",
        }
    }

    /// Number of operands the operator takes.
    pub fn arity(self) -> usize {
        match self {
            Operator::Not => 1,
            _ => 2,
        }
    }

    /// All operators in a fixed order (used by feature enumeration).
    pub fn all() -> [Operator; 5] {
        [
            Operator::And,
            Operator::Or,
            Operator::Not,
            Operator::Xor,
            Operator::Mul,
        ]
    }

    pub(crate) fn from_keyword(s: &str) -> Option<Operator> {
        match s {
            "and" => Some(Operator::And),
            "or" => Some(Operator::Or),
            "not" => Some(Operator::Not),
            "xor" => Some(Operator::Xor),
            "mul" => Some(Operator::Mul),
            _ => None,
        }
    }
}

/// A single node of a program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    /// Input leaf with its class.
    Input(InputClass),
    /// Gate applying `op` to operand nodes. Unary operators use only the
    /// first operand.
    Gate { op: Operator, args: [NodeId; 2] },
}

impl Node {
    /// Operand ids, respecting operator arity.
    pub fn operands(&self) -> &[NodeId] {
        match self {
            Node::Input(_) => &[],
            Node::Gate { op, args } => &args[..op.arity()],
        }
    }
}

/// A masked Boolean program: named nodes in topological order plus optional
/// ground-truth labels.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Program {
    /// Node definitions, operands always referring to earlier entries.
    pub nodes: Vec<Node>,
    /// Source-level names, parallel to `nodes`.
    pub names: Vec<String>,
    /// Ground-truth annotations from `label` lines, keyed by node id.
    pub labels: HashMap<NodeId, DistType>,
}

impl Program {
    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// True when the program has no nodes.
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Id of the node with the given source name, if any.
    pub fn id_of(&self, name: &str) -> Option<NodeId> {
        self.names.iter().position(|n| n == name)
    }

    /// Input ids in definition order, optionally restricted to one class.
    pub fn inputs(&self, class: Option<InputClass>) -> Vec<NodeId> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(id, node)| match node {
                Node::Input(c) if class.is_none() || class == Some(*c) => Some(id),
                _ => None,
            })
            .collect()
    }

    /// Count of input leaves.
    pub fn input_count(&self) -> usize {
        self.inputs(None).len()
    }

    /// Appends an input node and returns its id.
    pub fn push_input(&mut self, name: impl Into<String>, class: InputClass) -> NodeId {
        self.nodes.push(Node::Input(class));
        self.names.push(name.into());
        self.nodes.len() - 1
    }

    /// Appends a gate node and returns its id. Panics if an operand id is
    /// out of range; callers construct programs in topological order.
    pub fn push_gate(&mut self, name: impl Into<String>, op: Operator, args: &[NodeId]) -> NodeId {
        assert_eq!(args.len(), op.arity(), "operand count must match arity");
        let id = self.nodes.len();
        for &a in args {
            assert!(a < id, "operands must refer to earlier nodes");
        }
        let mut padded = [0usize; 2];
        padded[..args.len()].copy_from_slice(args);
        if args.len() == 1 {
            padded[1] = padded[0];
        }
        self.nodes.push(Node::Gate { op, args: padded });
        self.names.push(name.into());
        id
    }

    /// Depth of a node: 0 for inputs, 1 + max operand depth for gates.
    pub fn depth_of(&self, id: NodeId) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        for i in 0..=id {
            if let Node::Gate { .. } = self.nodes[i] {
                depth[i] = 1 + self.nodes[i]
                    .operands()
                    .iter()
                    .map(|&a| depth[a])
                    .max()
                    .unwrap_or(0);
            }
        }
        depth[id]
    }

    /// Maximum node depth over the whole program.
    pub fn depth(&self) -> usize {
        (0..self.nodes.len())
            .map(|id| self.depth_of(id))
            .max()
            .unwrap_or(0)
    }

    /// Serializes the program back to `.mbp` text. Parsing the result yields
    /// an equal program.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (id, node) in self.nodes.iter().enumerate() {
            match node {
                Node::Input(class) => {
                    out.push_str(&format!("input {} : {}\n", self.names[id], class.keyword()));
                }
                Node::Gate { op, .. } => {
                    let args: Vec<&str> = node
                        .operands()
                        .iter()
                        .map(|&a| self.names[a].as_str())
                        .collect();
                    out.push_str(&format!(
                        "{} = {}({})\n",
                        self.names[id],
                        op.keyword(),
                        args.join(", ")
                    ));
                }
            }
        }
        let mut labeled: Vec<_> = self.labels.iter().collect();
        labeled.sort();
        for (&id, ty) in labeled {
            out.push_str(&format!("label {} : {}\n", self.names[id], ty.keyword()));
        }
        out
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Errors produced by [`parse_program`]. Each variant carries the source
/// line (1-based) and a stable machine-readable code.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ParseError {
    /// Line does not match any statement form, or a token is malformed.
    #[error("line {line}, col {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    /// A name is defined twice.
    #[error("line {line}: duplicate definition of `{name}`")]
    Duplicate { line: usize, name: String },
    /// An operand or label refers to a name with no earlier definition.
    #[error("line {line}: `{name}` used before definition")]
    UseBeforeDef { line: usize, name: String },
    /// Wrong operand count for an operator.
    #[error("line {line}: operator `{op}` expects {expected} operand(s), got {got}")]
    Arity {
        line: usize,
        op: String,
        expected: usize,
        got: usize,
    },
}

impl ParseError {
    /// Stable error code, one per variant.
    pub fn code(&self) -> &'static str {
        match self {
            ParseError::Syntax { .. } => "syntax",
            ParseError::Duplicate { .. } => "duplicate",
            ParseError::UseBeforeDef { .. } => "use-before-def",
            ParseError::Arity { .. } => "arity",
        }
    }
}

fn valid_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Parses `.mbp` text into a [`Program`].
///
/// Statements are `input <name> : <class>`, `<name> = <op>(<args>)`, and
/// `label <name> : <type>`. Blank lines and `#` comments are ignored. Names
/// must be defined before use and at most once.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut program = Program::default();
    let mut ids: HashMap<String, NodeId> = HashMap::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let stmt = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        };
        let stmt = stmt.trim();
        if stmt.is_empty() {
            continue;
        }
        let col_of = |needle: &str| raw.find(needle).map_or(1, |i| i + 1);

        if let Some(rest) = stmt.strip_prefix("input ") {
            let (name, class) = split_colon(rest, line, raw)?;
            if !valid_name(name) {
                return Err(ParseError::Syntax {
                    line,
                    col: col_of(name),
                    msg: format!("invalid name `{name}`"),
                });
            }
            let class = match class {
                "pub" => InputClass::Pub,
                "key" => InputClass::Key,
                "rand" => InputClass::Rand,
                other => {
                    return Err(ParseError::Syntax {
                        line,
                        col: col_of(other),
                        msg: format!("unknown input class `{other}` (expected pub, key, or rand)"),
                    })
                }
            };
            if ids.contains_key(name) {
                return Err(ParseError::Duplicate {
                    line,
                    name: name.to_string(),
                });
            }
            let id = program.push_input(name, class);
            ids.insert(name.to_string(), id);
        } else if let Some(rest) = stmt.strip_prefix("label ") {
            let (name, ty) = split_colon(rest, line, raw)?;
            let &id = ids.get(name).ok_or_else(|| ParseError::UseBeforeDef {
                line,
                name: name.to_string(),
            })?;
            let ty = match ty {
                "rud" => DistType::Rud,
                "sid" => DistType::Sid,
                "ukd" => DistType::Ukd,
                other => {
                    return Err(ParseError::Syntax {
                        line,
                        col: col_of(other),
                        msg: format!("unknown type `{other}` (expected rud, sid, or ukd)"),
                    })
                }
            };
            program.labels.insert(id, ty);
        } else if let Some(eq) = stmt.find('=') {
            let name = stmt[..eq].trim();
            let rhs = stmt[eq + 1..].trim();
            if !valid_name(name) {
                return Err(ParseError::Syntax {
                    line,
                    col: 1,
                    msg: format!("invalid name `{name}`"),
                });
            }
            let open = rhs.find('(').ok_or_else(|| ParseError::Syntax {
                line,
                col: col_of(rhs),
                msg: "expected `op(args)` on right-hand side".to_string(),
            })?;
            if !rhs.ends_with(')') {
                return Err(ParseError::Syntax {
                    line,
                    col: raw.len(),
                    msg: "missing closing `)`".to_string(),
                });
            }
            let op_str = rhs[..open].trim();
            let op = Operator::from_keyword(op_str).ok_or_else(|| ParseError::Syntax {
                line,
                col: col_of(op_str),
                msg: format!("unknown operator `{op_str}`"),
            })?;
            let args_str = &rhs[open + 1..rhs.len() - 1];
            let arg_names: Vec<&str> = if args_str.trim().is_empty() {
                Vec::new()
            } else {
                args_str.split(',').map(str::trim).collect()
            };
            if arg_names.len() != op.arity() {
                return Err(ParseError::Arity {
                    line,
                    op: op_str.to_string(),
                    expected: op.arity(),
                    got: arg_names.len(),
                });
            }
            let mut args = Vec::new();
            for an in &arg_names {
                if !valid_name(an) {
                    return Err(ParseError::Syntax {
                        line,
                        col: col_of(an),
                        msg: format!("invalid operand name `{an}`"),
                    });
                }
                let &id = ids.get(*an).ok_or_else(|| ParseError::UseBeforeDef {
                    line,
                    name: an.to_string(),
                })?;
                args.push(id);
            }
            if ids.contains_key(name) {
                return Err(ParseError::Duplicate {
                    line,
                    name: name.to_string(),
                });
            }
            let id = program.push_gate(name, op, &args);
            ids.insert(name.to_string(), id);
        } else {
            return Err(ParseError::Syntax {
                line,
                col: 1,
                msg: format!("unrecognized statement `{stmt}`"),
            });
        }
    }
    Ok(program)
}

fn split_colon<'a>(rest: &'a str, line: usize, raw: &str) -> Result<(&'a str, &'a str), ParseError> {
    let colon = rest.find(':').ok_or_else(|| ParseError::Syntax {
        line,
        col: raw.len(),
        msg: "expected `:`".to_string(),
    })?;
    Ok((rest[..colon].trim(), rest[colon + 1..].trim()))
}

/// Configuration for [`random_program`].
#[derive(Debug, Clone, Copy)]
pub struct RandomConfig {
    /// Number of public inputs.
    pub n_pub: usize,
    /// Number of key inputs.
    pub n_key: usize,
    /// Number of random inputs.
    pub n_rand: usize,
    /// Number of gate nodes to generate.
    pub n_gates: usize,
    /// Upper bound on node depth; operand choice is biased to respect it.
    pub max_depth: usize,
}

impl Default for RandomConfig {
    fn default() -> Self {
        RandomConfig {
            n_pub: 1,
            n_key: 2,
            n_rand: 3,
            n_gates: 8,
            max_depth: 4,
        }
    }
}

/// Generates a random program from a seed. The same seed and configuration
/// always produce the same program. Gates draw operators uniformly and
/// operands uniformly from nodes whose depth stays under `max_depth`.
pub fn random_program(seed: u64, config: RandomConfig) -> Program {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut program = Program::default();
    let mut depth: Vec<usize> = Vec::new();
    for i in 0..config.n_pub {
        program.push_input(format!("p{}", i + 1), InputClass::Pub);
        depth.push(0);
    }
    for i in 0..config.n_key {
        program.push_input(format!("k{}", i + 1), InputClass::Key);
        depth.push(0);
    }
    for i in 0..config.n_rand {
        program.push_input(format!("r{}", i + 1), InputClass::Rand);
        depth.push(0);
    }
    assert!(!program.is_empty(), "need at least one input");

    for g in 0..config.n_gates {
        let op = Operator::all()[rng.gen_range(0..Operator::all().len())];
        let limit = config.max_depth.max(1);
        let eligible: Vec<NodeId> = (0..program.len()).filter(|&i| depth[i] < limit).collect();
        let pool = if eligible.is_empty() {
            (0..program.len()).collect()
        } else {
            eligible
        };
        let mut pick = || pool[rng.gen_range(0..pool.len())];
        let args: Vec<NodeId> = (0..op.arity()).map(|_| pick()).collect();
        let d = 1 + args.iter().map(|&a| depth[a]).max().unwrap();
        program.push_gate(format!("g{}", g + 1), op, &args);
        depth.push(d);
    }
    program
}
