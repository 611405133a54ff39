//! Entropy-guided decision-tree learning with on-demand feature synthesis.
//!
//! Training examples are program nodes labeled by the oracle, plus abstract
//! examples fed back from rejected rules. The learner greedily splits on the
//! feature with the highest information gain; when no known feature has
//! positive gain it scans the synthesis stream from [`crate::datalog::synth`]
//! for the first candidate whose truth values do split the examples, adopts
//! it as a named feature, and keeps going. Finished trees translate to
//! Datalog rules, one per path ending in a RUD or SID leaf.
//!
//! Abstract examples carry a value only for the features of the rule they
//! poison; everywhere else they read as not-applicable and are skipped (the
//! entropy of a split is computed over the applicable rows, renormalized).
//! A skipped row therefore never contributes gain, which is what prevents a
//! rejected rule from being learned a second time: the abstract example
//! follows the rejected rule's path exactly and turns its leaf impure.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::hash::{Hash, Hasher};
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::datalog::synth::{
    enumerate_candidates, materialize_with, p_stream, q_stream, rename_pred, Candidate, PredExpr,
    Schema, DEFAULT_BUDGET, DEFAULT_SIZE_CAP,
};
use crate::datalog::{
    evaluate, pad_unsafe, Atom, Const, EvalMode, FactBase, Literal, NamedFeature, Rule, RuleFile,
    Term,
};
use crate::ir::{Node, NodeId, Operator, Program};
use crate::oracle::{label_program_ext, DistType, ExtType, OracleError};

/// Gains below this threshold count as zero (guards against floating-point
/// noise when two subset entropies are mathematically equal).
const GAIN_EPS: f64 = 1e-9;

/// Value of a feature on one example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureValue {
    /// Not applicable: the example does not constrain this feature.
    Na,
    /// The queried child does not exist.
    Absent,
    /// The node is an input leaf.
    Leaf,
    /// The node is a gate with this operator.
    Op(Operator),
    /// Distribution type of a child node.
    Type(ExtType),
    /// Truth of a synthesized predicate at the node.
    Bool(bool),
}

impl FeatureValue {
    /// Token used by tree serialization.
    pub fn token(self) -> String {
        match self {
            FeatureValue::Na => "na".into(),
            FeatureValue::Absent => "absent".into(),
            FeatureValue::Leaf => "leaf".into(),
            FeatureValue::Op(op) => op.keyword().into(),
            FeatureValue::Type(t) => t.keyword().into(),
            FeatureValue::Bool(b) => b.to_string(),
        }
    }

    /// Inverse of [`token`](Self::token).
    pub fn from_token(tok: &str) -> Option<FeatureValue> {
        match tok {
            "na" => Some(FeatureValue::Na),
            "absent" => Some(FeatureValue::Absent),
            "leaf" => Some(FeatureValue::Leaf),
            "true" => Some(FeatureValue::Bool(true)),
            "false" => Some(FeatureValue::Bool(false)),
            _ => Operator::from_keyword(tok)
                .map(FeatureValue::Op)
                .or_else(|| ExtType::from_keyword(tok).map(FeatureValue::Type)),
        }
    }
}

/// A synthesized feature: a unary predicate defined by Datalog rules.
///
/// Pair-valued intermediates keep their own predicate and a projection rule
/// exposes them through the unary head, so negating the feature in a learned
/// rule stays stratified.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthFeature {
    /// Unary head predicate tested at each node.
    pub head: String,
    /// Defining rules, safety-padded and ready to evaluate.
    pub rules: Vec<Rule>,
}

/// What a feature computes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FeatureKind {
    /// Operator of the node itself (`Leaf` for inputs).
    OpSelf,
    /// Operator of the left child, `Absent` when there is none.
    OpLeft,
    /// Operator of the right child, `Absent` when there is none.
    OpRight,
    /// Distribution type of the left child.
    TypeLeft,
    /// Distribution type of the right child.
    TypeRight,
    /// Truth of a synthesized predicate.
    Synth(SynthFeature),
}

/// One feature of the learner's feature set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Feature {
    /// Position in the feature set; lower ids win gain ties.
    pub id: usize,
    /// Display name used by tree and rule-file serialization.
    pub name: String,
    /// What the feature computes.
    pub kind: FeatureKind,
}

/// Where an example comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Source {
    /// A node of a corpus program; feature values are computed on demand.
    Concrete { program: usize, node: NodeId },
    /// A bare feature valuation; entries beyond `values` read as
    /// [`FeatureValue::Na`].
    Abstract { values: Vec<FeatureValue> },
}

/// A labeled training example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    /// Origin and feature values.
    pub source: Source,
    /// Distribution type the classifier should reproduce.
    pub label: DistType,
}

/// Training programs with their base facts and oracle types.
#[derive(Debug, Clone)]
pub struct Corpus {
    programs: Vec<Program>,
    facts: Vec<FactBase>,
    ext: Vec<Vec<ExtType>>,
}

impl Corpus {
    /// Computes facts and oracle types for every program.
    pub fn new(programs: Vec<Program>) -> Result<Corpus, OracleError> {
        let mut facts = Vec::with_capacity(programs.len());
        let mut ext = Vec::with_capacity(programs.len());
        for p in &programs {
            facts.push(FactBase::from_program(p));
            ext.push(label_program_ext(p)?);
        }
        Ok(Corpus {
            programs,
            facts,
            ext,
        })
    }

    /// The training programs.
    pub fn programs(&self) -> &[Program] {
        &self.programs
    }

    /// Base facts of one program.
    pub fn facts(&self, program: usize) -> &FactBase {
        &self.facts[program]
    }

    /// Oracle types of one program's nodes.
    pub fn ext(&self, program: usize) -> &[ExtType] {
        &self.ext[program]
    }

    /// Number of programs.
    pub fn len(&self) -> usize {
        self.programs.len()
    }

    /// True when the corpus has no programs.
    pub fn is_empty(&self) -> bool {
        self.programs.is_empty()
    }
}

/// Limits for one synthesis invocation.
#[derive(Debug, Clone, Copy)]
pub struct SynthBudget {
    /// Candidates scanned before giving up.
    pub max_candidates: usize,
    /// Wall-clock limit per invocation.
    pub time_limit: Duration,
}

impl Default for SynthBudget {
    fn default() -> Self {
        SynthBudget {
            max_candidates: DEFAULT_BUDGET,
            time_limit: Duration::from_secs(10),
        }
    }
}

/// A learned classifier over feature values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tree {
    /// All examples in this context share a type, or the context could not
    /// be split and falls back to UKD.
    Leaf(DistType),
    /// Split on a feature; branches are ordered by value and cover exactly
    /// the values observed during training.
    Split {
        /// Feature id the split tests.
        feature: usize,
        /// Subtree per observed feature value.
        branches: Vec<(FeatureValue, Tree)>,
    },
}

impl Tree {
    /// Number of leaves.
    pub fn leaf_count(&self) -> usize {
        match self {
            Tree::Leaf(_) => 1,
            Tree::Split { branches, .. } => branches.iter().map(|(_, t)| t.leaf_count()).sum(),
        }
    }

    /// Serializes to nested-block text; [`parse_tree`] reads it back.
    pub fn to_text(&self, features: &[Feature]) -> String {
        let mut out = String::new();
        self.write(features, 0, &mut out);
        out
    }

    fn write(&self, features: &[Feature], indent: usize, out: &mut String) {
        match self {
            Tree::Leaf(t) => {
                out.push_str("leaf ");
                out.push_str(t.keyword());
                out.push('\n');
            }
            Tree::Split { feature, branches } => {
                out.push_str("split ");
                out.push_str(&features[*feature].name);
                out.push_str(" {\n");
                for (value, sub) in branches {
                    for _ in 0..indent + 1 {
                        out.push_str("  ");
                    }
                    out.push_str(&value.token());
                    out.push_str(" -> ");
                    sub.write(features, indent + 1, out);
                }
                for _ in 0..indent {
                    out.push_str("  ");
                }
                out.push_str("}\n");
            }
        }
    }
}

/// Tree text that does not parse.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TreeError {
    /// Malformed structure.
    #[error("tree text: {0}")]
    Parse(String),
    /// A split names a feature outside the given feature set.
    #[error("tree text: unknown feature `{0}`")]
    UnknownFeature(String),
    /// An edge carries an unrecognized value token.
    #[error("tree text: unknown value `{0}`")]
    UnknownValue(String),
}

/// Parses the nested-block text produced by [`Tree::to_text`].
pub fn parse_tree(text: &str, features: &[Feature]) -> Result<Tree, TreeError> {
    let mut tokens = Vec::new();
    for raw in text.split_whitespace() {
        let mut rest = raw;
        while let Some(pos) = rest.find(['{', '}']) {
            if pos > 0 {
                tokens.push(&rest[..pos]);
            }
            tokens.push(&rest[pos..pos + 1]);
            rest = &rest[pos + 1..];
        }
        if !rest.is_empty() {
            tokens.push(rest);
        }
    }
    let mut pos = 0;
    let tree = parse_tree_at(&tokens, &mut pos, features)?;
    if pos != tokens.len() {
        return Err(TreeError::Parse(format!(
            "trailing tokens after tree: `{}`",
            tokens[pos]
        )));
    }
    Ok(tree)
}

fn next_token<'a>(tokens: &[&'a str], pos: &mut usize) -> Result<&'a str, TreeError> {
    let t = tokens
        .get(*pos)
        .copied()
        .ok_or_else(|| TreeError::Parse("unexpected end of tree text".into()))?;
    *pos += 1;
    Ok(t)
}

fn parse_tree_at(
    tokens: &[&str],
    pos: &mut usize,
    features: &[Feature],
) -> Result<Tree, TreeError> {
    match next_token(tokens, pos)? {
        "leaf" => {
            let tok = next_token(tokens, pos)?;
            let label = DistType::from_keyword(tok)
                .ok_or_else(|| TreeError::UnknownValue(tok.to_string()))?;
            Ok(Tree::Leaf(label))
        }
        "split" => {
            let name = next_token(tokens, pos)?;
            let feature = features
                .iter()
                .find(|f| f.name == name)
                .map(|f| f.id)
                .ok_or_else(|| TreeError::UnknownFeature(name.to_string()))?;
            let open = next_token(tokens, pos)?;
            if open != "{" {
                return Err(TreeError::Parse(format!("expected `{{`, found `{open}`")));
            }
            let mut branches = Vec::new();
            loop {
                let tok = next_token(tokens, pos)?;
                if tok == "}" {
                    break;
                }
                let value = FeatureValue::from_token(tok)
                    .ok_or_else(|| TreeError::UnknownValue(tok.to_string()))?;
                let arrow = next_token(tokens, pos)?;
                if arrow != "->" {
                    return Err(TreeError::Parse(format!("expected `->`, found `{arrow}`")));
                }
                let sub = parse_tree_at(tokens, pos, features)?;
                branches.push((value, sub));
            }
            Ok(Tree::Split { feature, branches })
        }
        other => Err(TreeError::Parse(format!(
            "expected `leaf` or `split`, found `{other}`"
        ))),
    }
}

/// Shannon entropy in bits of a label multiset.
///
/// Panics on an empty slice: entropy of nothing is undefined.
pub fn entropy(labels: &[DistType]) -> f64 {
    assert!(!labels.is_empty(), "entropy of an empty example set");
    let mut counts = [0usize; 3];
    for l in labels {
        counts[*l as usize] += 1;
    }
    let n = labels.len() as f64;
    let mut h = 0.0;
    for c in counts {
        if c > 0 {
            let p = c as f64 / n;
            h -= p * p.log2();
        }
    }
    h
}

/// Conditional entropy of labels given a feature, skipping rows where the
/// feature is not applicable and renormalizing weights over the rest. When
/// every row is skipped this returns the unconditional entropy, so the
/// split offers no gain by convention.
pub fn cond_entropy(rows: &[(FeatureValue, DistType)]) -> f64 {
    assert!(!rows.is_empty(), "conditional entropy of an empty set");
    let kept: Vec<&(FeatureValue, DistType)> = rows
        .iter()
        .filter(|(v, _)| *v != FeatureValue::Na)
        .collect();
    if kept.is_empty() {
        let labels: Vec<DistType> = rows.iter().map(|(_, l)| *l).collect();
        return entropy(&labels);
    }
    let mut groups: BTreeMap<FeatureValue, Vec<DistType>> = BTreeMap::new();
    for (v, l) in kept.iter() {
        groups.entry(*v).or_default().push(*l);
    }
    let n = kept.len() as f64;
    groups
        .values()
        .map(|labels| labels.len() as f64 / n * entropy(labels))
        .sum()
}

/// Information gain of a split: entropy of the applicable rows minus their
/// conditional entropy. Zero when every row is skipped.
pub fn split_gain(rows: &[(FeatureValue, DistType)]) -> f64 {
    let kept: Vec<(FeatureValue, DistType)> = rows
        .iter()
        .filter(|(v, _)| *v != FeatureValue::Na)
        .copied()
        .collect();
    if kept.is_empty() {
        return 0.0;
    }
    let labels: Vec<DistType> = kept.iter().map(|(_, l)| *l).collect();
    entropy(&labels) - cond_entropy(&kept)
}

/// The shared candidate stream: enumerated once per process.
struct StreamData {
    candidates: Vec<Candidate>,
    ps: Vec<PredExpr>,
    qs: Vec<PredExpr>,
}

fn stream_data() -> &'static StreamData {
    static STREAM: OnceLock<StreamData> = OnceLock::new();
    STREAM.get_or_init(|| StreamData {
        candidates: enumerate_candidates(DEFAULT_BUDGET, DEFAULT_SIZE_CAP),
        ps: p_stream(),
        qs: q_stream(),
    })
}

/// Candidate truth values per program, shared across sessions because both
/// the stream and the evaluation are deterministic. Keyed by candidate index
/// and a fingerprint of the program text.
fn candidate_cache() -> &'static Mutex<HashMap<(usize, u64), Vec<bool>>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64), Vec<bool>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn program_fingerprint(program: &Program) -> u64 {
    let mut hasher = std::collections::hash_map::DefaultHasher::new();
    program.to_text().hash(&mut hasher);
    hasher.finish()
}

/// Learning state: corpus, feature set, examples, and evaluation caches.
pub struct LearnSession {
    corpus: Corpus,
    features: Vec<Feature>,
    examples: Vec<Example>,
    budget: SynthBudget,
    fingerprints: Vec<u64>,
    feature_values: HashMap<(usize, usize), Vec<FeatureValue>>,
    adopted: HashSet<usize>,
    next_name: usize,
}

impl LearnSession {
    /// Starts a session with the five structural features installed.
    pub fn new(corpus: Corpus) -> LearnSession {
        LearnSession::with_budget(corpus, SynthBudget::default())
    }

    /// As [`new`](Self::new) with explicit synthesis limits.
    pub fn with_budget(corpus: Corpus, budget: SynthBudget) -> LearnSession {
        let features = vec![
            Feature {
                id: 0,
                name: "op_x".into(),
                kind: FeatureKind::OpSelf,
            },
            Feature {
                id: 1,
                name: "op_l".into(),
                kind: FeatureKind::OpLeft,
            },
            Feature {
                id: 2,
                name: "op_r".into(),
                kind: FeatureKind::OpRight,
            },
            Feature {
                id: 3,
                name: "type_l".into(),
                kind: FeatureKind::TypeLeft,
            },
            Feature {
                id: 4,
                name: "type_r".into(),
                kind: FeatureKind::TypeRight,
            },
        ];
        let mut examples = Vec::new();
        for (pi, p) in corpus.programs().iter().enumerate() {
            for node in 0..p.len() {
                examples.push(Example {
                    source: Source::Concrete { program: pi, node },
                    label: corpus.ext(pi)[node].project(),
                });
            }
        }
        let fingerprints = corpus.programs().iter().map(program_fingerprint).collect();
        LearnSession {
            corpus,
            features,
            examples,
            budget,
            fingerprints,
            feature_values: HashMap::new(),
            adopted: HashSet::new(),
            next_name: 0,
        }
    }

    /// The training corpus.
    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    /// Current feature set, structural features first.
    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    /// Current examples, concrete first, abstract in insertion order.
    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    /// Reorders examples; the learner's output does not depend on example
    /// order, which seeded runs exercise.
    pub fn permute_examples(&mut self, order: &[usize]) {
        assert_eq!(order.len(), self.examples.len());
        let old = std::mem::take(&mut self.examples);
        let mut taken: Vec<Option<Example>> = old.into_iter().map(Some).collect();
        self.examples = order
            .iter()
            .map(|&i| taken[i].take().expect("duplicate index in permutation"))
            .collect();
    }

    /// Appends an abstract example with the given feature values, labeled
    /// UKD; all other features read as not applicable.
    pub fn add_abstract(&mut self, values: &[(usize, FeatureValue)]) {
        let width = values.iter().map(|(f, _)| f + 1).max().unwrap_or(0);
        let mut row = vec![FeatureValue::Na; width];
        for (f, v) in values {
            row[*f] = *v;
        }
        self.examples.push(Example {
            source: Source::Abstract { values: row },
            label: DistType::Ukd,
        });
    }

    /// Value of a feature on an example.
    pub fn value(&mut self, example: usize, feature: usize) -> FeatureValue {
        match &self.examples[example].source {
            Source::Abstract { values } => values
                .get(feature)
                .copied()
                .unwrap_or(FeatureValue::Na),
            Source::Concrete { program, node } => {
                let (program, node) = (*program, *node);
                self.concrete_value(program, node, feature)
            }
        }
    }

    fn concrete_value(&mut self, program: usize, node: NodeId, feature: usize) -> FeatureValue {
        if let Some(col) = self.feature_values.get(&(feature, program)) {
            return col[node];
        }
        let col = self.feature_column(feature, program);
        let v = col[node];
        self.feature_values.insert((feature, program), col);
        v
    }

    fn feature_column(&self, feature: usize, program: usize) -> Vec<FeatureValue> {
        let p = &self.corpus.programs()[program];
        let child = |node: &Node, side: usize| -> Option<NodeId> {
            match node {
                Node::Input(_) => None,
                Node::Gate { op, args } => {
                    if side < op.arity() {
                        Some(args[side])
                    } else {
                        None
                    }
                }
            }
        };
        let op_value = |id: NodeId| match &p.nodes[id] {
            Node::Input(_) => FeatureValue::Leaf,
            Node::Gate { op, .. } => FeatureValue::Op(*op),
        };
        match &self.features[feature].kind {
            FeatureKind::OpSelf => (0..p.len()).map(op_value).collect(),
            FeatureKind::OpLeft => (0..p.len())
                .map(|id| {
                    child(&p.nodes[id], 0)
                        .map(op_value)
                        .unwrap_or(FeatureValue::Absent)
                })
                .collect(),
            FeatureKind::OpRight => (0..p.len())
                .map(|id| {
                    child(&p.nodes[id], 1)
                        .map(op_value)
                        .unwrap_or(FeatureValue::Absent)
                })
                .collect(),
            FeatureKind::TypeLeft => (0..p.len())
                .map(|id| {
                    child(&p.nodes[id], 0)
                        .map(|c| FeatureValue::Type(self.corpus.ext(program)[c]))
                        .unwrap_or(FeatureValue::Absent)
                })
                .collect(),
            FeatureKind::TypeRight => (0..p.len())
                .map(|id| {
                    child(&p.nodes[id], 1)
                        .map(|c| FeatureValue::Type(self.corpus.ext(program)[c]))
                        .unwrap_or(FeatureValue::Absent)
                })
                .collect(),
            FeatureKind::Synth(sf) => {
                let col = eval_feature_rules(&sf.rules, &sf.head, self.corpus.facts(program), p.len());
                col.into_iter().map(FeatureValue::Bool).collect()
            }
        }
    }

    /// Feature values paired with labels for a context.
    fn rows(&mut self, ctx: &[usize], feature: usize) -> Vec<(FeatureValue, DistType)> {
        ctx.iter()
            .map(|&e| (self.value(e, feature), self.examples[e].label))
            .collect()
    }

    /// Information gain of one feature on a context.
    pub fn gain(&mut self, ctx: &[usize], feature: usize) -> f64 {
        let rows = self.rows(ctx, feature);
        split_gain(&rows)
    }

    /// Learns a tree from all current examples.
    pub fn learn(&mut self) -> Tree {
        let all: Vec<usize> = (0..self.examples.len()).collect();
        let mut used = HashSet::new();
        self.dtl(&all, &mut used)
    }

    fn dtl(&mut self, ctx: &[usize], used: &mut HashSet<usize>) -> Tree {
        if ctx.is_empty() {
            return Tree::Leaf(DistType::Ukd);
        }
        let first = self.examples[ctx[0]].label;
        if ctx.iter().all(|&e| self.examples[e].label == first) {
            return Tree::Leaf(first);
        }
        let mut best: Option<(usize, f64)> = None;
        for f in 0..self.features.len() {
            if used.contains(&f) {
                continue;
            }
            let g = self.gain(ctx, f);
            if g > GAIN_EPS && best.map_or(true, |(_, bg)| g > bg) {
                best = Some((f, g));
            }
        }
        let chosen = match best {
            Some((f, _)) => Some(f),
            None => self.feature_syn(ctx),
        };
        let Some(feature) = chosen else {
            return Tree::Leaf(DistType::Ukd);
        };
        let mut groups: BTreeMap<FeatureValue, Vec<usize>> = BTreeMap::new();
        for &e in ctx {
            let v = self.value(e, feature);
            if v != FeatureValue::Na {
                groups.entry(v).or_default().push(e);
            }
        }
        used.insert(feature);
        let branches = groups
            .into_iter()
            .map(|(v, sub)| (v, self.dtl(&sub, used)))
            .collect();
        used.remove(&feature);
        Tree::Split { feature, branches }
    }

    /// Scans the candidate stream for the first feature with positive gain
    /// on the context, adopts it into the feature set, and returns its id.
    /// Returns nothing when the context has a single label, the budget runs
    /// out, or no candidate splits the examples.
    pub fn feature_syn(&mut self, ctx: &[usize]) -> Option<usize> {
        let mut labels: Vec<DistType> = ctx.iter().map(|&e| self.examples[e].label).collect();
        labels.sort();
        labels.dedup();
        if labels.len() < 2 {
            return None;
        }
        let stream = stream_data();
        let deadline = Instant::now() + self.budget.time_limit;
        let concrete: Vec<(usize, usize, DistType)> = ctx
            .iter()
            .filter_map(|&e| match &self.examples[e].source {
                Source::Concrete { program, node } => {
                    Some((*program, *node, self.examples[e].label))
                }
                Source::Abstract { .. } => None,
            })
            .collect();
        let n_abstract = ctx.len() - concrete.len();
        if concrete.is_empty() {
            return None;
        }
        let mut programs: Vec<usize> = concrete.iter().map(|(p, _, _)| *p).collect();
        programs.sort();
        programs.dedup();
        let limit = stream.candidates.len().min(self.budget.max_candidates);
        let mut rows: Vec<(FeatureValue, DistType)> = Vec::with_capacity(ctx.len());
        for idx in 0..limit {
            if Instant::now() >= deadline {
                return None;
            }
            if self.adopted.contains(&idx) {
                continue;
            }
            let cand = &stream.candidates[idx];
            let mut materialized: Option<Vec<Rule>> = None;
            for &p in &programs {
                let key = (idx, self.fingerprints[p]);
                let mut cache = candidate_cache().lock().unwrap();
                if !cache.contains_key(&key) {
                    let rules = materialized.get_or_insert_with(|| {
                        pad_unsafe(&materialize_with(cand, &stream.ps, &stream.qs))
                    });
                    let col = eval_feature_rules(
                        rules,
                        cand.head_pred(),
                        self.corpus.facts(p),
                        self.corpus.programs()[p].len(),
                    );
                    cache.insert(key, col);
                }
            }
            rows.clear();
            {
                let cache = candidate_cache().lock().unwrap();
                for (p, node, label) in &concrete {
                    let col = &cache[&(idx, self.fingerprints[*p])];
                    rows.push((FeatureValue::Bool(col[*node]), *label));
                }
            }
            for _ in 0..n_abstract {
                rows.push((FeatureValue::Na, DistType::Ukd));
            }
            if split_gain(&rows) > GAIN_EPS {
                return Some(self.adopt(idx));
            }
        }
        None
    }

    /// Installs a candidate as a feature with fresh predicate names and
    /// returns the new feature id.
    fn adopt(&mut self, idx: usize) -> usize {
        let stream = stream_data();
        let cand = &stream.candidates[idx];
        let raw = materialize_with(cand, &stream.ps, &stream.qs);
        let serial = self.next_name;
        self.next_name += 1;
        let base = match cand.schema() {
            Schema::F => format!("f{serial}"),
            Schema::G => format!("g{serial}"),
            Schema::H => format!("h{serial}"),
        };
        let mut rules = raw;
        for (from, to) in [
            ("f", format!("{base}f")),
            ("g", format!("{base}g")),
            ("ga", format!("{base}a")),
            ("gb", format!("{base}b")),
        ] {
            if cand.head_pred() != from {
                rules = rename_pred(&rules, from, &to);
            }
        }
        match cand.schema() {
            Schema::F | Schema::H => {
                rules = rename_pred(&rules, cand.head_pred(), &base);
            }
            Schema::G => {
                let pair = format!("{base}g");
                rules = rename_pred(&rules, "g", &pair);
                rules.push(Rule::new(
                    Atom::new(&base, vec![Term::Var("X".into())]),
                    vec![Literal::pos(Atom::new(
                        &pair,
                        vec![Term::Var("X".into()), Term::Var("Y".into())],
                    ))],
                ));
            }
        }
        let rules = pad_unsafe(&rules);
        let id = self.features.len();
        // Seed the feature's value cache from the candidate evaluations.
        {
            let cache = candidate_cache().lock().unwrap();
            for (pi, fp) in self.fingerprints.iter().enumerate() {
                if let Some(col) = cache.get(&(idx, *fp)) {
                    self.feature_values.insert(
                        (id, pi),
                        col.iter().map(|&b| FeatureValue::Bool(b)).collect(),
                    );
                }
            }
        }
        self.adopted.insert(idx);
        self.features.push(Feature {
            id,
            name: base.clone(),
            kind: FeatureKind::Synth(SynthFeature { head: base, rules }),
        });
        id
    }

    /// Type the tree assigns to a program node, using oracle types for
    /// child-type features; nodes reaching no branch fall back to UKD.
    pub fn predict(&mut self, tree: &Tree, program: usize, node: NodeId) -> DistType {
        let mut cur = tree;
        loop {
            match cur {
                Tree::Leaf(t) => return *t,
                Tree::Split { feature, branches } => {
                    let v = self.concrete_value(program, node, *feature);
                    match branches.iter().find(|(bv, _)| *bv == v) {
                        Some((_, sub)) => cur = sub,
                        None => return DistType::Ukd,
                    }
                }
            }
        }
    }

    /// Exports a tree as a rule file: definitions of the synthesized
    /// features the rules mention, then the rules themselves.
    pub fn rule_file(&self, tree: &Tree) -> RuleFile {
        let rules = tree_to_rules(tree, &self.features);
        let mentioned: HashSet<&str> = rules
            .iter()
            .flat_map(|r| r.body.iter())
            .map(|l| l.atom.pred.as_str())
            .collect();
        let features = self
            .features
            .iter()
            .filter_map(|f| match &f.kind {
                FeatureKind::Synth(sf) if mentioned.contains(f.name.as_str()) => {
                    Some(NamedFeature {
                        name: f.name.clone(),
                        rules: sf.rules.clone(),
                    })
                }
                _ => None,
            })
            .collect();
        RuleFile { features, rules }
    }
}

/// Evaluates feature rules over base facts and returns per-node truth:
/// unary heads hold at a node directly, pair heads hold when any partner
/// exists.
pub(crate) fn eval_feature_rules(
    rules: &[Rule],
    head: &str,
    facts: &FactBase,
    n_nodes: usize,
) -> Vec<bool> {
    let out = evaluate(rules, facts, EvalMode::SemiNaive)
        .expect("feature programs are stratified by construction");
    let mut col = vec![false; n_nodes];
    if let Some(rel) = out.relation(head) {
        if rel.arity() == 1 {
            for (node, slot) in col.iter_mut().enumerate() {
                *slot = rel.contains(&[node as Const]);
            }
        } else {
            for t in rel.tuples() {
                if let Some(slot) = col.get_mut(t[0] as usize) {
                    *slot = true;
                }
            }
        }
    }
    col
}

/// Root-to-leaf paths of a tree: the feature conditions along each path and
/// the leaf's type.
pub fn tree_paths(tree: &Tree) -> Vec<(Vec<(usize, FeatureValue)>, DistType)> {
    fn walk(
        tree: &Tree,
        prefix: &mut Vec<(usize, FeatureValue)>,
        out: &mut Vec<(Vec<(usize, FeatureValue)>, DistType)>,
    ) {
        match tree {
            Tree::Leaf(t) => out.push((prefix.clone(), *t)),
            Tree::Split { feature, branches } => {
                for (value, sub) in branches {
                    prefix.push((*feature, *value));
                    walk(sub, prefix, out);
                    prefix.pop();
                }
            }
        }
    }
    let mut out = Vec::new();
    walk(tree, &mut Vec::new(), &mut out);
    out
}

/// Translates one path into a rule, or nothing for UKD leaves (UKD is the
/// default type and needs no rule).
///
/// The node is `X`, its children are `L` and `R`. Operator conditions become
/// operator atoms, child-type conditions become `rud`/`sid`/input-class
/// atoms, and synthesized-feature conditions become positive or negated
/// feature literals. A child typed UKD contributes only the child edge: no
/// body atom can assert UKD, so the condition weakens to "has that child"
/// and the prover vets the stronger claim.
pub fn path_to_rule(
    path: &[(usize, FeatureValue)],
    label: DistType,
    features: &[Feature],
) -> Option<Rule> {
    if label == DistType::Ukd {
        return None;
    }
    let var = |n: &str| Term::Var(n.to_string());
    let mut body: Vec<Literal> = Vec::new();
    let push = |lit: Literal, body: &mut Vec<Literal>| {
        if !body.contains(&lit) {
            body.push(lit);
        }
    };
    for (fid, value) in path {
        let feature = &features[*fid];
        match (&feature.kind, value) {
            (FeatureKind::OpSelf, FeatureValue::Leaf) => {
                push(Literal::pos(Atom::new("leaf", vec![var("X")])), &mut body);
            }
            (FeatureKind::OpSelf, FeatureValue::Op(op)) => {
                push(
                    Literal::pos(Atom::new(op.keyword(), vec![var("X")])),
                    &mut body,
                );
            }
            (FeatureKind::OpLeft | FeatureKind::TypeLeft, FeatureValue::Absent) => {
                push(Literal::neg(Atom::new("has_lc", vec![var("X")])), &mut body);
            }
            (FeatureKind::OpRight | FeatureKind::TypeRight, FeatureValue::Absent) => {
                push(Literal::neg(Atom::new("has_rc", vec![var("X")])), &mut body);
            }
            (FeatureKind::OpLeft, v) => {
                push(
                    Literal::pos(Atom::new("lc", vec![var("X"), var("L")])),
                    &mut body,
                );
                match v {
                    FeatureValue::Leaf => {
                        push(Literal::pos(Atom::new("leaf", vec![var("L")])), &mut body)
                    }
                    FeatureValue::Op(op) => push(
                        Literal::pos(Atom::new(op.keyword(), vec![var("L")])),
                        &mut body,
                    ),
                    _ => unreachable!("operator feature with non-operator value"),
                }
            }
            (FeatureKind::OpRight, v) => {
                push(
                    Literal::pos(Atom::new("rc", vec![var("X"), var("R")])),
                    &mut body,
                );
                match v {
                    FeatureValue::Leaf => {
                        push(Literal::pos(Atom::new("leaf", vec![var("R")])), &mut body)
                    }
                    FeatureValue::Op(op) => push(
                        Literal::pos(Atom::new(op.keyword(), vec![var("R")])),
                        &mut body,
                    ),
                    _ => unreachable!("operator feature with non-operator value"),
                }
            }
            (FeatureKind::TypeLeft, FeatureValue::Type(t)) => {
                push(
                    Literal::pos(Atom::new("lc", vec![var("X"), var("L")])),
                    &mut body,
                );
                if let Some(pred) = type_atom(*t) {
                    push(Literal::pos(Atom::new(pred, vec![var("L")])), &mut body);
                }
            }
            (FeatureKind::TypeRight, FeatureValue::Type(t)) => {
                push(
                    Literal::pos(Atom::new("rc", vec![var("X"), var("R")])),
                    &mut body,
                );
                if let Some(pred) = type_atom(*t) {
                    push(Literal::pos(Atom::new(pred, vec![var("R")])), &mut body);
                }
            }
            (FeatureKind::Synth(_), FeatureValue::Bool(true)) => {
                push(
                    Literal::pos(Atom::new(&feature.name, vec![var("X")])),
                    &mut body,
                );
            }
            (FeatureKind::Synth(_), FeatureValue::Bool(false)) => {
                push(
                    Literal::neg(Atom::new(&feature.name, vec![var("X")])),
                    &mut body,
                );
            }
            (kind, v) => unreachable!("feature {kind:?} cannot take value {v:?}"),
        }
    }
    let rule = Rule::new(Atom::new(label.keyword(), vec![var("X")]), body);
    Some(pad_unsafe(&[rule]).pop().unwrap())
}

fn type_atom(t: ExtType) -> Option<&'static str> {
    match t {
        ExtType::Ukd => None,
        ExtType::Sid => Some("sid"),
        ExtType::Rud => Some("rud"),
        ExtType::InRand => Some("inrand"),
        ExtType::InPub => Some("inpub"),
        ExtType::InKey => Some("inkey"),
    }
}

/// Translates every RUD and SID path of a tree into rules, deduplicated by
/// canonical form.
pub fn tree_to_rules(tree: &Tree, features: &[Feature]) -> Vec<Rule> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (path, label) in tree_paths(tree) {
        if let Some(rule) = path_to_rule(&path, label, features) {
            if seen.insert(rule.canonical()) {
                out.push(rule);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datalog::parse_rule;
    use crate::ir::parse_program;
    use DistType::{Rud, Sid, Ukd};

    fn corpus(sources: &[&str]) -> Corpus {
        Corpus::new(
            sources
                .iter()
                .map(|s| parse_program(s).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn entropy_reference_values() {
        assert!((entropy(&[Rud, Rud]) - 0.0).abs() < 1e-12);
        assert!((entropy(&[Rud, Ukd]) - 1.0).abs() < 1e-12);
        assert!((entropy(&[Rud, Rud, Ukd, Sid]) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn cond_entropy_reference_values() {
        let t = FeatureValue::Bool(true);
        let f = FeatureValue::Bool(false);
        let na = FeatureValue::Na;
        assert!((cond_entropy(&[(t, Rud), (f, Ukd)]) - 0.0).abs() < 1e-12);
        assert!((cond_entropy(&[(t, Rud), (t, Ukd)]) - 1.0).abs() < 1e-12);
        // A skipped row leaves the result exactly as if it were absent.
        let with_na = cond_entropy(&[(t, Rud), (f, Ukd), (na, Sid)]);
        let without = cond_entropy(&[(t, Rud), (f, Ukd)]);
        assert!((with_na - without).abs() < 1e-12);
        // All rows skipped: no gain by convention.
        let all_na = cond_entropy(&[(na, Rud), (na, Ukd)]);
        assert!((all_na - entropy(&[Rud, Ukd])).abs() < 1e-12);
        assert!(split_gain(&[(na, Rud), (na, Ukd)]).abs() < 1e-12);
    }

    #[test]
    fn skipped_rows_cannot_carry_gain() {
        // A pure concrete context plus one abstract row that is only
        // applicable to some other feature: the renormalized gain is zero,
        // so the split is never taken on skipped evidence alone.
        let t = FeatureValue::Bool(true);
        let na = FeatureValue::Na;
        let gain = split_gain(&[(t, Rud), (t, Rud), (na, Ukd)]);
        assert!(gain.abs() < 1e-12);
    }

    #[test]
    fn abstract_row_reduces_gain_on_its_features() {
        let t = FeatureValue::Bool(true);
        let f = FeatureValue::Bool(false);
        let clean = split_gain(&[(t, Rud), (f, Ukd)]);
        let poisoned = split_gain(&[(t, Rud), (f, Ukd), (t, Ukd)]);
        assert!(clean > poisoned + 1e-9);
    }

    #[test]
    fn pure_context_learns_a_leaf() {
        let c = corpus(&["input r1 : rand\ninput r2 : rand\nt1 = xor(r1, r2)\n"]);
        let mut s = LearnSession::new(c);
        assert_eq!(s.learn(), Tree::Leaf(Rud));
    }

    #[test]
    fn operator_split_is_learned_first() {
        let c = corpus(&[
            "input r1 : rand\ninput r2 : rand\nt1 = xor(r1, r2)\nt2 = and(r1, r2)\n",
        ]);
        let mut s = LearnSession::new(c);
        let tree = s.learn();
        match &tree {
            Tree::Split { feature, branches } => {
                assert_eq!(*feature, 0, "expected a split on the node operator");
                for (v, sub) in branches {
                    let want = match v {
                        FeatureValue::Leaf => Rud,
                        FeatureValue::Op(Operator::Xor) => Rud,
                        FeatureValue::Op(Operator::And) => Sid,
                        other => panic!("unexpected branch {other:?}"),
                    };
                    assert_eq!(sub, &Tree::Leaf(want));
                }
            }
            other => panic!("expected a split, got {other:?}"),
        }
        // Every concrete example is classified consistently.
        for e in 0..s.examples().len() {
            let Source::Concrete { program, node } = s.examples()[e].source else {
                unreachable!()
            };
            let label = s.examples()[e].label;
            assert_eq!(s.predict(&tree, program, node), label);
        }
    }

    #[test]
    fn leaf_classes_are_separated_by_synthesis() {
        let c = corpus(&["input k1 : key\ninput p1 : pub\ninput r1 : rand\n"]);
        let mut s = LearnSession::new(c);
        let tree = s.learn();
        // Two input-class tests are synthesized: keys first (the candidate
        // stream is ordered by rule text), then public inputs.
        assert_eq!(s.features().len(), 7);
        let f0 = &s.features()[5];
        let f1 = &s.features()[6];
        assert_eq!(f0.name, "f0");
        assert_eq!(f1.name, "f1");
        let FeatureKind::Synth(sf0) = &f0.kind else {
            panic!("expected synthesized feature")
        };
        assert_eq!(sf0.rules[0].to_string(), "f0(X) :- inkey(X).");
        let rules = tree_to_rules(&tree, s.features());
        let texts: Vec<String> = rules.iter().map(|r| r.canonical()).collect();
        // The positive f1 atom already binds X, so no node(X) pad appears.
        assert!(texts.contains(&parse_rule("sid(X) :- f1(X), not f0(X).").unwrap().canonical()), "{texts:?}");
        assert!(texts.contains(
            &parse_rule("rud(X) :- not f0(X), not f1(X), node(X).").unwrap().canonical()
        ));
        // The rule file names exactly the mentioned features.
        let file = s.rule_file(&tree);
        assert_eq!(file.features.len(), 2);
        assert_eq!(file.features[0].name, "f0");
    }

    #[test]
    fn counterexample_blocks_relearning() {
        let c = corpus(&["input r1 : rand\ninput k1 : key\n"]);
        let mut s = LearnSession::new(c);
        let tree = s.learn();
        let rules = tree_to_rules(&tree, s.features());
        assert_eq!(rules.len(), 1);
        let rud_rule = rules[0].canonical();
        // Poison the rule's path: its single condition was f0 = false.
        let f0 = s.features().iter().find(|f| f.name == "f0").unwrap().id;
        s.add_abstract(&[(f0, FeatureValue::Bool(false))]);
        let tree2 = s.learn();
        let rules2 = tree_to_rules(&tree2, s.features());
        assert!(
            rules2.iter().all(|r| r.canonical() != rud_rule),
            "rejected rule was learned again: {rules2:?}"
        );
    }

    #[test]
    fn depth_one_tree_translates_to_single_rule() {
        let features = vec![Feature {
            id: 0,
            name: "f".into(),
            kind: FeatureKind::Synth(SynthFeature {
                head: "f".into(),
                rules: vec![],
            }),
        }];
        let tree = Tree::Split {
            feature: 0,
            branches: vec![
                (FeatureValue::Bool(true), Tree::Leaf(Rud)),
                (FeatureValue::Bool(false), Tree::Leaf(Ukd)),
            ],
        };
        let rules = tree_to_rules(&tree, &features);
        assert_eq!(rules.len(), 1);
        assert_eq!(rules[0].to_string(), "rud(X) :- f(X).");
    }

    #[test]
    fn child_conditions_translate_to_edge_atoms() {
        let features = base_features_plus_f();
        // Node is XOR, right child is XOR, left child is RUD, feature false.
        let path = vec![
            (0, FeatureValue::Op(Operator::Xor)),
            (2, FeatureValue::Op(Operator::Xor)),
            (3, FeatureValue::Type(ExtType::Rud)),
            (5, FeatureValue::Bool(false)),
        ];
        let rule = path_to_rule(&path, Rud, &features).unwrap();
        let want =
            parse_rule("rud(X) :- xor(X), rc(X,R), xor(R), lc(X,L), rud(L), not f(X).").unwrap();
        assert_eq!(rule.canonical(), want.canonical());
    }

    #[test]
    fn input_class_and_ukd_conditions() {
        let features = base_features_plus_f();
        let path = vec![
            (0, FeatureValue::Op(Operator::Xor)),
            (3, FeatureValue::Type(ExtType::InRand)),
        ];
        let rule = path_to_rule(&path, Rud, &features).unwrap();
        assert_eq!(
            rule.canonical(),
            parse_rule("rud(X) :- xor(X), lc(X,L), inrand(L).").unwrap().canonical()
        );
        // UKD child types weaken to the bare edge.
        let path = vec![
            (0, FeatureValue::Op(Operator::Xor)),
            (4, FeatureValue::Type(ExtType::Ukd)),
        ];
        let rule = path_to_rule(&path, Sid, &features).unwrap();
        assert_eq!(
            rule.canonical(),
            parse_rule("sid(X) :- xor(X), rc(X,R).").unwrap().canonical()
        );
        // Absent children negate the edge marker; the head variable then
        // needs the universe guard.
        let path = vec![(1, FeatureValue::Absent)];
        let rule = path_to_rule(&path, Sid, &features).unwrap();
        assert_eq!(
            rule.canonical(),
            parse_rule("sid(X) :- not has_lc(X), node(X).").unwrap().canonical()
        );
        // UKD leaves make no rule.
        assert!(path_to_rule(&[(0, FeatureValue::Leaf)], Ukd, &features).is_none());
    }

    fn base_features_plus_f() -> Vec<Feature> {
        let mut features = LearnSession::new(Corpus::new(vec![]).unwrap())
            .features()
            .to_vec();
        features.push(Feature {
            id: 5,
            name: "f".into(),
            kind: FeatureKind::Synth(SynthFeature {
                head: "f".into(),
                rules: vec![],
            }),
        });
        features
    }

    #[test]
    fn tree_text_round_trips() {
        let features = base_features_plus_f();
        let tree = Tree::Split {
            feature: 0,
            branches: vec![
                (FeatureValue::Leaf, Tree::Leaf(Sid)),
                (
                    FeatureValue::Op(Operator::Xor),
                    Tree::Split {
                        feature: 5,
                        branches: vec![
                            (FeatureValue::Bool(false), Tree::Leaf(Rud)),
                            (FeatureValue::Bool(true), Tree::Leaf(Ukd)),
                        ],
                    },
                ),
                (FeatureValue::Absent, Tree::Leaf(Ukd)),
            ],
        };
        let text = tree.to_text(&features);
        let back = parse_tree(&text, &features).unwrap();
        assert_eq!(back, tree);
        assert!(parse_tree("split nosuch { }", &features).is_err());
        assert!(parse_tree("leaf banana", &features).is_err());
    }

    #[test]
    fn example_order_does_not_change_the_tree() {
        let c = corpus(&[
            "input r1 : rand\ninput r2 : rand\nt1 = xor(r1, r2)\nt2 = and(r1, r2)\n",
        ]);
        let mut a = LearnSession::new(c.clone());
        let tree_a = a.learn();
        let mut b = LearnSession::new(c);
        let n = b.examples().len();
        let order: Vec<usize> = (0..n).rev().collect();
        b.permute_examples(&order);
        let tree_b = b.learn();
        assert_eq!(tree_a, tree_b);
    }

    #[test]
    fn pair_valued_features_project_through_a_unary_head() {
        use crate::datalog::synth::Family;
        let c = corpus(&["input r1 : rand\nt1 = not(r1)\n"]);
        let mut s = LearnSession::new(c);
        // Adopt a plain pair-reachability candidate directly.
        let idx = stream_data()
            .candidates
            .iter()
            .position(|cand| {
                cand.family == Family::G1
                    && stream_data().qs[cand.q as usize].dnf().len() == 1
                    && materialize_with(cand, &stream_data().ps, &stream_data().qs)[0]
                        .to_string()
                        .contains("lc(X,Y)")
            })
            .unwrap();
        let fid = s.adopt(idx);
        let feature = &s.features()[fid];
        assert_eq!(feature.name, "g0");
        let FeatureKind::Synth(sf) = &feature.kind else {
            panic!("expected synthesized feature")
        };
        // The pair predicate keeps its own name; a projection rule exposes
        // it through the unary head.
        assert!(sf.rules.iter().any(|r| r.head.pred == "g0g"));
        let head_rule = sf.rules.iter().find(|r| r.head.pred == "g0").unwrap();
        assert_eq!(head_rule.head.args.len(), 1);
        assert_eq!(head_rule.to_string(), "g0(X) :- g0g(X,Y).");
        // t1 has a left child, r1 does not.
        let col = s.feature_column(fid, 0);
        assert_eq!(
            col,
            vec![FeatureValue::Bool(false), FeatureValue::Bool(true)]
        );
    }

    #[test]
    fn shared_leaf_detector_adopts_with_renamed_internals() {
        let c = corpus(&[
            "input r1 : rand\ninput k1 : key\ninput k2 : key\n\
             a = xor(r1, k1)\nb = xor(r1, k2)\nt = xor(a, b)\n",
        ]);
        let mut s = LearnSession::new(c);
        let target = crate::datalog::synth::shared_rand_candidate();
        let idx = stream_data()
            .candidates
            .iter()
            .position(|cand| *cand == target)
            .unwrap();
        let fid = s.adopt(idx);
        assert_eq!(s.features()[fid].name, "h0");
        let FeatureKind::Synth(sf) = &s.features()[fid].kind else {
            panic!("expected synthesized feature")
        };
        assert!(sf.rules.iter().all(|r| r.head.pred.starts_with("h0")));
        // t's children both reach r1, so the detector fires at t and only t.
        let col = s.feature_column(fid, 0);
        let t = s.corpus().programs()[0].id_of("t").unwrap();
        for (node, v) in col.iter().enumerate() {
            let want = FeatureValue::Bool(node == t);
            assert_eq!(*v, want, "node {node}");
        }
    }

    #[test]
    fn chi_two_row_context_synthesizes_the_shared_random_join() {
        // The reference two-example context: the healthy masked output b4
        // against the flawed remask n1. Both are xors of a RUD left and a
        // SID right child, so no structural feature separates them; the
        // first stream candidate that does is the shared-random join.
        let c = Corpus::new(vec![crate::fixtures::chi()]).unwrap();
        let mut s = LearnSession::new(c);
        let p = &s.corpus().programs()[0];
        let b4 = p.id_of("b4").unwrap();
        let n1 = p.id_of("n1").unwrap();
        assert_eq!(s.examples()[b4].label, Rud);
        assert_eq!(s.examples()[n1].label, Ukd);

        let fid = s.feature_syn(&[b4, n1]).expect("a candidate splits b4 from n1");
        let FeatureKind::Synth(sf) = &s.features()[fid].kind else {
            panic!("expected synthesized feature")
        };
        let texts: Vec<String> = sf.rules.iter().map(|r| r.to_string()).collect();
        assert_eq!(
            texts,
            vec![
                "h0g(X,Y) :- inrand(X), eq(X,Y).",
                "h0g(X,Y) :- lc(X,Z), h0g(Z,Y).",
                "h0g(X,Y) :- rc(X,Z), h0g(Z,Y).",
                "h0(X) :- lc(X,L), rc(X,R), h0g(L,Y), h0g(R,Y).",
            ]
        );
        let col = s.feature_column(fid, 0);
        assert_eq!(col[b4], FeatureValue::Bool(false));
        assert_eq!(col[n1], FeatureValue::Bool(true));

        // The random-cone test sits earlier in the stream but fires on
        // both nodes, so it carries no gain here and is passed over.
        let f4 = stream_data()
            .candidates
            .iter()
            .position(|cand| {
                cand.family == crate::datalog::synth::Family::F4 && cand.p == 6
            })
            .unwrap();
        let f4id = s.adopt(f4);
        let col = s.feature_column(f4id, 0);
        assert_eq!(col[b4], FeatureValue::Bool(true));
        assert_eq!(col[n1], FeatureValue::Bool(true));
    }
}
