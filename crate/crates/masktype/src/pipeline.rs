//! The learn-check-refine loop, the analyzer runtime, and reporting.
//!
//! [`run_loop`] drives the whole system: learn a decision tree from
//! oracle-labeled programs, turn its RUD and SID paths into rules, check
//! each new rule, keep the proved ones, and feed the counterexamples of
//! the others back into training. The loop ends when an iteration checks
//! out clean, and the proved rules never leave the analyzer, so each
//! round's output contains the last.
//!
//! [`type_nodes`] is the analyzer runtime: one stratified fixpoint over a
//! program's structural facts, then a per-node readout with RUD preferred
//! over SID and UKD as the default. Everything the analyzer claims was
//! proved sound, so a UKD readout is the only possible error direction.

use std::collections::HashSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::datalog::{
    evaluate, Const, DatalogError, EvalMode, FactBase, NamedFeature, Rule, RuleFile,
};
use crate::ir::Program;
use crate::learner::{
    path_to_rule, tree_paths, Corpus, FeatureKind, FeatureValue, LearnSession, SynthBudget,
};
use crate::oracle::{label_program, DistType, OracleError};
use crate::prover::base::FeatureInfo;
use crate::prover::{check_containment, ProverConfig, Verdict};

/// Failures surfaced by loop setup or analysis.
#[derive(Debug, Error)]
pub enum PipelineError {
    /// Truth-table construction failed.
    #[error(transparent)]
    Oracle(#[from] OracleError),
    /// A rule set could not be evaluated.
    #[error(transparent)]
    Datalog(#[from] DatalogError),
    /// A `label` annotation disagrees with the oracle.
    #[error("node {node} is annotated {annotated} but the oracle computed {computed}")]
    LabelMismatch {
        /// Offending node name.
        node: String,
        /// Annotation from the source text.
        annotated: &'static str,
        /// Exact type per the oracle.
        computed: &'static str,
    },
}

/// True when `claimed` asserts more than `reference` supports. RUD claims
/// need RUD; SID claims also accept RUD, which implies SID; UKD claims
/// nothing.
pub fn over_claims(claimed: DistType, reference: DistType) -> bool {
    match claimed {
        DistType::Rud => reference != DistType::Rud,
        DistType::Sid => reference == DistType::Ukd,
        DistType::Ukd => false,
    }
}

/// Types every node of a program with a verified rule set: evaluate the
/// features and typing rules to fixpoint, then read each node as RUD if
/// derivable, else SID if derivable, else UKD.
pub fn type_nodes(rules: &RuleFile, program: &Program) -> Result<Vec<DistType>, DatalogError> {
    let base = FactBase::from_program(program);
    let derived = evaluate(&rules.all_rules(), &base, EvalMode::SemiNaive)?;
    Ok((0..program.len())
        .map(|id| {
            let id = id as Const;
            if derived.holds("rud", &[id]) {
                DistType::Rud
            } else if derived.holds("sid", &[id]) {
                DistType::Sid
            } else {
                DistType::Ukd
            }
        })
        .collect())
}

/// One node's verdict in a report.
#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct NodeReport {
    /// Source-level node name.
    pub name: String,
    /// Inferred type keyword.
    #[serde(rename = "type")]
    pub node_type: String,
}

/// Node totals per type.
#[derive(Debug, Clone, Copy, Serialize, PartialEq, Eq)]
pub struct Counts {
    /// Nodes left at the conservative default.
    pub ukd: usize,
    /// Nodes typed secret-independent.
    pub sid: usize,
    /// Nodes typed uniformly random.
    pub rud: usize,
}

/// Analysis result for one program.
#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct Report {
    /// Program name (usually its file path).
    pub program: String,
    /// Per-node verdicts in definition order.
    pub nodes: Vec<NodeReport>,
    /// Verdict totals.
    pub counts: Counts,
    /// Wall-clock analysis time.
    pub millis: u64,
}

impl Report {
    /// Pretty-printed JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// Tab-separated `name<TAB>type` lines followed by totals.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            out.push_str(&n.name);
            out.push('\t');
            out.push_str(&n.node_type);
            out.push('\n');
        }
        out.push_str(&format!(
            "counts\tukd={}\tsid={}\trud={}\n",
            self.counts.ukd, self.counts.sid, self.counts.rud
        ));
        out.push_str(&format!("millis\t{}\n", self.millis));
        out
    }
}

/// Builds a report from per-node types computed elsewhere.
pub fn report_from_types(program: &Program, name: &str, types: &[DistType], millis: u64) -> Report {
    let mut counts = Counts {
        ukd: 0,
        sid: 0,
        rud: 0,
    };
    for t in types {
        match t {
            DistType::Ukd => counts.ukd += 1,
            DistType::Sid => counts.sid += 1,
            DistType::Rud => counts.rud += 1,
        }
    }
    Report {
        program: name.to_string(),
        nodes: (0..program.len())
            .map(|id| NodeReport {
                name: program.names[id].clone(),
                node_type: types[id].keyword().to_string(),
            })
            .collect(),
        counts,
        millis,
    }
}

/// Runs the analyzer on one program and packages a timed report.
pub fn analyze(
    rules: &RuleFile,
    program: &Program,
    name: &str,
) -> Result<(Report, Vec<DistType>), DatalogError> {
    let start = Instant::now();
    let types = type_nodes(rules, program)?;
    let millis = start.elapsed().as_millis() as u64;
    let report = report_from_types(program, name, &types, millis);
    Ok((report, types))
}

/// Knobs for the full loop.
#[derive(Debug, Clone)]
pub struct LoopConfig {
    /// Shuffles training example order; rule output is a function of the
    /// corpus and this seed only.
    pub seed: u64,
    /// Iteration cap; the loop usually converges much earlier.
    pub max_iterations: usize,
    /// Feature-synthesis limits.
    pub synth: SynthBudget,
    /// Per-rule checking budget.
    pub prover: ProverConfig,
}

impl Default for LoopConfig {
    fn default() -> LoopConfig {
        LoopConfig {
            seed: 0,
            max_iterations: 50,
            synth: SynthBudget::default(),
            prover: ProverConfig::default(),
        }
    }
}

/// Rule bookkeeping for one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IterationStats {
    /// Distinct RUD/SID rules the tree produced.
    pub learned: usize,
    /// Of those, rules proved sound (now or in an earlier iteration).
    pub verified: usize,
    /// Rules refuted by the checker.
    pub rejected: usize,
    /// Rules the checker could not decide; dropped like rejections.
    pub unknown: usize,
}

/// A tree path: the feature valuation that led to a leaf.
pub type PathValues = Vec<(usize, FeatureValue)>;

/// What the loop produced.
#[derive(Debug, Clone)]
pub struct LoopOutcome {
    /// The verified analyzer: referenced feature definitions plus proved
    /// typing rules, canonically ordered.
    pub rules: RuleFile,
    /// Per-iteration bookkeeping, first iteration first.
    pub iterations: Vec<IterationStats>,
    /// Whether the loop reached a fixpoint (an iteration that added no new
    /// counterexamples) before the iteration cap.
    pub converged: bool,
    /// Every RUD or SID rule the tree produced, with the iteration that
    /// produced it, its path, and its canonical text. One path never
    /// recurs after its rejection: the counterexample blocks it. The same
    /// text can recur through a different path (correlated features make
    /// distinct paths print alike), which costs one more counterexample
    /// but no prover call.
    pub learned_log: Vec<(usize, PathValues, String)>,
    /// Every undecided or refuted rule with the iteration that saw it, in
    /// canonical form.
    pub rejected_log: Vec<(usize, String)>,
}

/// Checks `label` annotations against the oracle before training.
fn check_annotations(program: &Program) -> Result<(), PipelineError> {
    if program.labels.is_empty() {
        return Ok(());
    }
    let actual = label_program(program)?;
    let mut ids: Vec<usize> = program.labels.keys().copied().collect();
    ids.sort_unstable();
    for id in ids {
        let annotated = program.labels[&id];
        if annotated != actual[id] {
            return Err(PipelineError::LabelMismatch {
                node: program.names[id].clone(),
                annotated: annotated.keyword(),
                computed: actual[id].keyword(),
            });
        }
    }
    Ok(())
}

/// Learns, checks, and refines until an iteration passes without a
/// rejection or the iteration cap is hit. Training labels come from the
/// oracle; `label` annotations must agree with it.
pub fn run_loop(programs: Vec<Program>, config: &LoopConfig) -> Result<LoopOutcome, PipelineError> {
    for p in &programs {
        check_annotations(p)?;
    }
    let corpus = Corpus::new(programs)?;
    let mut session = LearnSession::with_budget(corpus, config.synth.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..session.examples().len()).collect();
    order.shuffle(&mut rng);
    session.permute_examples(&order);

    let mut verified_rules: Vec<Rule> = Vec::new();
    let mut verified_keys: HashSet<String> = HashSet::new();
    let mut refuted_keys: HashSet<String> = HashSet::new();
    let mut refuted_paths: Vec<PathValues> = Vec::new();
    let mut iterations = Vec::new();
    let mut learned_log = Vec::new();
    let mut rejected_log = Vec::new();
    let mut converged = false;
    let mut serial = 0usize;

    for iteration in 0..config.max_iterations {
        let tree = session.learn();
        let features = session.features().to_vec();
        let infos: Vec<FeatureInfo> = features
            .iter()
            .filter_map(|f| match &f.kind {
                FeatureKind::Synth(sf) => Some(FeatureInfo::new(&f.name, sf.rules.clone())),
                _ => None,
            })
            .collect();

        let mut stats = IterationStats {
            learned: 0,
            verified: 0,
            rejected: 0,
            unknown: 0,
        };
        let mut new_counterexamples = 0usize;
        let mut seen = HashSet::new();
        for (path, label) in tree_paths(&tree) {
            let Some(rule) = path_to_rule(&path, label, &features) else {
                continue;
            };
            let key = rule.canonical();
            if !seen.insert(key.clone()) {
                continue;
            }
            stats.learned += 1;
            learned_log.push((iteration, path.clone(), key.clone()));
            if verified_keys.contains(&key) {
                stats.verified += 1;
                continue;
            }
            if refuted_keys.contains(&key) {
                // The same text resurfaced through a different path, which
                // correlated features permit. The text is known unsound, so
                // skip the prover, but block this path too.
                stats.rejected += 1;
                rejected_log.push((iteration, key));
                if !refuted_paths.contains(&path) {
                    session.add_abstract(&path);
                    refuted_paths.push(path);
                    new_counterexamples += 1;
                }
                continue;
            }
            let rule_id = format!("{}_{serial:04}", rule.head.pred);
            serial += 1;
            match check_containment(&rule, &path, &infos, &config.prover, &rule_id) {
                Verdict::Proved { .. } => {
                    verified_keys.insert(key);
                    verified_rules.push(rule);
                    stats.verified += 1;
                }
                Verdict::Rejected { .. } => {
                    refuted_keys.insert(key.clone());
                    rejected_log.push((iteration, key));
                    session.add_abstract(&path);
                    refuted_paths.push(path);
                    new_counterexamples += 1;
                    stats.rejected += 1;
                }
                Verdict::Unknown { .. } => {
                    refuted_keys.insert(key.clone());
                    rejected_log.push((iteration, key));
                    session.add_abstract(&path);
                    refuted_paths.push(path);
                    new_counterexamples += 1;
                    stats.unknown += 1;
                }
            }
        }
        iterations.push(stats);
        if new_counterexamples == 0 {
            converged = true;
            break;
        }
    }

    let mut rules = verified_rules;
    rules.sort_by(|a, b| a.canonical().cmp(&b.canonical()));
    let referenced: HashSet<&str> = rules
        .iter()
        .flat_map(|r| r.body.iter().map(|l| l.atom.pred.as_str()))
        .collect();
    let features: Vec<NamedFeature> = session
        .features()
        .iter()
        .filter_map(|f| match &f.kind {
            FeatureKind::Synth(sf) if referenced.contains(f.name.as_str()) => {
                Some(NamedFeature {
                    name: f.name.clone(),
                    rules: sf.rules.clone(),
                })
            }
            _ => None,
        })
        .collect();

    Ok(LoopOutcome {
        rules: RuleFile { features, rules },
        iterations,
        converged,
        learned_log,
        rejected_log,
    })
}
