//! Soundness checking for learned typing rules.
//!
//! A rule is sound when every node it fires on really has the distribution
//! type it claims, in every program, under the knowledge base's reading of
//! its child-type premises. The check runs in two stages:
//!
//! 1. A concrete base stage enumerates every tree-shaped context up to a
//!    small depth, including contexts that reuse one input in both
//!    operands, and evaluates the rule's premises and the knowledge base
//!    directly. Any hit is a real counterexample and rejects the rule.
//! 2. An inductive step stage encodes, at growing widths, the claim "no
//!    context satisfies the premises while the knowledge base withholds
//!    the conclusion" as a propositional formula over abstracted contexts
//!    (see [`encode`]). An unsatisfiable step at any width, combined with
//!    the clean base, proves the rule sound for programs of every size.
//!
//! Rejected rules yield an abstract counterexample: the feature valuation
//! of the tree path that produced the rule, relabeled UKD. Feeding it back
//! into training makes that path impure, so the next tree cannot emit the
//! same rule.

pub mod base;
pub mod encode;
pub mod kb;
pub mod premise;
pub mod sat;
pub mod shape;

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::datalog::{DatalogError, Rule, RuleFile};
use crate::enumerate::{for_each_program, EnumConfig};
use crate::ir::{random_program, Program, RandomConfig};
use crate::learner::{Example, FeatureValue, Source};
use crate::oracle::{label_program, DistType, OracleError};
use crate::pipeline::{over_claims, type_nodes};
use base::{base_violation, FeatureInfo};
use encode::{encode_step, StepEncoding};
use premise::parse_premises;
use sat::{solve, SatOutcome};

/// Failures of the checking machinery itself.
#[derive(Debug, Error)]
pub enum ProverError {
    /// The per-rule time budget ran out.
    #[error("time budget exhausted")]
    Timeout,
    /// The rule uses a form the checker does not model.
    #[error("unsupported rule form: {0}")]
    Unsupported(String),
    /// Truth-table construction failed.
    #[error(transparent)]
    Oracle(#[from] OracleError),
    /// A rule file could not be evaluated.
    #[error(transparent)]
    Rules(#[from] DatalogError),
}

/// Outcome of checking one rule.
#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    /// Sound: the base was clean up to `base_depth` and the induction step
    /// was unsatisfiable at width `k`.
    Proved {
        /// Depth of the exhaustive concrete stage.
        base_depth: usize,
        /// Width at which the step became unsatisfiable.
        k: usize,
    },
    /// Unsound or unprovable; retraining on the counterexample stops the
    /// learner from producing this rule again.
    Rejected {
        /// The rule's own premises relabeled UKD.
        counterexample: Example,
    },
    /// Neither proved nor refuted within the budget or the modeled forms.
    Unknown {
        /// What stopped the check.
        reason: String,
    },
}

/// Budget and output knobs for rule checking.
#[derive(Debug, Clone)]
pub struct ProverConfig {
    /// Exhaustive context depth of the concrete base stage.
    pub base_depth: usize,
    /// Largest induction width tried before giving up.
    pub k_max: usize,
    /// Wall-clock budget per rule across both stages.
    pub rule_budget: Duration,
    /// Directory for one SMT-LIB file per induction step, when set.
    pub emit_dir: Option<PathBuf>,
}

impl Default for ProverConfig {
    fn default() -> ProverConfig {
        ProverConfig {
            base_depth: 3,
            k_max: 5,
            rule_budget: Duration::from_secs(60),
            emit_dir: None,
        }
    }
}

/// Builds the abstract counterexample for a rejected rule: the feature
/// valuation of the path that produced it, relabeled UKD.
pub fn make_counterexample(path: &[(usize, FeatureValue)]) -> Example {
    let len = path.iter().map(|&(f, _)| f + 1).max().unwrap_or(0);
    let mut values = vec![FeatureValue::Na; len];
    for &(f, v) in path {
        values[f] = v;
    }
    Example {
        source: Source::Abstract { values },
        label: DistType::Ukd,
    }
}

/// Checks one rule against the knowledge base.
///
/// `path` is the tree path the rule came from, used to build the
/// counterexample on rejection. `rule_id` names emitted SMT files.
pub fn check_containment(
    rule: &Rule,
    path: &[(usize, FeatureValue)],
    features: &[FeatureInfo],
    config: &ProverConfig,
    rule_id: &str,
) -> Verdict {
    let deadline = Instant::now() + config.rule_budget;
    let names: Vec<String> = features.iter().map(|f| f.name.clone()).collect();
    let premises = match parse_premises(rule, &names) {
        Ok(p) => p,
        Err(reason) => return Verdict::Unknown { reason },
    };

    match base_violation(&premises, features, config.base_depth, deadline) {
        Ok(None) => {}
        Ok(Some(_witness)) => {
            return Verdict::Rejected {
                counterexample: make_counterexample(path),
            };
        }
        Err(e) => {
            return Verdict::Unknown {
                reason: format!("base stage: {e}"),
            };
        }
    }

    for k in 1..=config.k_max {
        let enc = encode_step(&premises, features, k, config.base_depth);
        if let Some(dir) = &config.emit_dir {
            if let Err(e) = emit_smtlib(&enc, dir, rule_id, k) {
                return Verdict::Unknown {
                    reason: format!("cannot emit SMT file: {e}"),
                };
            }
        }
        match solve(&enc.formula, Some(deadline)) {
            SatOutcome::Unsat => {
                return Verdict::Proved {
                    base_depth: config.base_depth,
                    k,
                };
            }
            SatOutcome::Sat(_) => continue,
            SatOutcome::TimedOut => {
                return Verdict::Unknown {
                    reason: format!("time budget exhausted at width {k}"),
                };
            }
        }
    }
    Verdict::Rejected {
        counterexample: make_counterexample(path),
    }
}

/// Writes one induction step as an SMT-LIB file `<rule_id>_k<k>.smt2` whose
/// `check-sat` answer matches the built-in solver on the same step.
pub fn emit_smtlib(
    enc: &StepEncoding,
    dir: &Path,
    rule_id: &str,
    k: usize,
) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut text = String::new();
    text.push_str("(set-logic QF_UF)\n");
    for var in enc.formula.vars() {
        let _ = writeln!(text, "(declare-const {} Bool)", enc.pool.name(var));
    }
    let _ = writeln!(text, "(assert {})", enc.formula.to_smtlib(&enc.pool));
    text.push_str("(check-sat)\n");
    let path = dir.join(format!("{rule_id}_k{k}.smt2"));
    fs::write(&path, text)?;
    Ok(path)
}

/// A typing produced by the rules that the exact oracle contradicts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SoundnessViolation {
    /// Offending program in source form.
    pub program: String,
    /// Node the rules mistyped.
    pub node: String,
    /// Type the rules assigned.
    pub claimed: DistType,
    /// Type the oracle computed.
    pub actual: DistType,
}

fn first_violation(
    rules: &RuleFile,
    program: &Program,
) -> Result<Option<SoundnessViolation>, ProverError> {
    let claimed = type_nodes(rules, program)?;
    let actual = label_program(program)?;
    for id in 0..program.nodes.len() {
        if over_claims(claimed[id], actual[id]) {
            return Ok(Some(SoundnessViolation {
                program: program.to_text(),
                node: program.names[id].clone(),
                claimed: claimed[id],
                actual: actual[id],
            }));
        }
    }
    Ok(None)
}

/// Cross-checks a rule file against the exact oracle: exhaustively on all
/// small programs up to `max_gates` gates, then on `samples` random
/// programs derived from `seed`. Returns the first mistyped node found.
pub fn bounded_oracle_check(
    rules: &RuleFile,
    max_gates: usize,
    samples: usize,
    seed: u64,
) -> Result<Option<SoundnessViolation>, ProverError> {
    let cfg = EnumConfig {
        max_gates: max_gates.min(3),
        ..EnumConfig::default()
    };
    let mut found = None;
    let mut first_err = None;
    for_each_program(&cfg, |p| {
        if found.is_some() || first_err.is_some() {
            return;
        }
        match first_violation(rules, p) {
            Ok(Some(v)) => found = Some(v),
            Ok(None) => {}
            Err(e) => first_err = Some(e),
        }
    });
    if let Some(e) = first_err {
        return Err(e);
    }
    if found.is_some() {
        return Ok(found);
    }

    let random_cfg = RandomConfig {
        n_pub: 2,
        n_key: 3,
        n_rand: 4,
        n_gates: 12,
        max_depth: 6,
    };
    for i in 0..samples {
        let program = random_program(seed.wrapping_add(i as u64), random_cfg);
        if let Some(v) = first_violation(rules, &program)? {
            return Ok(Some(v));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datalog::parse_rule;
    use crate::datalog::parse_rule_file;
    use crate::oracle::ExtType;

    fn guarded_features() -> Vec<FeatureInfo> {
        use crate::datalog::pad_unsafe;
        use crate::datalog::synth::{
            materialize, rename_pred, shared_key_candidate, shared_rand_candidate,
        };
        let mut out = Vec::new();
        for (i, cand) in [shared_rand_candidate(), shared_key_candidate()]
            .iter()
            .enumerate()
        {
            let name = format!("h{i}");
            let raw = materialize(cand);
            let renamed =
                rename_pred(&rename_pred(&raw, "g", &format!("{name}g")), "h", &name);
            out.push(FeatureInfo::new(&name, pad_unsafe(&renamed)));
        }
        out
    }

    fn xor_path(guard: usize) -> Vec<(usize, FeatureValue)> {
        vec![
            (0, FeatureValue::Op(crate::ir::Operator::Xor)),
            (3, FeatureValue::Type(ExtType::Rud)),
            (4, FeatureValue::Type(ExtType::Rud)),
            (5 + guard, FeatureValue::Bool(false)),
        ]
    }

    #[test]
    fn guarded_xor_rule_is_proved() {
        let features = guarded_features();
        let rule =
            parse_rule("rud(X) :- xor(X), lc(X,L), rud(L), rc(X,R), rud(R), not h0(X).").unwrap();
        let verdict = check_containment(
            &rule,
            &xor_path(0),
            &features,
            &ProverConfig::default(),
            "rud_xor",
        );
        match verdict {
            Verdict::Proved { base_depth, k } => {
                assert_eq!(base_depth, 3);
                assert_eq!(k, 1);
            }
            other => panic!("expected a proof, got {other:?}"),
        }
    }

    #[test]
    fn key_guarded_xor_rule_is_rejected_with_its_path() {
        let features = guarded_features();
        let rule =
            parse_rule("rud(X) :- xor(X), lc(X,L), rud(L), rc(X,R), rud(R), not h1(X).").unwrap();
        let verdict = check_containment(
            &rule,
            &xor_path(1),
            &features,
            &ProverConfig::default(),
            "rud_xor_keyguard",
        );
        let Verdict::Rejected { counterexample } = verdict else {
            panic!("expected rejection");
        };
        assert_eq!(counterexample.label, DistType::Ukd);
        let Source::Abstract { values } = counterexample.source else {
            panic!("expected an abstract counterexample");
        };
        assert_eq!(values[0], FeatureValue::Op(crate::ir::Operator::Xor));
        assert_eq!(values[6], FeatureValue::Bool(false));
        assert_eq!(values[1], FeatureValue::Na);
    }

    #[test]
    fn unknown_forms_are_reported_not_guessed() {
        let rule = parse_rule("rud(X) :- lc(X,L), lc(L,G), rud(G).").unwrap();
        let verdict =
            check_containment(&rule, &[], &[], &ProverConfig::default(), "grandchild");
        assert!(matches!(verdict, Verdict::Unknown { .. }));
    }

    #[test]
    fn emitted_smt_file_is_wellformed() {
        let features = guarded_features();
        let rule =
            parse_rule("rud(X) :- xor(X), lc(X,L), rud(L), rc(X,R), rud(R), not h0(X).").unwrap();
        let names: Vec<String> = features.iter().map(|f| f.name.clone()).collect();
        let premises = parse_premises(&rule, &names).unwrap();
        let enc = encode_step(&premises, &features, 1, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = emit_smtlib(&enc, dir.path(), "rud_xor", 1).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("(set-logic QF_UF)\n(declare-const "));
        assert!(text.ends_with("(check-sat)\n"));
        assert_eq!(text.matches("(assert ").count(), 1);
        let declared = text.matches("(declare-const ").count();
        assert_eq!(declared, enc.formula.vars().len());
    }

    #[test]
    fn oracle_cross_check_accepts_sound_rules_and_flags_unsound_ones() {
        let sound = parse_rule_file(
            "# rules\nrud(X) :- inrand(X).\nsid(X) :- inpub(X).\n",
        )
        .unwrap();
        assert_eq!(bounded_oracle_check(&sound, 2, 50, 7).unwrap(), None);

        let unsound = parse_rule_file("# rules\nrud(X) :- xor(X).\n").unwrap();
        let v = bounded_oracle_check(&unsound, 2, 0, 7)
            .unwrap()
            .expect("an xor of two non-random nodes is not RUD");
        assert_eq!(v.claimed, DistType::Rud);
        assert_ne!(v.actual, DistType::Rud);
    }
}
