//! Distribution-type inference for masked Boolean programs.
//!
//! A masked Boolean program computes over three classes of secret-independent
//! or secret-carrying inputs: public values, key bits, and uniformly random
//! mask bits. Every internal gate of such a program leaks its value
//! distribution through a power side channel, so each gate is classified into
//! one of three distribution types:
//!
//! * `RUD` - randomized to uniform: for every fixed key and public input the
//!   gate's value is uniform over the random masks (leaks nothing),
//! * `SID` - secret independent: the gate's distribution does not depend on
//!   the key (leaks nothing about the key),
//! * `UKD` - unknown/key dependent: everything else (potential leak).
//!
//! The crate combines three ingredients:
//!
//! 1. an exact enumeration [`oracle`] that labels every gate of a bounded
//!    program by brute force over all input assignments,
//! 2. a [`learner`] that fits decision trees over Datalog-definable syntactic
//!    features of example programs and reads type-inference rules off the
//!    tree paths, synthesizing new recursive features on demand, and
//! 3. a [`prover`] that checks every learned rule against a sound knowledge
//!    base of distribution-type facts via bounded checking plus k-induction,
//!    returning abstract counter-examples for rules that do not hold.
//!
//! The [`pipeline`] module ties these together in a counter-example guided
//! loop: learn candidate rules, keep the proved ones, feed counter-examples
//! of rejected ones back into the training set, repeat. The surviving rules
//! form a fast static analyzer (see [`pipeline::analyze`]) whose verdicts are
//! sound with respect to the exact oracle.

pub mod datalog;
pub mod enumerate;
pub mod fixtures;
pub mod formula;
pub mod ir;
pub mod learner;
pub mod oracle;
pub mod pipeline;
pub mod prover;
