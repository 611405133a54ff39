//! Exhaustive enumeration of small programs.
//!
//! Soundness claims about analyzers and the knowledge base are checked
//! against every program in a bounded space, not just random samples. The
//! space here is: a fixed set of typed inputs, up to `max_gates` gates,
//! each gate reading any earlier node. Symmetric operators take ordered
//! operand pairs with the left index no larger than the right one, and
//! every gate except the last must feed a later gate. Both restrictions
//! only drop programs whose node behaviors already occur in a smaller
//! enumerated program (operand order does not change a symmetric gate's
//! value, and an unused gate's cone is itself an enumerated program), so
//! per-node checks over the full space and the restricted one see the same
//! node semantics.
//!
//! The same DAG can still appear under several gate orderings; callers doing
//! per-program work that must not repeat can deduplicate on
//! [`Program::to_text`].

use crate::ir::{InputClass, Operator, Program};

/// Shape of the enumerated space.
#[derive(Debug, Clone, Copy)]
pub struct EnumConfig {
    /// Number of public inputs.
    pub n_pub: usize,
    /// Number of key inputs.
    pub n_key: usize,
    /// Number of random inputs.
    pub n_rand: usize,
    /// Largest number of gates per program.
    pub max_gates: usize,
}

impl Default for EnumConfig {
    fn default() -> Self {
        EnumConfig {
            n_pub: 1,
            n_key: 2,
            n_rand: 3,
            max_gates: 3,
        }
    }
}

/// One gate under construction: operator plus operand node indices.
type GateSpec = (Operator, usize, usize);

fn build(cfg: &EnumConfig, gates: &[GateSpec]) -> Program {
    let mut p = Program::default();
    for i in 0..cfg.n_rand {
        p.push_input(format!("r{}", i + 1), InputClass::Rand);
    }
    for i in 0..cfg.n_key {
        p.push_input(format!("k{}", i + 1), InputClass::Key);
    }
    for i in 0..cfg.n_pub {
        p.push_input(format!("p{}", i + 1), InputClass::Pub);
    }
    for (i, &(op, a, b)) in gates.iter().enumerate() {
        if op.arity() == 1 {
            p.push_gate(format!("t{}", i + 1), op, &[a]);
        } else {
            p.push_gate(format!("t{}", i + 1), op, &[a, b]);
        }
    }
    p
}

/// True when every gate except the last one is read by a later gate.
fn connected(n_inputs: usize, gates: &[GateSpec]) -> bool {
    let n = gates.len();
    let mut used = vec![false; n];
    for &(op, a, b) in gates {
        if a >= n_inputs {
            used[a - n_inputs] = true;
        }
        if op.arity() == 2 && b >= n_inputs {
            used[b - n_inputs] = true;
        }
    }
    used.iter().take(n.saturating_sub(1)).all(|&u| u)
}

fn gen(
    cfg: &EnumConfig,
    n_inputs: usize,
    gates: &mut Vec<GateSpec>,
    visit: &mut dyn FnMut(&Program),
) {
    if !gates.is_empty() && connected(n_inputs, gates) {
        visit(&build(cfg, gates));
    }
    if gates.len() == cfg.max_gates {
        return;
    }
    let avail = n_inputs + gates.len();
    for op in Operator::all() {
        if op.arity() == 1 {
            for a in 0..avail {
                gates.push((op, a, a));
                gen(cfg, n_inputs, gates, visit);
                gates.pop();
            }
        } else {
            for a in 0..avail {
                for b in a..avail {
                    gates.push((op, a, b));
                    gen(cfg, n_inputs, gates, visit);
                    gates.pop();
                }
            }
        }
    }
}

/// Calls `visit` once per program in the space described by `cfg`.
/// Enumeration order is deterministic.
pub fn for_each_program(cfg: &EnumConfig, mut visit: impl FnMut(&Program)) {
    let n_inputs = cfg.n_pub + cfg.n_key + cfg.n_rand;
    let mut gates = Vec::new();
    gen(cfg, n_inputs, &mut gates, &mut visit);
}

/// Number of programs [`for_each_program`] visits for `cfg`.
pub fn count_programs(cfg: &EnumConfig) -> usize {
    let mut n = 0;
    for_each_program(cfg, |_| n += 1);
    n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_gate_count_is_exact() {
        // Four symmetric operators over ordered pairs (a <= b) of six nodes
        // plus NOT over each node: 4 * 21 + 6.
        let cfg = EnumConfig {
            max_gates: 1,
            ..EnumConfig::default()
        };
        assert_eq!(count_programs(&cfg), 90);
    }

    #[test]
    fn two_gate_count_is_exact() {
        // Every two-gate program extends a one-gate program with a gate
        // that reads it: 90 * (4 * 7 + 1).
        let cfg = EnumConfig {
            max_gates: 2,
            ..EnumConfig::default()
        };
        assert_eq!(count_programs(&cfg), 90 + 2610);
    }

    #[test]
    fn enumeration_is_deterministic() {
        let cfg = EnumConfig {
            max_gates: 2,
            ..EnumConfig::default()
        };
        let mut first = Vec::new();
        for_each_program(&cfg, |p| first.push(p.to_text()));
        let mut second = Vec::new();
        for_each_program(&cfg, |p| second.push(p.to_text()));
        assert_eq!(first, second);
        assert!(first.contains(&build(&cfg, &[(Operator::Xor, 0, 3)]).to_text()));
    }

    #[test]
    fn all_programs_are_wellformed_and_connected() {
        let cfg = EnumConfig {
            max_gates: 2,
            ..EnumConfig::default()
        };
        for_each_program(&cfg, |p| {
            let text = p.to_text();
            let round = crate::ir::parse_program(&text).unwrap();
            assert_eq!(round.to_text(), text);
            let n_inputs = p.input_count();
            let n_gates = p.len() - n_inputs;
            if n_gates > 1 {
                for g in 0..n_gates - 1 {
                    let id = n_inputs + g;
                    let used = (id + 1..p.len()).any(|later| {
                        p.nodes[later].operands().contains(&id)
                    });
                    assert!(used, "dead gate in {text}");
                }
            }
        });
    }
}
