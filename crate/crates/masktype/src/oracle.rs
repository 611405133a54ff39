//! Exact distribution-type oracle via truth-table enumeration.
//!
//! Each node of a bounded program (at most [`MAX_ORACLE_INPUTS`] inputs) is
//! expanded to its full truth table, stored bit-parallel in `u64` words.
//! Table indices pack the input assignment as `key bits | pub bits | rand
//! bits` with the random bits lowest, so all assignments sharing a (key,
//! pub) choice form one contiguous block and the distribution over masks is
//! a block popcount.
//!
//! * a node is `RUD` when every such block has exactly half its bits set:
//!   for each fixed key and public input the node is uniform over the masks;
//! * a node is `SID` when, for each fixed public input, the block popcounts
//!   agree across all key values: the value distribution carries no key
//!   information;
//! * otherwise it is `UKD`.
//!
//! `RUD` implies `SID` (equal-to-half counts are in particular equal), so
//! the three types form a hierarchy with `UKD` weakest.

use std::fmt;

use thiserror::Error;

use crate::ir::{InputClass, Node, NodeId, Operator, Program};

/// Largest number of program inputs the oracle will enumerate.
pub const MAX_ORACLE_INPUTS: usize = 20;

/// Distribution type of a node value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DistType {
    /// Unknown or key dependent: may leak.
    Ukd,
    /// Secret independent: distribution identical for all keys.
    Sid,
    /// Randomized to uniform over the masks; strongest, implies `Sid`.
    Rud,
}

impl DistType {
    /// Keyword used in text formats.
    pub fn keyword(self) -> &'static str {
        match self {
            DistType::Ukd => "ukd",
            DistType::Sid => "sid",
            DistType::Rud => "rud",
        }
    }

    /// Parses a type keyword.
    pub fn from_keyword(s: &str) -> Option<DistType> {
        match s {
            "ukd" => Some(DistType::Ukd),
            "sid" => Some(DistType::Sid),
            "rud" => Some(DistType::Rud),
            _ => None,
        }
    }
}

impl fmt::Display for DistType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// Node classification extended with input classes, used as a feature value:
/// leaves are described by what they are, internal nodes by their type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExtType {
    Ukd,
    Sid,
    Rud,
    InRand,
    InPub,
    InKey,
}

impl ExtType {
    /// Keyword used in text formats.
    pub fn keyword(self) -> &'static str {
        match self {
            ExtType::Ukd => "ukd",
            ExtType::Sid => "sid",
            ExtType::Rud => "rud",
            ExtType::InRand => "inrand",
            ExtType::InPub => "inpub",
            ExtType::InKey => "inkey",
        }
    }

    /// Parses a keyword.
    pub fn from_keyword(s: &str) -> Option<ExtType> {
        match s {
            "ukd" => Some(ExtType::Ukd),
            "sid" => Some(ExtType::Sid),
            "rud" => Some(ExtType::Rud),
            "inrand" => Some(ExtType::InRand),
            "inpub" => Some(ExtType::InPub),
            "inkey" => Some(ExtType::InKey),
            _ => None,
        }
    }

    /// All values in a fixed order (used by feature enumeration).
    pub fn all() -> [ExtType; 6] {
        [
            ExtType::Ukd,
            ExtType::Sid,
            ExtType::Rud,
            ExtType::InRand,
            ExtType::InPub,
            ExtType::InKey,
        ]
    }

    /// The distribution type this value projects to: input leaves map to
    /// the type their class guarantees (random masks are uniform, public
    /// values are key independent, key bits leak themselves).
    pub fn project(self) -> DistType {
        match self {
            ExtType::Rud | ExtType::InRand => DistType::Rud,
            ExtType::Sid | ExtType::InPub => DistType::Sid,
            ExtType::Ukd | ExtType::InKey => DistType::Ukd,
        }
    }
}

/// Errors from oracle evaluation.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum OracleError {
    /// The program has more inputs than the oracle can enumerate.
    #[error("program has {got} inputs, oracle enumerates at most {max}")]
    TooManyInputs { got: usize, max: usize },
}

/// Truth table of one node over all `n_inputs` program inputs, one bit per
/// input assignment, packed little-endian into `u64` words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruthTable {
    n_inputs: usize,
    bits: Vec<u64>,
}

impl TruthTable {
    /// Number of assignments (bits) in the table.
    pub fn len(&self) -> usize {
        1usize << self.n_inputs
    }

    /// Tables always cover at least the empty assignment.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Value of the node under the assignment packed into `index`.
    pub fn get(&self, index: usize) -> bool {
        (self.bits[index >> 6] >> (index & 63)) & 1 == 1
    }

    fn words_for(n_inputs: usize) -> usize {
        if n_inputs >= 6 {
            1 << (n_inputs - 6)
        } else {
            1
        }
    }

    fn tail_mask(n_inputs: usize) -> u64 {
        if n_inputs >= 6 {
            u64::MAX
        } else {
            (1u64 << (1 << n_inputs)) - 1
        }
    }

    /// Table of the input variable occupying bit position `bit` of the
    /// assignment index.
    pub fn projection(n_inputs: usize, bit: usize) -> TruthTable {
        assert!(bit < n_inputs);
        let words = Self::words_for(n_inputs);
        let bits = if bit < 6 {
            let pattern = match bit {
                0 => 0xAAAA_AAAA_AAAA_AAAA,
                1 => 0xCCCC_CCCC_CCCC_CCCC,
                2 => 0xF0F0_F0F0_F0F0_F0F0,
                3 => 0xFF00_FF00_FF00_FF00,
                4 => 0xFFFF_0000_FFFF_0000,
                _ => 0xFFFF_FFFF_0000_0000,
            };
            vec![pattern & Self::tail_mask(n_inputs); words]
        } else {
            (0..words)
                .map(|w| if (w >> (bit - 6)) & 1 == 1 { u64::MAX } else { 0 })
                .collect()
        };
        TruthTable { n_inputs, bits }
    }

    /// Combines two tables with a binary operator, or complements the first
    /// for `Not`.
    pub fn apply(op: Operator, a: &TruthTable, b: &TruthTable) -> TruthTable {
        assert_eq!(a.n_inputs, b.n_inputs);
        let mask = Self::tail_mask(a.n_inputs);
        let bits = a
            .bits
            .iter()
            .zip(&b.bits)
            .map(|(&x, &y)| {
                (match op {
                    Operator::And | Operator::Mul => x & y,
                    Operator::Or => x | y,
                    Operator::Xor => x ^ y,
                    Operator::Not => !x,
                }) & mask
            })
            .collect();
        TruthTable {
            n_inputs: a.n_inputs,
            bits,
        }
    }

    /// True when the node is the same value under every assignment.
    pub fn is_constant(&self) -> bool {
        let mask = Self::tail_mask(self.n_inputs);
        self.bits.iter().all(|&w| w == 0) || self.bits.iter().all(|&w| w == mask)
    }

    /// Number of set bits in the assignment range `[start, start + len)`.
    fn popcount_range(&self, start: usize, len: usize) -> u32 {
        debug_assert_eq!(start % len.min(64).max(1), 0);
        let end = start + len;
        let mut count = 0;
        let mut i = start;
        while i < end {
            let word = self.bits[i >> 6];
            let lo = i & 63;
            let take = (end - i).min(64 - lo);
            let chunk = (word >> lo) & if take == 64 { u64::MAX } else { (1u64 << take) - 1 };
            count += chunk.count_ones();
            i += take;
        }
        count
    }
}

/// Bit positions of each input within a table index: random inputs occupy
/// the lowest bits, then public inputs, then key inputs, each class in
/// declaration order.
#[derive(Debug, Clone)]
pub struct InputLayout {
    /// Number of random inputs.
    pub n_rand: usize,
    /// Number of public inputs.
    pub n_pub: usize,
    /// Number of key inputs.
    pub n_key: usize,
    /// Bit position per input node id (non-inputs hold `usize::MAX`).
    offsets: Vec<usize>,
}

impl InputLayout {
    /// Builds the layout for a program.
    pub fn of(program: &Program) -> InputLayout {
        let rands = program.inputs(Some(InputClass::Rand));
        let pubs = program.inputs(Some(InputClass::Pub));
        let keys = program.inputs(Some(InputClass::Key));
        let mut offsets = vec![usize::MAX; program.len()];
        for (i, &id) in rands.iter().enumerate() {
            offsets[id] = i;
        }
        for (i, &id) in pubs.iter().enumerate() {
            offsets[id] = rands.len() + i;
        }
        for (i, &id) in keys.iter().enumerate() {
            offsets[id] = rands.len() + pubs.len() + i;
        }
        InputLayout {
            n_rand: rands.len(),
            n_pub: pubs.len(),
            n_key: keys.len(),
            offsets,
        }
    }

    /// Total input count.
    pub fn n_inputs(&self) -> usize {
        self.n_rand + self.n_pub + self.n_key
    }

    /// Bit position of input `id` within a table index.
    pub fn offset(&self, id: NodeId) -> usize {
        self.offsets[id]
    }
}

/// Truth tables for every node of a program, plus the input layout.
#[derive(Debug, Clone)]
pub struct ProgramTables {
    /// Index layout shared by all tables.
    pub layout: InputLayout,
    /// One table per program node, in node order.
    pub tables: Vec<TruthTable>,
}

/// Expands every node of the program to its truth table.
pub fn compute_tables(program: &Program) -> Result<ProgramTables, OracleError> {
    let layout = InputLayout::of(program);
    let n = layout.n_inputs();
    if n > MAX_ORACLE_INPUTS {
        return Err(OracleError::TooManyInputs {
            got: n,
            max: MAX_ORACLE_INPUTS,
        });
    }
    let mut tables: Vec<TruthTable> = Vec::with_capacity(program.len());
    for (id, node) in program.nodes.iter().enumerate() {
        let table = match node {
            Node::Input(_) => TruthTable::projection(n, layout.offset(id)),
            Node::Gate { op, args } => {
                TruthTable::apply(*op, &tables[args[0]], &tables[args[1]])
            }
        };
        tables.push(table);
    }
    Ok(ProgramTables { layout, tables })
}

/// True when for every fixed (key, pub) assignment the node is 1 for
/// exactly half of the mask assignments.
pub fn is_rud(table: &TruthTable, layout: &InputLayout) -> bool {
    if layout.n_rand == 0 {
        return false;
    }
    let block = 1usize << layout.n_rand;
    let half = (block / 2) as u32;
    let blocks = 1usize << (layout.n_pub + layout.n_key);
    (0..blocks).all(|b| table.popcount_range(b * block, block) == half)
}

/// True when for every fixed pub assignment the node's bias over the masks
/// is the same for all key assignments.
pub fn is_sid(table: &TruthTable, layout: &InputLayout) -> bool {
    let block = 1usize << layout.n_rand;
    for p in 0..1usize << layout.n_pub {
        let mut first = None;
        for k in 0..1usize << layout.n_key {
            let idx = (k << layout.n_pub) | p;
            let count = table.popcount_range(idx * block, block);
            match first {
                None => first = Some(count),
                Some(c) if c != count => return false,
                _ => {}
            }
        }
    }
    true
}

/// Classifies one table: the strongest of `Rud`, `Sid`, `Ukd` that holds.
pub fn classify(table: &TruthTable, layout: &InputLayout) -> DistType {
    if is_rud(table, layout) {
        DistType::Rud
    } else if is_sid(table, layout) {
        DistType::Sid
    } else {
        DistType::Ukd
    }
}

/// Labels every node of a program with its exact distribution type.
pub fn label_program(program: &Program) -> Result<Vec<DistType>, OracleError> {
    let tables = compute_tables(program)?;
    Ok(tables
        .tables
        .iter()
        .map(|t| classify(t, &tables.layout))
        .collect())
}

/// Extended labels: input leaves report their class, internal nodes their
/// oracle type.
pub fn label_program_ext(program: &Program) -> Result<Vec<ExtType>, OracleError> {
    let types = label_program(program)?;
    Ok(program
        .nodes
        .iter()
        .zip(&types)
        .map(|(node, &ty)| match node {
            Node::Input(InputClass::Rand) => ExtType::InRand,
            Node::Input(InputClass::Pub) => ExtType::InPub,
            Node::Input(InputClass::Key) => ExtType::InKey,
            Node::Gate { .. } => match ty {
                DistType::Rud => ExtType::Rud,
                DistType::Sid => ExtType::Sid,
                DistType::Ukd => ExtType::Ukd,
            },
        })
        .collect())
}
