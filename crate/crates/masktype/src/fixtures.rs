//! Bundled example programs and synthetic program builders.
//!
//! The `fixtures/train` directory holds a corpus of small masked and
//! leaky programs, each annotated with its exact per-node types; tests
//! confirm every annotation against the oracle. `fixtures/bench` holds
//! analysis-only programs too wide for the oracle's input bound.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::ir::{InputClass, Operator, ParseError, Program, parse_program};
use crate::oracle::DistType;

/// A named fixture program.
#[derive(Debug, Clone)]
pub struct Fixture {
    /// File stem, such as `chi_masked`.
    pub name: String,
    /// Parsed program.
    pub program: Program,
}

/// Why loading fixtures from disk failed.
#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    /// Directory listing or file read failed.
    #[error("cannot read {path}: {source}")]
    Io {
        /// Offending path.
        path: PathBuf,
        /// Underlying error.
        #[source]
        source: io::Error,
    },
    /// A fixture file does not parse.
    #[error("{path}: {source}")]
    Parse {
        /// Offending path.
        path: PathBuf,
        /// Underlying error.
        #[source]
        source: ParseError,
    },
}

/// Directory with the annotated training corpus.
pub fn train_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/train")
}

/// Directory with analysis-only benchmark programs.
pub fn bench_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/bench")
}

/// Loads every `.mbp` file in a directory, sorted by file name so corpus
/// order is stable.
pub fn load_dir(dir: &Path) -> Result<Vec<Fixture>, FixtureError> {
    let entries = fs::read_dir(dir).map_err(|source| FixtureError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "mbp"))
        .collect();
    paths.sort();
    let mut out = Vec::with_capacity(paths.len());
    for path in paths {
        let text = fs::read_to_string(&path).map_err(|source| FixtureError::Io {
            path: path.clone(),
            source,
        })?;
        let program = parse_program(&text).map_err(|source| FixtureError::Parse {
            path: path.clone(),
            source,
        })?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        out.push(Fixture { name, program });
    }
    Ok(out)
}

/// The bundled training corpus, in file-name order.
pub fn train_corpus() -> Result<Vec<Fixture>, FixtureError> {
    load_dir(&train_dir())
}

/// The masked chi program used throughout the documentation, compiled in
/// so library users need no file system access.
pub fn chi() -> Program {
    parse_program(include_str!("../fixtures/train/chi_masked.mbp"))
        .expect("the bundled chi fixture parses")
}

/// A long XOR chain over one secret and `n_rand` recycled randoms:
/// `t1 = xor(k1, r1)`, then `t_i = xor(t_(i-1), r_j)` with `j` cycling
/// over `r2..r_n`. The first random never recurs, so every prefix keeps
/// it live and every chain node stays uniform. With `n_gates` in the
/// tens of thousands this exercises analyzer throughput; the oracle can
/// still label it while `n_rand + 1` stays within its input bound.
pub fn xor_chain(n_gates: usize, n_rand: usize) -> Program {
    assert!(n_rand >= 2, "the chain needs one reserved and one cycling random");
    assert!(n_gates >= 1);
    let mut p = Program::default();
    let k = p.push_input("k1", InputClass::Key);
    let rands: Vec<_> = (1..=n_rand)
        .map(|i| p.push_input(format!("r{i}"), InputClass::Rand))
        .collect();
    let mut prev = p.push_gate("t1", Operator::Xor, &[k, rands[0]]);
    for i in 2..=n_gates {
        let r = rands[1 + (i - 2) % (n_rand - 1)];
        prev = p.push_gate(format!("t{i}"), Operator::Xor, &[prev, r]);
    }
    p
}

/// Key whitening at `bits` width: each key bit masked with its own fresh
/// random, then each whitened bit demasked again. The masked half is
/// uniform, the demasked half leaks, and nothing in between is merely
/// secret-independent.
pub fn whitening(bits: usize) -> Program {
    let mut p = Program::default();
    let keys: Vec<_> = (1..=bits)
        .map(|i| p.push_input(format!("k{i}"), InputClass::Key))
        .collect();
    let rands: Vec<_> = (1..=bits)
        .map(|i| p.push_input(format!("r{i}"), InputClass::Rand))
        .collect();
    let whitened: Vec<_> = (0..bits)
        .map(|i| p.push_gate(format!("w{}", i + 1), Operator::Xor, &[keys[i], rands[i]]))
        .collect();
    let demasked: Vec<_> = (0..bits)
        .map(|i| p.push_gate(format!("d{}", i + 1), Operator::Xor, &[whitened[i], rands[i]]))
        .collect();
    for &w in &whitened {
        p.labels.insert(w, DistType::Rud);
    }
    for &d in &demasked {
        p.labels.insert(d, DistType::Ukd);
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{compute_tables, label_program, DistType, MAX_ORACLE_INPUTS};

    #[test]
    fn corpus_loads_and_is_annotated() {
        let corpus = train_corpus().unwrap();
        assert_eq!(corpus.len(), 34);
        for f in &corpus {
            assert!(
                !f.program.labels.is_empty(),
                "{} carries no annotations",
                f.name
            );
        }
    }

    #[test]
    fn every_annotation_matches_the_oracle() {
        for f in train_corpus().unwrap() {
            let actual = label_program(&f.program).unwrap();
            let mut ids: Vec<usize> = f.program.labels.keys().copied().collect();
            ids.sort_unstable();
            for id in ids {
                assert_eq!(
                    f.program.labels[&id], actual[id],
                    "{}: node {}",
                    f.name, f.program.names[id]
                );
            }
        }
    }

    #[test]
    fn chi_carries_the_reference_nodes() {
        let p = chi();
        let labels = label_program(&p).unwrap();
        let b4 = p.id_of("b4").unwrap();
        let n1 = p.id_of("n1").unwrap();
        assert_eq!(labels[b4], DistType::Rud);
        assert_eq!(labels[n1], DistType::Ukd);
        assert_eq!(p.inputs(Some(InputClass::Key)).len(), 3);
        assert_eq!(p.inputs(Some(InputClass::Rand)).len(), 3);
    }

    #[test]
    fn chi_output_demasks_to_the_reference_column() {
        let p = chi();
        let t = compute_tables(&p).unwrap();
        let n1 = p.id_of("n1").unwrap();
        let off = |name: &str| t.layout.offset(p.id_of(name).unwrap());
        // With every random forced to zero, the remasked output n1 must
        // compute the column i1 xor (not(i2) and i3) on the raw secrets.
        for bits in 0usize..8 {
            let (i1, i2, i3) = (bits & 1, (bits >> 1) & 1, (bits >> 2) & 1);
            let idx = (i1 << off("i1")) | (i2 << off("i2")) | (i3 << off("i3"));
            let expect = (i1 != 0) ^ (i2 == 0 && i3 != 0);
            assert_eq!(t.tables[n1].get(idx), expect, "i1={i1} i2={i2} i3={i3}");
        }
    }

    #[test]
    fn xor_chain_scales_and_stays_in_oracle_bounds() {
        let p = xor_chain(10_000, 8);
        assert_eq!(p.len(), 9 + 10_000);
        assert!(p.input_count() <= MAX_ORACLE_INPUTS);
        let small = xor_chain(16, 4);
        let labels = label_program(&small).unwrap();
        // Every chain node keeps at least one live mask.
        for id in small.inputs(None).len()..small.len() {
            assert_eq!(labels[id], DistType::Rud, "node {}", small.names[id]);
        }
    }

    #[test]
    fn whitening_splits_into_masked_and_leaky_halves() {
        let p = whitening(4);
        let labels = label_program(&p).unwrap();
        for i in 0..4 {
            let w = p.id_of(&format!("w{}", i + 1)).unwrap();
            let d = p.id_of(&format!("d{}", i + 1)).unwrap();
            assert_eq!(labels[w], DistType::Rud);
            assert_eq!(labels[d], DistType::Ukd);
        }
        let bench = load_dir(&bench_dir()).unwrap();
        let wide = &bench[0].program;
        assert_eq!(wide.to_text(), whitening(16).to_text());
    }
}
