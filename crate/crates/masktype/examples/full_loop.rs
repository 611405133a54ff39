//! Learns a verified analyzer from the bundled corpus, then applies it
//! to the masked chi program.
//!
//! ```sh
//! cargo run --release --example full_loop
//! ```

use masktype::fixtures::{chi, train_corpus};
use masktype::pipeline::{analyze, run_loop, LoopConfig};

fn main() {
    let start = std::time::Instant::now();
    let corpus = train_corpus().expect("bundled corpus loads");
    let programs = corpus.into_iter().map(|f| f.program).collect();
    let outcome = run_loop(programs, &LoopConfig::default()).expect("loop runs");

    println!("converged: {}", outcome.converged);
    for (i, s) in outcome.iterations.iter().enumerate() {
        println!(
            "iteration {i}: learned {} verified {} rejected {} unknown {}",
            s.learned, s.verified, s.rejected, s.unknown
        );
    }
    println!("\nverified analyzer:\n{}", outcome.rules.to_text());

    let chi = chi();
    let (report, _) = analyze(&outcome.rules, &chi, "chi_masked").expect("analysis runs");
    println!("{}", report.to_text());
    println!("total time: {:?}", start.elapsed());
}
