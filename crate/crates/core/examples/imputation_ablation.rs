//! Runs the four-arm imputation ablation on a synthetic corpus and prints
//! the result table.
//!
//! ```bash
//! cargo run --release -p valuate --example imputation_ablation -- 5000 2024
//! ```

use std::time::Instant;

use valuate::eval::{run_ablation, AblationConfig};
use valuate::synth::{synth_corpus, SynthConfig};

fn main() -> anyhow::Result<()> {
    let size: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(2_000);
    let seed: u64 = std::env::args()
        .nth(2)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(2024);
    let corpus = synth_corpus(SynthConfig::new(seed, size, 0.8));
    let started = Instant::now();
    let result = run_ablation(&corpus, &AblationConfig::default())?;
    println!("{}", result.to_table());
    println!("elapsed: {:.1?}", started.elapsed());
    Ok(())
}
