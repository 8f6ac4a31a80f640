//! Generates a small synthetic corpus and prints a summary of each type.
//!
//! ```bash
//! cargo run -p valuate --example synthetic_corpus
//! ```

use valuate::synth::{synth_corpus, SynthConfig};

fn main() {
    for dataset in synth_corpus(SynthConfig::new(7, 1_000, 0.8)) {
        let prices = dataset.targets();
        let mean = prices.iter().sum::<f64>() / prices.len() as f64;
        let age = dataset.stats().numeric("house_age").expect("house_age is numeric");
        println!(
            "{:<10} {} records, mean unit price {mean:.1}, house age {:.0}-{:.0} years",
            dataset.property_type().label(),
            dataset.len(),
            age.min,
            age.max,
        );
    }
}
