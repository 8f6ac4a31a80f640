//! Completes a sparse property three ways: no imputation, corpus averages
//! and nearest neighbors.
//!
//! ```bash
//! cargo run -p valuate --example imputation
//! ```

use valuate::domain::{FeatureValue, PropertyConfiguration};
use valuate::imputation::{impute, ImputationStrategy};
use valuate::neighbors::NeighborIndex;
use valuate::synth::{synth_generate, SynthConfig};
use valuate::{Property, PropertyType};

fn main() {
    let dataset = synth_generate(SynthConfig::new(7, 2_000, 0.8), PropertyType::House);
    let schema = dataset.schema().clone();
    let stats = dataset.stats().clone();
    let index = NeighborIndex::new(dataset);

    let target = Property::new("target", PropertyType::House)
        .with("latitude", FeatureValue::Numeric(24.15))
        .with("longitude", FeatureValue::Numeric(120.68))
        .with("house_age", FeatureValue::Numeric(30.0));
    let search = index.find(&target, &PropertyConfiguration::default());
    let neighbors = search.properties();

    for strategy in [ImputationStrategy::None, ImputationStrategy::Average, ImputationStrategy::Neighbor] {
        let (completed, report) = impute(strategy, &target, &neighbors, &schema, &stats);
        println!("{strategy:?}: {} imputed, {} unresolved", report.entries.len(), report.unresolved.len());
        for name in schema.names() {
            println!("    {name:<22} {}", completed.feature(name));
        }
    }
}
