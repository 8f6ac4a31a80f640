//! Values a sparse property end to end and prints the pairwise comparisons
//! and the explanation. Set `LLM_ENDPOINT` (and optionally `LLM_MODEL`,
//! `LLM_TOKEN`) to route the text through an OpenAI-compatible server;
//! otherwise the template renderer is used.
//!
//! ```bash
//! cargo run --release -p valuate --example explain_valuation
//! ```

use std::sync::Arc;
use std::time::Duration;

use valuate::avm::{train, TrainParams};
use valuate::domain::{FeatureValue, PropertyConfiguration};
use valuate::explain::{
    default_priors, generate_explanation, ExplanationInputs, HttpLlmClient, LlmBackend,
    PromptOptions,
};
use valuate::imputation::impute_neighbor;
use valuate::neighbors::NeighborIndex;
use valuate::synth::{synth_generate, SynthConfig};
use valuate::{Property, PropertyType};

fn main() -> anyhow::Result<()> {
    let dataset = synth_generate(SynthConfig::new(7, 3_000, 0.8), PropertyType::Apartment);
    let model = train(&dataset, &TrainParams::default())?;
    let schema = dataset.schema().clone();
    let stats = dataset.stats().clone();
    let index = NeighborIndex::new(dataset);

    let target = Property::new("target", PropertyType::Apartment)
        .with("latitude", FeatureValue::Numeric(22.64))
        .with("longitude", FeatureValue::Numeric(120.30))
        .with("house_age", FeatureValue::Numeric(8.0))
        .with("total_floors", FeatureValue::Numeric(5.0));
    let search = index.find(&target, &PropertyConfiguration::default());
    let (completed, _) = impute_neighbor(&target, &search.properties(), &schema, &stats);
    let prediction = model.predict(&schema, &completed)?;

    let llm = std::env::var("LLM_ENDPOINT").ok().map(|endpoint| {
        let client = HttpLlmClient {
            endpoint,
            model: std::env::var("LLM_MODEL").unwrap_or_else(|_| "gpt-4o-mini".into()),
            token_env: Some("LLM_TOKEN".into()),
        };
        LlmBackend::new(Arc::new(client), Duration::from_secs(20))
    });
    let bundle = generate_explanation(
        &ExplanationInputs {
            target: &completed,
            neighbors: &search.neighbors,
            prediction,
            schema: &schema,
            stats: &stats,
            priors: &default_priors(),
            prompt: PromptOptions::default(),
        },
        llm.as_ref(),
    );

    for n in &bundle.neighbors {
        println!("neighbor {} ({}):", n.rank, n.neighbor_id);
        for c in n.top(3) {
            println!("    {:<22} {:?} salience {:.2}", c.feature, c.direction, c.salience);
        }
    }
    for note in &bundle.consistency {
        println!("note: {}", note.note);
    }
    println!("\n[{:?}] {}", bundle.renderer, bundle.text);
    Ok(())
}
