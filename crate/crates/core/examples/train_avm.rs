//! Trains the gradient-boosted valuation model, reports held-out MAPE and
//! round-trips it through the model file format.
//!
//! ```bash
//! cargo run --release -p valuate --example train_avm
//! ```

use valuate::avm::{load_model, save_model, train, TrainParams};
use valuate::eval::{mape, split_train_test};
use valuate::synth::{synth_generate, SynthConfig};
use valuate::PropertyType;

fn main() -> anyhow::Result<()> {
    let dataset = synth_generate(SynthConfig::new(7, 5_000, 0.8), PropertyType::Building);
    let (train_set, test) = split_train_test(&dataset, 1, 0.2)?;
    let model = train(&train_set, &TrainParams::default())?;

    let schema = train_set.schema();
    let actual: Vec<f64> = test.iter().filter_map(|p| p.unit_price).collect();
    let predicted = test
        .iter()
        .map(|p| model.predict(schema, p))
        .collect::<Result<Vec<_>, _>>()?;
    println!("{} trees, held-out MAPE {:.2}%", model.trees().len(), mape(&actual, &predicted)?);

    let dir = tempfile_dir()?;
    let path = dir.join("building.model");
    save_model(&path, &model)?;
    let reloaded = load_model(&path, schema)?;
    let same = test
        .iter()
        .all(|p| model.predict(schema, p).ok() == reloaded.predict(schema, p).ok());
    println!("saved to {}; reloaded predictions identical: {same}", path.display());
    Ok(())
}

fn tempfile_dir() -> std::io::Result<std::path::PathBuf> {
    let dir = std::env::temp_dir().join("valuate-train-avm-example");
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}
