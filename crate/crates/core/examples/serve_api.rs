//! Builds a data directory, starts the HTTP API on a local port, sends one
//! valuation request and shuts down.
//!
//! ```bash
//! cargo run --release -p valuate --example serve_api
//! ```

use std::sync::Arc;

use valuate::avm::{save_model, train, TrainParams};
use valuate::service::{router, AppState, ServiceConfig};
use valuate::synth::{synth_generate, SynthConfig};
use valuate::{DataDir, PropertyType};

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let root = std::env::temp_dir().join("valuate-serve-example");
    let dir = DataDir::new(&root);
    let dataset = synth_generate(SynthConfig::new(7, 2_000, 0.8), PropertyType::House);
    dir.save_schema(dataset.schema())?;
    dir.save_dataset(&dataset)?;
    save_model(&dir.model_path(PropertyType::House), &train(&dataset, &TrainParams::default())?)?;

    let state = AppState::from_config(&ServiceConfig::new(&root))?;
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let addr = listener.local_addr()?;
    let server = tokio::spawn(async move { axum::serve(listener, router(Arc::new(state))).await });
    println!("listening on http://{addr}");

    let body = serde_json::json!({
        "property_type": "house",
        "address": "No. 12, Sec. 2, Zhongshan Rd, Tainan",
        "features": {"house_age": 25, "total_floors": 3},
        "configuration": {"constraints": {"house_age": {"lower": 15, "upper": 35}}, "k": 6}
    });
    let report: serde_json::Value = tokio::task::spawn_blocking(move || {
        reqwest::blocking::Client::new()
            .post(format!("http://{addr}/api/v1/valuations"))
            .json(&body)
            .send()?
            .json::<serde_json::Value>()
    })
    .await??;
    println!("predicted unit price: {:.2} {}", report["predicted_unit_price"].as_f64().unwrap_or(f64::NAN), report["units"]);
    println!("neighbors: {}", report["neighbors"].as_array().map_or(0, Vec::len));
    println!("notes: {}", report["notes"]);
    println!("{}", report["explanation"]["text"]);

    server.abort();
    Ok(())
}
