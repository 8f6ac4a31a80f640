//! Finds the nearest comparable apartments under a user configuration.
//!
//! ```bash
//! cargo run -p valuate --example neighbor_search
//! ```

use valuate::domain::{Constraint, FeatureValue, PropertyConfiguration};
use valuate::neighbors::NeighborIndex;
use valuate::synth::{synth_generate, SynthConfig};
use valuate::{Property, PropertyType};

fn main() {
    let dataset = synth_generate(SynthConfig::new(7, 2_000, 0.8), PropertyType::Apartment);
    let index = NeighborIndex::new(dataset);

    // Only latitude, longitude and age are known.
    let target = Property::new("target", PropertyType::Apartment)
        .with("latitude", FeatureValue::Numeric(25.03))
        .with("longitude", FeatureValue::Numeric(121.55))
        .with("house_age", FeatureValue::Numeric(12.0));

    let config = PropertyConfiguration::unconstrained(6)
        .with("house_age", Constraint::range(5.0, 20.0))
        .with("land_use", Constraint::labels(["residential-A", "residential-B"]));
    let search = index.find(&target, &config);

    println!("{} candidates passed the filter; status {:?}", search.candidates, search.status);
    for n in &search.neighbors {
        println!(
            "#{} {} distance {:.4} age {} land use {} price {:?}",
            n.rank,
            n.neighbor.id,
            n.distance,
            n.neighbor.feature("house_age"),
            n.neighbor.feature("land_use"),
            n.neighbor.unit_price,
        );
    }
}
