//! Deterministic synthetic property corpus.
//!
//! Locations cluster around a handful of city centers with a rural
//! background. Two smooth random fields over the map drive location quality
//! and development era; `spatial_correlation` blends those fields with
//! independent noise, so at 0 nothing about a record depends on where it is.
//!
//! Log unit price is a fixed function of the features plus Gaussian noise,
//! with a negative house-age coefficient.

use std::f64::consts::PI;

use chrono::{Datelike, Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::domain::{
    FeatureSchema, FeatureValue, GeoPoint, Property, PropertyType, HOUSE_AGE, LATITUDE,
    LONGITUDE,
};
use crate::ingest::Dataset;

/// Default corpus size per property type.
pub const DEFAULT_SIZE: usize = 5_000;

/// Map extent the generator samples from (roughly Taiwan).
pub const LAT_RANGE: (f64, f64) = (21.9, 25.3);
pub const LON_RANGE: (f64, f64) = (120.0, 122.0);

/// Log-price slope per year of house age.
pub const AGE_COEFFICIENT: f64 = -0.011;

const CITIES: [(&str, f64, f64, f64); 6] = [
    ("Taipei", 25.04, 121.54, 0.28),
    ("New Taipei", 24.99, 121.45, 0.18),
    ("Taichung", 24.15, 120.67, 0.18),
    ("Kaohsiung", 22.63, 120.31, 0.16),
    ("Tainan", 22.99, 120.21, 0.12),
    ("Hsinchu", 24.80, 120.97, 0.08),
];
const CITY_SPREAD_DEG: f64 = 0.07;
const URBAN_SHARE: f64 = 0.7;

const ASSESSMENT_WINDOW_DAYS: i64 = 3 * 365;

const FIELD_COMPONENTS: usize = 48;
const FIELD_LENGTH_SCALE_DEG: f64 = 0.3;

const LAND_USE_EFFECTS: [(&str, f64); 5] = [
    ("commercial", 0.12),
    ("residential-A", 0.05),
    ("residential-B", 0.0),
    ("industrial", -0.10),
    ("agricultural", -0.20),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub size: usize,
    /// In [0, 1]; 0 makes every feature and price independent of location.
    pub spatial_correlation: f64,
}

impl SynthConfig {
    pub fn new(seed: u64, size: usize, spatial_correlation: f64) -> Self {
        Self {
            seed,
            size,
            spatial_correlation,
        }
    }
}

/// Smooth stationary field approximated by random Fourier features; values
/// are roughly standard normal at every location.
struct SpatialField {
    freqs: Vec<(f64, f64)>,
    phases: Vec<f64>,
}

impl SpatialField {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, 1.0 / FIELD_LENGTH_SCALE_DEG).expect("valid normal");
        let freqs = (0..FIELD_COMPONENTS)
            .map(|_| (normal.sample(rng), normal.sample(rng)))
            .collect();
        let phases = (0..FIELD_COMPONENTS)
            .map(|_| rng.random_range(0.0..2.0 * PI))
            .collect();
        Self { freqs, phases }
    }

    fn at(&self, p: GeoPoint) -> f64 {
        let scale = (2.0 / FIELD_COMPONENTS as f64).sqrt();
        scale
            * self
                .freqs
                .iter()
                .zip(&self.phases)
                .map(|(&(wl, wo), &b)| (wl * p.lat + wo * p.lon + b).cos())
                .sum::<f64>()
    }
}

struct Geography {
    quality: SpatialField,
    development: SpatialField,
    amenity: SpatialField,
}

impl Geography {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        Self {
            quality: SpatialField::new(&mut rng),
            development: SpatialField::new(&mut rng),
            amenity: SpatialField::new(&mut rng),
        }
    }
}

fn type_salt(ty: PropertyType) -> u64 {
    match ty {
        PropertyType::Building => 0x0b,
        PropertyType::Apartment => 0x0a,
        PropertyType::House => 0x0c,
    }
}

fn id_prefix(ty: PropertyType) -> char {
    match ty {
        PropertyType::Building => 'B',
        PropertyType::Apartment => 'A',
        PropertyType::House => 'H',
    }
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (v * f).round() / f
}

fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Generates one property type's corpus. Identical configs give identical
/// datasets; the geography depends on the seed only, so the three types
/// generated from one seed share a map.
pub fn synth_generate(config: SynthConfig, property_type: PropertyType) -> Dataset {
    assert!(config.size >= 1, "synthetic corpus needs at least one record");
    let rho = config.spatial_correlation.clamp(0.0, 1.0);
    let indep = (1.0 - rho * rho).sqrt();
    let geo = Geography::new(config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(
        config
            .seed
            .wrapping_mul(0x2545_f491_4f6c_dd1d)
            .wrapping_add(type_salt(property_type)),
    );
    let city_total: f64 = CITIES.iter().map(|c| c.3).sum();
    let first_day = NaiveDate::from_ymd_opt(2019, 1, 1).expect("valid date");
    let last_assessment = NaiveDate::from_ymd_opt(2024, 12, 31).expect("valid date");

    let mut records = Vec::with_capacity(config.size);
    for i in 0..config.size {
        let (location, district) = if rng.random_bool(URBAN_SHARE) {
            let mut pick = rng.random_range(0.0..city_total);
            let mut city = &CITIES[0];
            for c in &CITIES {
                if pick < c.3 {
                    city = c;
                    break;
                }
                pick -= c.3;
            }
            let lat = city.1 + CITY_SPREAD_DEG * std_normal(&mut rng);
            let lon = city.2 + CITY_SPREAD_DEG * std_normal(&mut rng);
            (GeoPoint { lat, lon }, city.0)
        } else {
            let lat = rng.random_range(LAT_RANGE.0..LAT_RANGE.1);
            let lon = rng.random_range(LON_RANGE.0..LON_RANGE.1);
            (GeoPoint { lat, lon }, "Rural")
        };
        let location = GeoPoint {
            lat: round_to(location.lat.clamp(LAT_RANGE.0, LAT_RANGE.1), 5),
            lon: round_to(location.lon.clamp(LON_RANGE.0, LON_RANGE.1), 5),
        };

        let quality = rho * geo.quality.at(location) + indep * std_normal(&mut rng);
        let development = rho * geo.development.at(location) + indep * std_normal(&mut rng);
        let amenity = rho * geo.amenity.at(location);

        let house_age =
            round_to((22.0 - 9.0 * development + 3.0 * std_normal(&mut rng)).clamp(0.0, 70.0), 1);

        let land_value_now = (2.6 + 0.55 * quality + 0.1 * std_normal(&mut rng)).exp();
        // Assessments are dated to the day over three years, trending up 3%
        // a year toward the latest one.
        let age_days = rng.random_range(0..ASSESSMENT_WINDOW_DAYS);
        let land_value = round_to(land_value_now * 1.03f64.powf(-(age_days as f64) / 365.0), 2);
        let announced = last_assessment - Duration::days(age_days);

        let zoning_score = quality + 0.35 * std_normal(&mut rng);
        let land_use = if development < -1.2 && zoning_score < 0.0 {
            "industrial"
        } else if zoning_score > 0.9 {
            "commercial"
        } else if zoning_score > 0.0 {
            "residential-A"
        } else if zoning_score > -0.9 {
            "residential-B"
        } else {
            "agricultural"
        };

        let (floors, area, land_ratio, parking) = match property_type {
            PropertyType::Building => {
                let floors = (12.0 + 5.0 * quality + 4.0 * std_normal(&mut rng)).clamp(6.0, 40.0);
                let area = (95f64.ln() - 0.15 * quality + 0.3 * std_normal(&mut rng)).exp();
                let ratio = rng.random_range(0.08..0.15);
                let parking = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
                (floors, area, ratio, parking)
            }
            PropertyType::Apartment => {
                let floors = (5.0 + 0.8 * quality + std_normal(&mut rng)).clamp(3.0, 7.0);
                let area = (80f64.ln() - 0.1 * quality + 0.3 * std_normal(&mut rng)).exp();
                let ratio = rng.random_range(0.12..0.25);
                let p = (0.3 - 0.1 * quality).clamp(0.05, 0.6);
                let parking = if rng.random_bool(p) { 1.0 } else { 0.0 };
                (floors, area, ratio, parking)
            }
            PropertyType::House => {
                let floors = (2.5 + 0.3 * quality + 0.8 * std_normal(&mut rng)).clamp(1.0, 5.0);
                let area = (150f64.ln() - 0.15 * quality + 0.35 * std_normal(&mut rng)).exp();
                let ratio = rng.random_range(0.5..1.2);
                let parking = (1.2 - 0.4 * quality + 0.7 * std_normal(&mut rng))
                    .round()
                    .clamp(0.0, 3.0);
                (floors, area, ratio, parking)
            }
        };
        let floors = floors.round();
        let area = round_to(area.clamp(15.0, 900.0), 1);
        let land_area = round_to(area * land_ratio, 1);
        let rooms = (area / 30.0 + 0.5 * std_normal(&mut rng)).round().clamp(1.0, 12.0);

        let base = match property_type {
            PropertyType::Building => 1.72,
            PropertyType::Apartment => 1.62,
            PropertyType::House => 1.50,
        };
        let zoning_effect = LAND_USE_EFFECTS
            .iter()
            .find(|(l, _)| *l == land_use)
            .map_or(0.0, |(_, e)| *e);
        let log_price = base
            + 0.75 * land_value_now.ln()
            + AGE_COEFFICIENT * house_age
            + 0.012 * floors
            + zoning_effect
            + 0.04 * parking
            - 0.08 * (area / 100.0).ln()
            + 0.2 * amenity
            + 0.07 * std_normal(&mut rng);
        let unit_price = round_to(log_price.exp(), 3).max(0.001);

        let day = rng.random_range(0..(6 * 365 + 1));
        let transaction_date = first_day + Duration::days(day);

        let mut p = Property::new(
            format!("{}-{i:06}", id_prefix(property_type)),
            property_type,
        );
        p.address = format!(
            "No. {}, Lane {}, Sec. {}, {district} District {}",
            rng.random_range(1..300),
            rng.random_range(1..120),
            rng.random_range(1..6),
            transaction_date.year() % 7 + 1,
        );
        p.location = Some(location);
        p.transaction_date = Some(transaction_date);
        p.unit_price = Some(unit_price);
        p.set(LATITUDE, FeatureValue::Numeric(location.lat));
        p.set(LONGITUDE, FeatureValue::Numeric(location.lon));
        p.set(HOUSE_AGE, FeatureValue::Numeric(house_age));
        p.set("total_floors", FeatureValue::Numeric(floors));
        p.set("building_area", FeatureValue::Numeric(area));
        p.set("land_area", FeatureValue::Numeric(land_area));
        p.set("parking_spaces", FeatureValue::Numeric(parking));
        p.set("rooms", FeatureValue::Numeric(rooms));
        p.set("land_use", FeatureValue::Categorical(land_use.to_string()));
        p.set(
            "announced_land_value",
            FeatureValue::Temporal {
                date: announced,
                value: land_value,
            },
        );
        records.push(p);
    }
    Dataset::new(FeatureSchema::default_schema(), property_type, records)
        .expect("generated records satisfy the default schema")
}

/// One dataset per property type, all sharing the seed's geography.
pub fn synth_corpus(config: SynthConfig) -> Vec<Dataset> {
    PropertyType::ALL
        .into_iter()
        .map(|ty| synth_generate(config, ty))
        .collect()
}
