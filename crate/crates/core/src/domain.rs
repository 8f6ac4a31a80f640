//! Core vocabulary: property types, feature schemas, feature values,
//! properties and neighbor configurations.
//!
//! Every type here is immutable once built and serializes to the canonical
//! JSON encoding used on the wire, in prompts, and in `predict` input files.
//! In that encoding a property's features are an object keyed by feature
//! name, and a missing value is `null`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::de::{self, Deserializer};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Default number of neighbors returned by a search.
pub const DEFAULT_K: usize = 6;

/// Feature names the default schema uses for the geographic coordinates.
pub const LATITUDE: &str = "latitude";
pub const LONGITUDE: &str = "longitude";
pub const HOUSE_AGE: &str = "house_age";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropertyType {
    Building,
    Apartment,
    House,
}

impl PropertyType {
    pub const ALL: [PropertyType; 3] = [
        PropertyType::Building,
        PropertyType::Apartment,
        PropertyType::House,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PropertyType::Building => "building",
            PropertyType::Apartment => "apartment",
            PropertyType::House => "house",
        }
    }

    /// Display label with a leading capital, as used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            PropertyType::Building => "Building",
            PropertyType::Apartment => "Apartment",
            PropertyType::House => "House",
        }
    }
}

impl fmt::Display for PropertyType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown property type `{0}` (expected building, apartment or house)")]
pub struct UnknownPropertyType(pub String);

impl FromStr for PropertyType {
    type Err = UnknownPropertyType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "building" => Ok(PropertyType::Building),
            "apartment" => Ok(PropertyType::Apartment),
            "house" => Ok(PropertyType::House),
            _ => Err(UnknownPropertyType(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Categorical,
    Temporal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDecl {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default)]
    pub units: String,
    #[serde(default)]
    pub required_by_avm: bool,
}

impl FeatureDecl {
    pub fn new(name: &str, kind: FeatureKind, units: &str, required_by_avm: bool) -> Self {
        Self {
            name: name.to_string(),
            kind,
            units: units.to_string(),
            required_by_avm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchemaError {
    #[error("duplicate feature name `{0}`")]
    DuplicateFeature(String),
    #[error("invalid feature name `{0}`")]
    InvalidName(String),
    #[error("schema declares no features")]
    Empty,
}

/// Ordered feature declarations. The position of a feature is its index in
/// every derived vector, so the order is part of the schema's identity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FeatureSchema {
    features: Vec<FeatureDecl>,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureDecl>) -> Result<Self, SchemaError> {
        if features.is_empty() {
            return Err(SchemaError::Empty);
        }
        let mut seen = HashSet::new();
        for decl in &features {
            let valid = !decl.name.is_empty()
                && decl
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
            if !valid {
                return Err(SchemaError::InvalidName(decl.name.clone()));
            }
            if !seen.insert(decl.name.as_str()) {
                return Err(SchemaError::DuplicateFeature(decl.name.clone()));
            }
        }
        Ok(Self { features })
    }

    /// The schema shipped with the synthetic corpus. Coordinates are plain
    /// numeric features so that location takes part in neighbor distance.
    pub fn default_schema() -> Self {
        use FeatureKind::*;
        Self::new(vec![
            FeatureDecl::new(LATITUDE, Numeric, "degrees", true),
            FeatureDecl::new(LONGITUDE, Numeric, "degrees", true),
            FeatureDecl::new(HOUSE_AGE, Numeric, "years", true),
            FeatureDecl::new("total_floors", Numeric, "floors", true),
            FeatureDecl::new("building_area", Numeric, "square meters", true),
            FeatureDecl::new("land_area", Numeric, "square meters", true),
            FeatureDecl::new("parking_spaces", Numeric, "spaces", true),
            FeatureDecl::new("rooms", Numeric, "rooms", true),
            FeatureDecl::new("land_use", Categorical, "zoning designation", true),
            FeatureDecl::new(
                "announced_land_value",
                Temporal,
                "thousand NTD per square meter",
                true,
            ),
        ])
        .expect("default schema is well formed")
    }

    pub fn features(&self) -> &[FeatureDecl] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&FeatureDecl> {
        self.features.iter().find(|d| d.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|d| d.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|d| d.name.as_str())
    }

    /// Numeric features in schema order; these span the distance space.
    pub fn numeric_features(&self) -> impl Iterator<Item = &FeatureDecl> {
        self.features
            .iter()
            .filter(|d| d.kind == FeatureKind::Numeric)
    }

    pub fn numeric_count(&self) -> usize {
        self.numeric_features().count()
    }

    /// SHA-256 over the ordered (name, kind) pairs, hex encoded. Units and
    /// flags are presentation and do not change feature positions.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for decl in &self.features {
            hasher.update(decl.name.as_bytes());
            hasher.update([0u8]);
            hasher.update(kind_tag(decl.kind).as_bytes());
            hasher.update([0u8]);
        }
        hex::encode(hasher.finalize())
    }
}

fn kind_tag(kind: FeatureKind) -> &'static str {
    match kind {
        FeatureKind::Numeric => "numeric",
        FeatureKind::Categorical => "categorical",
        FeatureKind::Temporal => "temporal",
    }
}

impl<'de> Deserialize<'de> for FeatureSchema {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            features: Vec<FeatureDecl>,
        }
        let raw = Raw::deserialize(deserializer)?;
        FeatureSchema::new(raw.features).map_err(de::Error::custom)
    }
}

/// A single feature value. `Missing` is a real variant, never a sentinel.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum FeatureValue {
    Numeric(f64),
    Categorical(String),
    Temporal { date: NaiveDate, value: f64 },
    #[default]
    Missing,
}

impl FeatureValue {
    pub fn is_missing(&self) -> bool {
        matches!(self, FeatureValue::Missing)
    }

    pub fn kind(&self) -> Option<FeatureKind> {
        match self {
            FeatureValue::Numeric(_) => Some(FeatureKind::Numeric),
            FeatureValue::Categorical(_) => Some(FeatureKind::Categorical),
            FeatureValue::Temporal { .. } => Some(FeatureKind::Temporal),
            FeatureValue::Missing => None,
        }
    }

    /// The real value behind a numeric or temporal feature.
    pub fn as_real(&self) -> Option<f64> {
        match self {
            FeatureValue::Numeric(v) => Some(*v),
            FeatureValue::Temporal { value, .. } => Some(*value),
            _ => None,
        }
    }

    pub fn as_label(&self) -> Option<&str> {
        match self {
            FeatureValue::Categorical(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for FeatureValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureValue::Numeric(v) => write!(f, "{}", trim_float(*v)),
            FeatureValue::Categorical(s) => f.write_str(s),
            FeatureValue::Temporal { date, value } => {
                write!(f, "{} (as of {date})", trim_float(*value))
            }
            FeatureValue::Missing => f.write_str("missing"),
        }
    }
}

/// Renders a float with at most two decimals and no trailing zeros.
pub fn trim_float(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

impl Serialize for FeatureValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            FeatureValue::Numeric(v) => serializer.serialize_f64(*v),
            FeatureValue::Categorical(s) => serializer.serialize_str(s),
            FeatureValue::Temporal { date, value } => {
                let mut map = serializer.serialize_map(Some(2))?;
                map.serialize_entry("date", &date.format("%Y-%m-%d").to_string())?;
                map.serialize_entry("value", value)?;
                map.end()
            }
            FeatureValue::Missing => serializer.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for FeatureValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Label(String),
            Dated { date: NaiveDate, value: f64 },
            Null(()),
        }
        Ok(match Option::<Raw>::deserialize(deserializer)? {
            None | Some(Raw::Null(())) => FeatureValue::Missing,
            Some(Raw::Number(v)) => FeatureValue::Numeric(v),
            Some(Raw::Label(s)) => FeatureValue::Categorical(s),
            Some(Raw::Dated { date, value }) => FeatureValue::Temporal { date, value },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }
}

static MISSING: FeatureValue = FeatureValue::Missing;

/// One real-estate record. Features absent from the map are Missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Property {
    pub id: String,
    pub property_type: PropertyType,
    #[serde(default)]
    pub address: String,
    #[serde(default)]
    pub location: Option<GeoPoint>,
    #[serde(default)]
    pub transaction_date: Option<NaiveDate>,
    #[serde(default)]
    pub features: BTreeMap<String, FeatureValue>,
    /// Thousand NTD per square meter.
    #[serde(default)]
    pub unit_price: Option<f64>,
}

impl Property {
    pub fn new(id: impl Into<String>, property_type: PropertyType) -> Self {
        Self {
            id: id.into(),
            property_type,
            address: String::new(),
            location: None,
            transaction_date: None,
            features: BTreeMap::new(),
            unit_price: None,
        }
    }

    pub fn feature(&self, name: &str) -> &FeatureValue {
        self.features.get(name).unwrap_or(&MISSING)
    }

    pub fn set(&mut self, name: &str, value: FeatureValue) {
        self.features.insert(name.to_string(), value);
    }

    pub fn with(mut self, name: &str, value: FeatureValue) -> Self {
        self.set(name, value);
        self
    }

    /// Names of schema features whose value is Missing on this property.
    pub fn missing_features<'a>(&'a self, schema: &'a FeatureSchema) -> Vec<&'a str> {
        schema
            .names()
            .filter(|name| self.feature(name).is_missing())
            .collect()
    }

    /// Coordinates read from the latitude/longitude features, if both exist.
    pub fn location_from_features(&self) -> Option<GeoPoint> {
        match (self.feature(LATITUDE), self.feature(LONGITUDE)) {
            (FeatureValue::Numeric(lat), FeatureValue::Numeric(lon)) => Some(GeoPoint {
                lat: *lat,
                lon: *lon,
            }),
            _ => None,
        }
    }

    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("property serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Checks a property against the schema and the record invariants.
/// Returns every violation found; an empty list means the property is valid.
pub fn validate_property(schema: &FeatureSchema, p: &Property) -> Vec<Violation> {
    let mut violations = Vec::new();
    if p.id.is_empty() {
        violations.push(Violation::new("id", "must not be empty"));
    }
    if let Some(price) = p.unit_price {
        if !(price.is_finite() && price > 0.0) {
            violations.push(Violation::new(
                "unit_price",
                format!("must be strictly positive, got {price}"),
            ));
        }
    }
    if let Some(loc) = p.location {
        if !(-90.0..=90.0).contains(&loc.lat) {
            violations.push(Violation::new(
                "location.lat",
                format!("latitude {} outside [-90, 90]", loc.lat),
            ));
        }
        if !(-180.0..=180.0).contains(&loc.lon) {
            violations.push(Violation::new(
                "location.lon",
                format!("longitude {} outside [-180, 180]", loc.lon),
            ));
        }
    }
    for (name, value) in &p.features {
        let Some(decl) = schema.get(name) else {
            violations.push(Violation::new(name, "feature not declared in schema"));
            continue;
        };
        if let Some(kind) = value.kind() {
            if kind != decl.kind {
                violations.push(Violation::new(
                    name,
                    format!("expected {} value, got {}", kind_tag(decl.kind), kind_tag(kind)),
                ));
                continue;
            }
        }
        match value {
            FeatureValue::Numeric(v) | FeatureValue::Temporal { value: v, .. }
                if !v.is_finite() =>
            {
                violations.push(Violation::new(name, "value must be finite"));
            }
            FeatureValue::Categorical(s) if s.is_empty() => {
                violations.push(Violation::new(name, "label must not be empty"));
            }
            _ => {}
        }
    }
    violations
}

/// A per-feature acceptance condition for neighbor candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Constraint {
    Labels { labels: BTreeSet<String> },
    /// Inclusive numeric bounds; an absent bound is open.
    Range {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lower: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        upper: Option<f64>,
    },
}

impl Constraint {
    pub fn range(lower: f64, upper: f64) -> Self {
        Constraint::Range {
            lower: Some(lower),
            upper: Some(upper),
        }
    }

    pub fn labels<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Constraint::Labels {
            labels: labels.into_iter().map(Into::into).collect(),
        }
    }

    /// Missing values never satisfy a constraint.
    pub fn accepts(&self, value: &FeatureValue) -> bool {
        match (self, value) {
            (_, FeatureValue::Missing) => false,
            (Constraint::Range { lower, upper }, v) => match v.as_real() {
                Some(x) => lower.is_none_or(|l| x >= l) && upper.is_none_or(|u| x <= u),
                None => false,
            },
            (Constraint::Labels { labels }, FeatureValue::Categorical(s)) => labels.contains(s),
            (Constraint::Labels { .. }, _) => false,
        }
    }
}

/// User-set neighbor conditions plus the neighbor count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyConfiguration {
    #[serde(default)]
    pub constraints: BTreeMap<String, Constraint>,
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_k() -> usize {
    DEFAULT_K
}

impl Default for PropertyConfiguration {
    fn default() -> Self {
        Self::unconstrained(DEFAULT_K)
    }
}

impl PropertyConfiguration {
    pub fn unconstrained(k: usize) -> Self {
        Self {
            constraints: BTreeMap::new(),
            k,
        }
    }

    pub fn with(mut self, feature: &str, constraint: Constraint) -> Self {
        self.constraints.insert(feature.to_string(), constraint);
        self
    }

    pub fn validate(&self, schema: &FeatureSchema) -> Vec<Violation> {
        let mut violations = Vec::new();
        if self.k == 0 {
            violations.push(Violation::new("k", "must be at least 1"));
        }
        for (name, constraint) in &self.constraints {
            let Some(decl) = schema.get(name) else {
                violations.push(Violation::new(name, "feature not declared in schema"));
                continue;
            };
            match constraint {
                Constraint::Range { lower, upper } => {
                    if decl.kind == FeatureKind::Categorical {
                        violations.push(Violation::new(
                            name,
                            "numeric range on a categorical feature",
                        ));
                    }
                    if lower.is_some_and(|l| !l.is_finite())
                        || upper.is_some_and(|u| !u.is_finite())
                    {
                        violations.push(Violation::new(name, "bounds must be finite"));
                    }
                    if let (Some(l), Some(u)) = (lower, upper) {
                        if l > u {
                            violations.push(Violation::new(
                                name,
                                format!("lower bound {l} exceeds upper bound {u}"),
                            ));
                        }
                    }
                }
                Constraint::Labels { .. } => {
                    if decl.kind != FeatureKind::Categorical {
                        violations.push(Violation::new(
                            name,
                            "label set on a non-categorical feature",
                        ));
                    }
                }
            }
        }
        violations
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Property {
        Property {
            id: "a-1".into(),
            property_type: PropertyType::Apartment,
            address: "1 Main Rd".into(),
            location: Some(GeoPoint {
                lat: 25.03,
                lon: 121.56,
            }),
            transaction_date: NaiveDate::from_ymd_opt(2023, 5, 1),
            features: BTreeMap::new(),
            unit_price: Some(31.5),
        }
        .with(HOUSE_AGE, FeatureValue::Numeric(12.0))
        .with("land_use", FeatureValue::Categorical("residential-A".into()))
        .with(
            "announced_land_value",
            FeatureValue::Temporal {
                date: NaiveDate::from_ymd_opt(2022, 1, 1).unwrap(),
                value: 40.25,
            },
        )
        .with("rooms", FeatureValue::Missing)
    }

    #[test]
    fn conforming_property_is_valid() {
        let schema = FeatureSchema::default_schema();
        assert!(validate_property(&schema, &sample()).is_empty());
    }

    #[test]
    fn negative_price_is_reported() {
        let schema = FeatureSchema::default_schema();
        let mut p = sample();
        p.unit_price = Some(-5.0);
        let v = validate_property(&schema, &p);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "unit_price");
    }

    #[test]
    fn undeclared_feature_is_named() {
        let schema = FeatureSchema::default_schema();
        let p = sample().with("swimming_pool", FeatureValue::Numeric(1.0));
        let v = validate_property(&schema, &p);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "swimming_pool");
    }

    #[test]
    fn kind_mismatch_and_bad_coordinates() {
        let schema = FeatureSchema::default_schema();
        let mut p = sample().with(HOUSE_AGE, FeatureValue::Categorical("old".into()));
        p.location = Some(GeoPoint {
            lat: 95.0,
            lon: 200.0,
        });
        let fields: Vec<_> = validate_property(&schema, &p)
            .into_iter()
            .map(|v| v.field)
            .collect();
        assert_eq!(fields, vec!["location.lat", "location.lon", HOUSE_AGE]);
    }

    #[test]
    fn duplicate_schema_names_rejected() {
        let err = FeatureSchema::new(vec![
            FeatureDecl::new("a", FeatureKind::Numeric, "", false),
            FeatureDecl::new("a", FeatureKind::Categorical, "", false),
        ])
        .unwrap_err();
        assert_eq!(err, SchemaError::DuplicateFeature("a".into()));
    }

    #[test]
    fn schema_hash_tracks_order() {
        let a = FeatureSchema::new(vec![
            FeatureDecl::new("x", FeatureKind::Numeric, "", false),
            FeatureDecl::new("y", FeatureKind::Numeric, "", false),
        ])
        .unwrap();
        let b = FeatureSchema::new(vec![
            FeatureDecl::new("y", FeatureKind::Numeric, "", false),
            FeatureDecl::new("x", FeatureKind::Numeric, "", false),
        ])
        .unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), a.clone().hash());
    }

    #[test]
    fn missing_encodes_as_null() {
        let json = sample().to_canonical_json();
        assert!(json.contains("\"rooms\":null"), "{json}");
        assert!(json.contains("\"announced_land_value\":{\"date\":\"2022-01-01\",\"value\":40.25}"));
        let back: Property = serde_json::from_str(&json).unwrap();
        assert_eq!(back, sample());
    }

    #[test]
    fn configuration_checks() {
        let schema = FeatureSchema::default_schema();
        let ok = PropertyConfiguration::default()
            .with(HOUSE_AGE, Constraint::range(0.0, 10.0))
            .with("land_use", Constraint::labels(["commercial"]));
        assert!(ok.validate(&schema).is_empty());

        let bad = PropertyConfiguration::unconstrained(0)
            .with(HOUSE_AGE, Constraint::range(10.0, 5.0))
            .with("land_use", Constraint::range(0.0, 1.0));
        let fields: Vec<_> = bad.validate(&schema).into_iter().map(|v| v.field).collect();
        assert_eq!(fields, vec!["k", HOUSE_AGE, "land_use"]);
    }

    #[test]
    fn configuration_json_shape() {
        let cfg: PropertyConfiguration = serde_json::from_str(
            r#"{"constraints":{"house_age":{"lower":0,"upper":10},"land_use":{"labels":["commercial"]}}}"#,
        )
        .unwrap();
        assert_eq!(cfg.k, DEFAULT_K);
        assert_eq!(cfg.constraints[HOUSE_AGE], Constraint::range(0.0, 10.0));
        assert_eq!(cfg.constraints["land_use"], Constraint::labels(["commercial"]));
        let blank: PropertyConfiguration = serde_json::from_str("{}").unwrap();
        assert_eq!(blank, PropertyConfiguration::default());
    }

    #[test]
    fn missing_fails_every_constraint() {
        assert!(!Constraint::range(0.0, 10.0).accepts(&FeatureValue::Missing));
        assert!(Constraint::Range {
            lower: None,
            upper: None
        }
        .accepts(&FeatureValue::Numeric(3.0)));
        assert!(!Constraint::labels(["A"]).accepts(&FeatureValue::Missing));
    }
}
