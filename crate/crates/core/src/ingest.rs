//! Corpus loading and persistence.
//!
//! CSV conventions: an empty cell is Missing, dates are ISO-8601, numbers use
//! a decimal point, and a temporal cell is written `value@YYYY-MM-DD`.
//!
//! On disk a data directory looks like:
//!
//! ```text
//! <root>/schema.json
//! <root>/datasets/<type>.csv
//! <root>/stats/<type>.stats
//! <root>/models/<type>.model
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::domain::{
    validate_property, FeatureKind, FeatureSchema, FeatureValue, Property, PropertyType,
};
use crate::stats::{compute_stats, NormalizationStats};

pub const STATS_FORMAT: &str = "valuate-stats";
pub const STATS_VERSION: u32 = 1;

const ID: &str = "id";
const TYPE: &str = "property_type";
const ADDRESS: &str = "address";
const DATE: &str = "transaction_date";
const PRICE: &str = "unit_price";

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("dataset for {0} has no records")]
    EmptyDataset(PropertyType),
    #[error("record {id}: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("schema hash mismatch in {path}: file has {found}, expected {expected}")]
    SchemaMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("unsupported file format in {path}: {detail}")]
    Format { path: PathBuf, detail: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// All records of one property type, each with a known unit price, plus the
/// statistics computed over them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: FeatureSchema,
    property_type: PropertyType,
    records: Vec<Property>,
    stats: NormalizationStats,
}

impl Dataset {
    pub fn new(
        schema: FeatureSchema,
        property_type: PropertyType,
        records: Vec<Property>,
    ) -> Result<Self, IngestError> {
        Self::check(&schema, property_type, &records)?;
        let stats = compute_stats(&schema, &records);
        Ok(Self {
            schema,
            property_type,
            records,
            stats,
        })
    }

    /// Builds a dataset around previously persisted statistics.
    pub fn with_stats(
        schema: FeatureSchema,
        property_type: PropertyType,
        records: Vec<Property>,
        stats: NormalizationStats,
    ) -> Result<Self, IngestError> {
        Self::check(&schema, property_type, &records)?;
        if stats.schema_hash != schema.hash() {
            return Err(IngestError::SchemaMismatch {
                path: PathBuf::from("<stats>"),
                expected: schema.hash(),
                found: stats.schema_hash,
            });
        }
        Ok(Self {
            schema,
            property_type,
            records,
            stats,
        })
    }

    fn check(
        schema: &FeatureSchema,
        property_type: PropertyType,
        records: &[Property],
    ) -> Result<(), IngestError> {
        if records.is_empty() {
            return Err(IngestError::EmptyDataset(property_type));
        }
        for r in records {
            if r.property_type != property_type {
                return Err(IngestError::InvalidRecord {
                    id: r.id.clone(),
                    reason: format!("type {} in a {property_type} dataset", r.property_type),
                });
            }
            if r.unit_price.is_none() {
                return Err(IngestError::InvalidRecord {
                    id: r.id.clone(),
                    reason: "unit_price is required".into(),
                });
            }
            if let Some(v) = validate_property(schema, r).first() {
                return Err(IngestError::InvalidRecord {
                    id: r.id.clone(),
                    reason: v.to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn property_type(&self) -> PropertyType {
        self.property_type
    }

    pub fn records(&self) -> &[Property] {
        &self.records
    }

    pub fn stats(&self) -> &NormalizationStats {
        &self.stats
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_records(self) -> Vec<Property> {
        self.records
    }

    /// Unit prices in record order.
    pub fn targets(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| r.unit_price.expect("dataset records carry a price"))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectedRow {
    /// 1-based line number in the file, header included.
    pub line: u64,
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub datasets: BTreeMap<PropertyType, Dataset>,
    pub rejects: Vec<RejectedRow>,
}

fn parse_cell(kind: FeatureKind, cell: &str) -> Result<FeatureValue, String> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(FeatureValue::Missing);
    }
    match kind {
        FeatureKind::Numeric => cell
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(FeatureValue::Numeric)
            .ok_or_else(|| format!("`{cell}` is not a number")),
        FeatureKind::Categorical => Ok(FeatureValue::Categorical(cell.to_string())),
        FeatureKind::Temporal => {
            let (value, date) = cell
                .split_once('@')
                .ok_or_else(|| format!("`{cell}` is not of the form value@YYYY-MM-DD"))?;
            let value = value
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("`{value}` is not a number"))?;
            let date = NaiveDate::parse_from_str(date.trim(), "%Y-%m-%d")
                .map_err(|e| format!("bad date `{date}`: {e}"))?;
            Ok(FeatureValue::Temporal { date, value })
        }
    }
}

fn format_cell(value: &FeatureValue) -> String {
    match value {
        FeatureValue::Numeric(v) => v.to_string(),
        FeatureValue::Categorical(s) => s.clone(),
        FeatureValue::Temporal { date, value } => format!("{value}@{}", date.format("%Y-%m-%d")),
        FeatureValue::Missing => String::new(),
    }
}

/// Reads a corpus and partitions it by property type. Rows that fail to
/// parse or validate are collected in `rejects`.
pub fn load_csv(path: &Path, schema: &FeatureSchema) -> Result<LoadedCorpus, IngestError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    read_csv(file, schema)
}

pub fn read_csv<R: Read>(reader: R, schema: &FeatureSchema) -> Result<LoadedCorpus, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);

    let required = |name: &str| column(name).ok_or(IngestError::MissingColumn(name.into()));
    let id_col = required(ID)?;
    let type_col = required(TYPE)?;
    let price_col = required(PRICE)?;
    let address_col = column(ADDRESS);
    let date_col = column(DATE);
    let mut feature_cols = Vec::with_capacity(schema.len());
    for decl in schema.features() {
        match column(&decl.name) {
            Some(c) => feature_cols.push((decl, Some(c))),
            None if decl.required_by_avm => {
                return Err(IngestError::MissingColumn(decl.name.clone()))
            }
            None => feature_cols.push((decl, None)),
        }
    }

    let mut by_type: BTreeMap<PropertyType, Vec<Property>> = BTreeMap::new();
    let mut rejects = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let id = row.get(id_col).unwrap_or_default().trim().to_string();
        let reject = |reason: String| RejectedRow {
            line,
            id: id.clone(),
            reason,
        };
        let parsed = (|| -> Result<Property, String> {
            let property_type: PropertyType = row
                .get(type_col)
                .unwrap_or_default()
                .parse()
                .map_err(|e: crate::domain::UnknownPropertyType| e.to_string())?;
            let price_cell = row.get(price_col).unwrap_or_default().trim();
            if price_cell.is_empty() {
                return Err("unit_price is required".into());
            }
            let unit_price = price_cell
                .parse::<f64>()
                .map_err(|_| format!("unit_price `{price_cell}` is not a number"))?;
            let transaction_date = match date_col.and_then(|c| row.get(c)).map(str::trim) {
                None | Some("") => None,
                Some(d) => Some(
                    NaiveDate::parse_from_str(d, "%Y-%m-%d")
                        .map_err(|e| format!("bad transaction_date `{d}`: {e}"))?,
                ),
            };
            let mut p = Property::new(id.clone(), property_type);
            p.address = address_col
                .and_then(|c| row.get(c))
                .unwrap_or_default()
                .to_string();
            p.transaction_date = transaction_date;
            p.unit_price = Some(unit_price);
            for (decl, col) in &feature_cols {
                let value = match col {
                    Some(c) => parse_cell(decl.kind, row.get(*c).unwrap_or_default())
                        .map_err(|e| format!("{}: {e}", decl.name))?,
                    None => FeatureValue::Missing,
                };
                // Absent and Missing mean the same; keep the map sparse.
                if !value.is_missing() {
                    p.features.insert(decl.name.clone(), value);
                }
            }
            p.location = p.location_from_features();
            if let Some(v) = validate_property(schema, &p).first() {
                return Err(v.to_string());
            }
            Ok(p)
        })();
        match parsed {
            Ok(p) => by_type.entry(p.property_type).or_default().push(p),
            Err(reason) => rejects.push(reject(reason)),
        }
    }

    let mut datasets = BTreeMap::new();
    for (ty, records) in by_type {
        datasets.insert(ty, Dataset::new(schema.clone(), ty, records)?);
    }
    Ok(LoadedCorpus { datasets, rejects })
}

pub fn write_csv<W: Write>(writer: W, schema: &FeatureSchema, records: &[Property]) -> Result<(), IngestError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec![ID, TYPE, ADDRESS, DATE, PRICE];
    header.extend(schema.names());
    wtr.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.id.clone(),
            r.property_type.to_string(),
            r.address.clone(),
            r.transaction_date
                .map(|d| d.format("%Y-%m-%d").to_string())
                .unwrap_or_default(),
            r.unit_price.map(|v| v.to_string()).unwrap_or_default(),
        ];
        row.extend(schema.names().map(|n| format_cell(r.feature(n))));
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|source| IngestError::Io {
        path: PathBuf::from("<csv writer>"),
        source,
    })?;
    Ok(())
}

pub fn save_csv(path: &Path, dataset: &Dataset) -> Result<(), IngestError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let file = fs::File::create(path).map_err(io_err(path))?;
    write_csv(std::io::BufWriter::new(file), dataset.schema(), dataset.records())
}

#[derive(Serialize, Deserialize)]
struct StatsFile {
    format: String,
    version: u32,
    schema_hash: String,
    property_type: PropertyType,
    stats: NormalizationStats,
}

/// Paths of the persisted artifacts under one root directory.
#[derive(Debug, Clone)]
pub struct DataDir {
    root: PathBuf,
}

impl DataDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn schema_path(&self) -> PathBuf {
        self.root.join("schema.json")
    }

    pub fn dataset_path(&self, ty: PropertyType) -> PathBuf {
        self.root.join("datasets").join(format!("{ty}.csv"))
    }

    pub fn stats_path(&self, ty: PropertyType) -> PathBuf {
        self.root.join("stats").join(format!("{ty}.stats"))
    }

    pub fn model_path(&self, ty: PropertyType) -> PathBuf {
        self.root.join("models").join(format!("{ty}.model"))
    }

    pub fn save_schema(&self, schema: &FeatureSchema) -> Result<(), IngestError> {
        write_json(&self.schema_path(), schema)
    }

    /// Reads `schema.json`, or the default schema when the file is absent.
    pub fn load_schema(&self) -> Result<FeatureSchema, IngestError> {
        let path = self.schema_path();
        if !path.exists() {
            return Ok(FeatureSchema::default_schema());
        }
        read_json(&path)
    }

    /// Writes the dataset CSV and its statistics.
    pub fn save_dataset(&self, dataset: &Dataset) -> Result<(), IngestError> {
        save_csv(&self.dataset_path(dataset.property_type()), dataset)?;
        self.save_stats(dataset.property_type(), dataset.stats())
    }

    pub fn save_stats(&self, ty: PropertyType, stats: &NormalizationStats) -> Result<(), IngestError> {
        let file = StatsFile {
            format: STATS_FORMAT.into(),
            version: STATS_VERSION,
            schema_hash: stats.schema_hash.clone(),
            property_type: ty,
            stats: stats.clone(),
        };
        write_json(&self.stats_path(ty), &file)
    }

    pub fn load_stats(&self, ty: PropertyType, schema: &FeatureSchema) -> Result<NormalizationStats, IngestError> {
        let path = self.stats_path(ty);
        let file: StatsFile = read_json(&path)?;
        if file.format != STATS_FORMAT || file.version != STATS_VERSION {
            return Err(IngestError::Format {
                path,
                detail: format!("{} v{}", file.format, file.version),
            });
        }
        let expected = schema.hash();
        if file.schema_hash != expected || file.stats.schema_hash != expected {
            return Err(IngestError::SchemaMismatch {
                path,
                expected,
                found: file.schema_hash,
            });
        }
        Ok(file.stats)
    }

    /// Loads a dataset of one type. Persisted stats are used when present;
    /// otherwise they are computed from the records.
    pub fn load_dataset(&self, ty: PropertyType, schema: &FeatureSchema) -> Result<(Dataset, Vec<RejectedRow>), IngestError> {
        let mut corpus = load_csv(&self.dataset_path(ty), schema)?;
        let dataset = corpus
            .datasets
            .remove(&ty)
            .ok_or(IngestError::EmptyDataset(ty))?;
        let dataset = if self.stats_path(ty).exists() {
            let stats = self.load_stats(ty, schema)?;
            Dataset::with_stats(schema.clone(), ty, dataset.into_records(), stats)?
        } else {
            dataset
        };
        Ok((dataset, corpus.rejects))
    }

    /// Property types with a dataset file present.
    pub fn available_types(&self) -> Vec<PropertyType> {
        PropertyType::ALL
            .into_iter()
            .filter(|&t| self.dataset_path(t).exists())
            .collect()
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IngestError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|source| IngestError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text).map_err(io_err(path))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IngestError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| IngestError::Json {
        path: path.to_path_buf(),
        source,
    })
}
