//! POI ingestion: CSV and GeoJSON extracts into validated records.
//!
//! Rows that violate a record invariant are collected into a
//! [`RejectionReport`] rather than dropped. Feature values are kept only when
//! present, so a missing tag and an empty cell are the same thing.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geo::LonLat;

/// Abort threshold for rejected rows.
pub const MAX_REJECTION_FRACTION: f64 = 0.5;

#[derive(Debug, thiserror::Error)]
pub enum PoiError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("unparseable header in {path}: {reason}")]
    Header { path: String, reason: String },
    #[error("malformed {format} input in {path}: {reason}")]
    Malformed {
        path: String,
        format: &'static str,
        reason: String,
    },
    #[error("dataset quality: {rejected} of {total} rows rejected in {path}")]
    Quality {
        path: String,
        rejected: usize,
        total: usize,
        report: RejectionReport,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoiFormat {
    Csv,
    Geojson,
}

impl PoiFormat {
    pub fn from_path(path: &Path) -> Option<PoiFormat> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(PoiFormat::Csv),
            "geojson" | "json" => Some(PoiFormat::Geojson),
            _ => None,
        }
    }
}

impl std::str::FromStr for PoiFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(PoiFormat::Csv),
            "geojson" => Ok(PoiFormat::Geojson),
            other => Err(format!("unknown POI format `{other}` (expected csv or geojson)")),
        }
    }
}

/// Maps CSV header names onto record fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMapping {
    /// Optional; rows are numbered `row-<n>` when the column is absent.
    pub id: String,
    pub name: String,
    pub lon: String,
    pub lat: String,
    /// Feature columns. `None` treats every unmapped column as a feature.
    pub features: Option<Vec<String>>,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            id: "id".into(),
            name: "name".into(),
            lon: "lon".into(),
            lat: "lat".into(),
            features: Some(vec!["amenity".into(), "building".into(), "landuse".into()]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiRecord {
    pub id: String,
    pub name: Option<String>,
    pub lon: f64,
    pub lat: f64,
    /// Present tags only.
    pub features: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RecordViolation {
    Coordinates { lon: f64, lat: f64 },
    NoContent,
    DuplicateId(String),
    Unparseable(String),
}

impl std::fmt::Display for RecordViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RecordViolation::Coordinates { lon, lat } => {
                write!(f, "coordinate out of range (lon={lon}, lat={lat})")
            }
            RecordViolation::NoContent => write!(f, "record has neither a name nor any feature"),
            RecordViolation::DuplicateId(id) => write!(f, "duplicate id `{id}`"),
            RecordViolation::Unparseable(why) => write!(f, "unparseable row: {why}"),
        }
    }
}

impl PoiRecord {
    pub fn new(
        id: impl Into<String>,
        name: Option<String>,
        lon: f64,
        lat: f64,
        features: BTreeMap<String, String>,
    ) -> Result<Self, RecordViolation> {
        let name = name.filter(|n| !n.is_empty());
        let features: BTreeMap<_, _> = features.into_iter().filter(|(_, v)| !v.is_empty()).collect();
        if !LonLat::new(lon, lat).is_valid() || !lon.is_finite() || !lat.is_finite() {
            return Err(RecordViolation::Coordinates { lon, lat });
        }
        if name.is_none() && features.is_empty() {
            return Err(RecordViolation::NoContent);
        }
        Ok(Self {
            id: id.into(),
            name,
            lon,
            lat,
            features,
        })
    }

    pub fn position(&self) -> LonLat {
        LonLat::new(self.lon, self.lat)
    }

    pub fn feature(&self, tag: &str) -> Option<&str> {
        self.features.get(tag).map(String::as_str)
    }
}

/// An immutable, id-unique collection of POIs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PoiDataset {
    pub source: String,
    /// Feature tags the source declares, in column order.
    pub feature_tags: Vec<String>,
    records: Vec<PoiRecord>,
}

impl PoiDataset {
    /// Builds a dataset, failing on the first duplicate id.
    pub fn new(
        source: impl Into<String>,
        feature_tags: Vec<String>,
        records: Vec<PoiRecord>,
    ) -> Result<Self, RecordViolation> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(RecordViolation::DuplicateId(r.id.clone()));
            }
        }
        Ok(Self {
            source: source.into(),
            feature_tags,
            records,
        })
    }

    pub fn records(&self) -> &[PoiRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_records(self) -> Vec<PoiRecord> {
        self.records
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    /// 1-based data row (CSV) or feature index (GeoJSON).
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RejectionReport {
    pub total_rows: usize,
    pub rejections: Vec<Rejection>,
}

impl RejectionReport {
    pub fn accepted(&self) -> usize {
        self.total_rows - self.rejections.len()
    }

    /// `<row-number>\t<reason>` per line.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in &self.rejections {
            writeln!(w, "{}\t{}", r.row, r.reason)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ParsedPois {
    pub dataset: PoiDataset,
    pub rejections: RejectionReport,
}

pub fn parse_poi_file(path: &Path, format: PoiFormat, mapping: &ColumnMapping) -> Result<ParsedPois, PoiError> {
    let text = fs::read_to_string(path).map_err(|source| PoiError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let label = path.display().to_string();
    let parsed = match format {
        PoiFormat::Csv => parse_csv_str(&text, mapping, &label)?,
        PoiFormat::Geojson => parse_geojson_str(&text, &label)?,
    };
    let report = &parsed.rejections;
    if report.total_rows > 0
        && report.rejections.len() as f64 > MAX_REJECTION_FRACTION * report.total_rows as f64
    {
        return Err(PoiError::Quality {
            path: label,
            rejected: report.rejections.len(),
            total: report.total_rows,
            report: parsed.rejections,
        });
    }
    Ok(parsed)
}

struct Collector {
    seen: HashSet<String>,
    records: Vec<PoiRecord>,
    report: RejectionReport,
}

impl Collector {
    fn new() -> Self {
        Self {
            seen: HashSet::new(),
            records: Vec::new(),
            report: RejectionReport::default(),
        }
    }

    fn push(&mut self, row: usize, result: Result<PoiRecord, RecordViolation>) {
        self.report.total_rows += 1;
        let result = result.and_then(|r| {
            if self.seen.contains(&r.id) {
                Err(RecordViolation::DuplicateId(r.id))
            } else {
                Ok(r)
            }
        });
        match result {
            Ok(r) => {
                self.seen.insert(r.id.clone());
                self.records.push(r);
            }
            Err(v) => {
                log::debug!("rejecting row {row}: {v}");
                self.report.rejections.push(Rejection {
                    row,
                    reason: v.to_string(),
                });
            }
        }
    }

    fn finish(self, source: &str, feature_tags: Vec<String>) -> ParsedPois {
        ParsedPois {
            dataset: PoiDataset {
                source: source.to_string(),
                feature_tags,
                records: self.records,
            },
            rejections: self.report,
        }
    }
}

/// Parses CSV text. An empty input (no header) is an empty dataset.
pub fn parse_csv_str(text: &str, mapping: &ColumnMapping, source: &str) -> Result<ParsedPois, PoiError> {
    if text.trim().is_empty() {
        let tags = mapping.features.clone().unwrap_or_default();
        return Ok(Collector::new().finish(source, tags));
    }
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::Headers)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| PoiError::Header {
            path: source.to_string(),
            reason: e.to_string(),
        })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let header_err = |reason: String| PoiError::Header {
        path: source.to_string(),
        reason,
    };
    let lon_col = col(&mapping.lon).ok_or_else(|| header_err(format!("missing lon column `{}`", mapping.lon)))?;
    let lat_col = col(&mapping.lat).ok_or_else(|| header_err(format!("missing lat column `{}`", mapping.lat)))?;
    let id_col = col(&mapping.id);
    let name_col = col(&mapping.name);
    let feature_cols: Vec<(String, Option<usize>)> = match &mapping.features {
        Some(tags) => tags.iter().map(|t| (t.clone(), col(t))).collect(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| ![Some(lon_col), Some(lat_col), id_col, name_col].contains(&Some(*i)))
            .map(|(i, h)| (h.to_string(), Some(i)))
            .collect(),
    };

    let mut out = Collector::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                out.push(row_no, Err(RecordViolation::Unparseable(e.to_string())));
                continue;
            }
        };
        let cell = |c: Option<usize>| c.and_then(|c| row.get(c)).filter(|v| !v.is_empty());
        let coord = |c: usize, what: &str| -> Result<f64, RecordViolation> {
            let raw = cell(Some(c)).ok_or_else(|| RecordViolation::Unparseable(format!("missing {what}")))?;
            raw.trim()
                .parse::<f64>()
                .map_err(|_| RecordViolation::Unparseable(format!("{what} `{raw}` is not a number")))
        };
        let record = coord(lon_col, "lon").and_then(|lon| {
            let lat = coord(lat_col, "lat")?;
            let id = cell(id_col).map(str::to_string).unwrap_or_else(|| format!("row-{row_no}"));
            let features = feature_cols
                .iter()
                .filter_map(|(tag, c)| cell(*c).map(|v| (tag.clone(), v.to_string())))
                .collect();
            PoiRecord::new(id, cell(name_col).map(str::to_string), lon, lat, features)
        });
        out.push(row_no, record);
    }
    Ok(out.finish(source, feature_cols.into_iter().map(|(t, _)| t).collect()))
}

/// Parses a GeoJSON `FeatureCollection` of `Point` features.
pub fn parse_geojson_str(text: &str, source: &str) -> Result<ParsedPois, PoiError> {
    let malformed = |reason: String| PoiError::Malformed {
        path: source.to_string(),
        format: "GeoJSON",
        reason,
    };
    if text.trim().is_empty() {
        return Ok(Collector::new().finish(source, Vec::new()));
    }
    let root: serde_json::Value = serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
    if root.get("type").and_then(|t| t.as_str()) != Some("FeatureCollection") {
        return Err(malformed("top-level object is not a FeatureCollection".into()));
    }
    let features = root
        .get("features")
        .and_then(|f| f.as_array())
        .ok_or_else(|| malformed("missing `features` array".into()))?;

    let mut tags: Vec<String> = Vec::new();
    let mut out = Collector::new();
    for (i, feature) in features.iter().enumerate() {
        let row_no = i + 1;
        let record = geojson_feature(feature, row_no, &mut tags);
        out.push(row_no, record);
    }
    Ok(out.finish(source, tags))
}

fn geojson_feature(
    feature: &serde_json::Value,
    row_no: usize,
    tags: &mut Vec<String>,
) -> Result<PoiRecord, RecordViolation> {
    use serde_json::Value;
    let bad = |why: &str| RecordViolation::Unparseable(why.to_string());
    let geometry = feature.get("geometry").ok_or_else(|| bad("missing geometry"))?;
    if geometry.get("type").and_then(Value::as_str) != Some("Point") {
        return Err(bad("geometry is not a Point"));
    }
    let coords = geometry
        .get("coordinates")
        .and_then(Value::as_array)
        .filter(|c| c.len() >= 2)
        .ok_or_else(|| bad("Point needs [lon, lat] coordinates"))?;
    let lon = coords[0].as_f64().ok_or_else(|| bad("lon is not a number"))?;
    let lat = coords[1].as_f64().ok_or_else(|| bad("lat is not a number"))?;

    let empty = serde_json::Map::new();
    let props = feature.get("properties").and_then(Value::as_object).unwrap_or(&empty);
    let scalar = |v: &Value| match v {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        other => Some(other.to_string()),
    };
    let id = feature
        .get("id")
        .or_else(|| props.get("id"))
        .and_then(scalar)
        .unwrap_or_else(|| format!("feature-{row_no}"));
    let name = props.get("name").and_then(scalar);
    let mut features = BTreeMap::new();
    for (k, v) in props {
        if k == "name" || k == "id" {
            continue;
        }
        if !tags.iter().any(|t| t == k) {
            tags.push(k.clone());
        }
        if let Some(v) = scalar(v) {
            features.insert(k.clone(), v);
        }
    }
    PoiRecord::new(id, name, lon, lat, features)
}

/// Writes a dataset as CSV with `id,name,lon,lat` followed by the feature tags.
pub fn write_csv<W: Write>(ds: &PoiDataset, w: W) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(w);
    let mut header = vec!["id", "name", "lon", "lat"];
    header.extend(ds.feature_tags.iter().map(String::as_str));
    writer.write_record(&header)?;
    for r in ds.records() {
        let lon = r.lon.to_string();
        let lat = r.lat.to_string();
        let mut row = vec![r.id.as_str(), r.name.as_deref().unwrap_or(""), &lon, &lat];
        row.extend(ds.feature_tags.iter().map(|t| r.feature(t).unwrap_or("")));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Missing-value rates per declared feature tag.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletenessReport {
    pub records: usize,
    pub per_feature: Vec<(String, f64)>,
    /// Missing cells over all (record, feature) pairs, name excluded.
    pub overall: f64,
    pub name_missing: f64,
}

pub fn completeness_report(ds: &PoiDataset) -> CompletenessReport {
    let n = ds.len();
    let rate = |missing: usize| if n == 0 { 0.0 } else { missing as f64 / n as f64 };
    let mut total_missing = 0usize;
    let per_feature = ds
        .feature_tags
        .iter()
        .map(|tag| {
            let missing = ds.records().iter().filter(|r| r.feature(tag).is_none()).count();
            total_missing += missing;
            (tag.clone(), rate(missing))
        })
        .collect();
    let cells = n * ds.feature_tags.len();
    CompletenessReport {
        records: n,
        per_feature,
        overall: if cells == 0 { 0.0 } else { total_missing as f64 / cells as f64 },
        name_missing: rate(ds.records().iter().filter(|r| r.name.is_none()).count()),
    }
}
