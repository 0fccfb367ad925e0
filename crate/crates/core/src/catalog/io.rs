//! Catalogue files: CSV with one row per dataset and `w1..wN` week columns,
//! or a JSON array of objects carrying the history as `"weeks"`.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DataType, DatasetMetadata, DatasetRecord, UsageHistory, DEFAULT_TOTAL_WEEKS};
use crate::error::{Error, Location, Result};

const META_COLUMNS: [&str; 11] = [
    "dataset_id",
    "origin",
    "configuration",
    "file_type",
    "data_type",
    "event_type",
    "creation_week",
    "first_usage_week",
    "last_usage_week",
    "replica_size_gb",
    "replicas_on_disk",
];

/// Optional column; validated against size × replicas when present.
const TOTAL_DISK_COLUMN: &str = "total_disk_gb";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CatalogFormat {
    Csv,
    Json,
}

impl CatalogFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(CatalogFormat::Csv),
            "json" => Some(CatalogFormat::Json),
            _ => None,
        }
    }
}

impl FromStr for CatalogFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(CatalogFormat::Csv),
            "json" => Ok(CatalogFormat::Json),
            other => Err(format!(
                "unknown catalogue format `{other}` (expected csv or json)"
            )),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parses a catalogue with the default 104-week histories.
pub fn parse_catalog(path: &Path, format: CatalogFormat) -> Result<Vec<DatasetRecord>> {
    parse_catalog_weeks(path, format, DEFAULT_TOTAL_WEEKS)
}

/// Parses a catalogue whose histories must have exactly `total_weeks` points.
pub fn parse_catalog_weeks(
    path: &Path,
    format: CatalogFormat,
    total_weeks: usize,
) -> Result<Vec<DatasetRecord>> {
    let file = File::open(path).map_err(io_err(path))?;
    read_catalog(BufReader::new(file), format, total_weeks)
}

/// Parses a catalogue from any reader.
pub fn read_catalog<R: Read>(
    reader: R,
    format: CatalogFormat,
    total_weeks: usize,
) -> Result<Vec<DatasetRecord>> {
    match format {
        CatalogFormat::Csv => read_csv(reader, total_weeks),
        CatalogFormat::Json => read_json(reader, total_weeks),
    }
}

/// Writes `records` so that [`parse_catalog`] reproduces them exactly.
pub fn write_catalog(records: &[DatasetRecord], path: &Path, format: CatalogFormat) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    match format {
        CatalogFormat::Csv => write_csv(records, &mut out)?,
        CatalogFormat::Json => write_json(records, &mut out).map_err(io_err(path))?,
    }
    out.flush().map_err(io_err(path))
}

fn week_columns(total_weeks: usize) -> impl Iterator<Item = String> {
    (1..=total_weeks).map(|w| format!("w{w}"))
}

/// Column index of every field the parser needs.
struct CsvLayout {
    meta: [usize; META_COLUMNS.len()],
    total_disk: Option<usize>,
    weeks: Vec<usize>,
    width: usize,
}

impl CsvLayout {
    fn from_header(header: &csv::StringRecord, total_weeks: usize) -> Result<Self> {
        let at = |name: &str| header.iter().position(|h| h.trim() == name);
        let header_err = |field: &str, message: String| Error::Parse {
            location: Location::Line(1),
            field: field.to_string(),
            message,
        };

        let mut meta = [0; META_COLUMNS.len()];
        for (slot, name) in meta.iter_mut().zip(META_COLUMNS) {
            *slot = at(name).ok_or_else(|| header_err(name, "missing header column".into()))?;
        }

        let weeks: Vec<usize> = header
            .iter()
            .enumerate()
            .filter(|(_, h)| is_week_column(h.trim()))
            .map(|(i, _)| i)
            .collect();
        if weeks.len() != total_weeks {
            return Err(Error::WeekCount {
                location: Location::Line(1),
                expected: total_weeks,
                found: weeks.len(),
            });
        }
        for (expected, &col) in week_columns(total_weeks).zip(&weeks) {
            if header[col].trim() != expected {
                return Err(header_err(
                    &header[col],
                    format!(
                        "week columns must run w1..w{total_weeks} in order; expected `{expected}`"
                    ),
                ));
            }
        }

        Ok(Self {
            meta,
            total_disk: at(TOTAL_DISK_COLUMN),
            weeks,
            width: header.len(),
        })
    }
}

fn is_week_column(name: &str) -> bool {
    name.strip_prefix('w')
        .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
}

fn parse_field<T: FromStr>(raw: &str, field: &str, location: Location) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.trim().parse::<T>().map_err(|e| Error::Parse {
        location,
        field: field.to_string(),
        message: format!("cannot parse `{raw}`: {e}"),
    })
}

fn parse_optional<T: FromStr>(raw: &str, field: &str, location: Location) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    if raw.trim().is_empty() {
        Ok(None)
    } else {
        parse_field(raw, field, location).map(Some)
    }
}

fn parse_count(raw: &str, field: &str, location: Location) -> Result<f64> {
    let v: f64 = parse_field(raw, field, location)?;
    if !v.is_finite() || v < 0.0 {
        return Err(Error::Parse {
            location,
            field: field.to_string(),
            message: format!("usage count must be finite and non-negative, got {v}"),
        });
    }
    Ok(v)
}

/// Re-labels a record-level invariant failure with the file location it came from.
fn at_location(err: Error, location: Location) -> Error {
    match err {
        Error::Invariant {
            dataset,
            field,
            message,
        } => Error::Parse {
            location,
            field,
            message: format!("dataset `{dataset}`: {message}"),
        },
        other => other,
    }
}

fn finish_record(
    metadata: DatasetMetadata,
    counts: Vec<f64>,
    total_disk: Option<f64>,
    location: Location,
    seen: &mut HashSet<String>,
) -> Result<DatasetRecord> {
    metadata.validate().map_err(|e| at_location(e, location))?;
    if let Some(total) = total_disk {
        metadata
            .check_total_disk(total)
            .map_err(|e| at_location(e, location))?;
    }
    if !seen.insert(metadata.dataset_id.clone()) {
        return Err(Error::DuplicateId(metadata.dataset_id));
    }
    let history = UsageHistory::new(counts).map_err(|message| Error::Parse {
        location,
        field: "weeks".into(),
        message,
    })?;
    Ok(DatasetRecord { metadata, history })
}

fn read_csv<R: Read>(reader: R, total_weeks: usize) -> Result<Vec<DatasetRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut rows = rdr.records();

    let header = match rows.next() {
        Some(h) => h?,
        None => {
            return Err(Error::Parse {
                location: Location::Line(1),
                field: "header".into(),
                message: "file is empty; a header row is required".into(),
            })
        }
    };
    let layout = CsvLayout::from_header(&header, total_weeks)?;

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in rows {
        let row = row?;
        let location = Location::Line(row.position().map_or(0, |p| p.line() as usize));
        if row.len() != layout.width {
            let found = row.len().saturating_sub(layout.width - layout.weeks.len());
            return Err(Error::WeekCount {
                location,
                expected: total_weeks,
                found,
            });
        }
        let col = |i: usize| &row[layout.meta[i]];
        let metadata = DatasetMetadata {
            dataset_id: col(0).trim().to_string(),
            origin: col(1).trim().to_string(),
            configuration: col(2).trim().to_string(),
            file_type: col(3).trim().to_string(),
            data_type: parse_field(col(4), META_COLUMNS[4], location)?,
            event_type: col(5).trim().to_string(),
            creation_week: parse_field(col(6), META_COLUMNS[6], location)?,
            first_usage_week: parse_optional(col(7), META_COLUMNS[7], location)?,
            last_usage_week: parse_optional(col(8), META_COLUMNS[8], location)?,
            replica_size_gb: parse_field(col(9), META_COLUMNS[9], location)?,
            replicas_on_disk: parse_field(col(10), META_COLUMNS[10], location)?,
        };
        let total_disk = match layout.total_disk {
            Some(i) => parse_optional(&row[i], TOTAL_DISK_COLUMN, location)?,
            None => None,
        };
        let counts = layout
            .weeks
            .iter()
            .enumerate()
            .map(|(w, &i)| parse_count(&row[i], &format!("w{}", w + 1), location))
            .collect::<Result<Vec<f64>>>()?;
        out.push(finish_record(
            metadata, counts, total_disk, location, &mut seen,
        )?);
    }
    Ok(out)
}

fn opt_to_string<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn write_csv<W: Write>(records: &[DatasetRecord], out: W) -> Result<()> {
    let total_weeks = records
        .first()
        .map_or(DEFAULT_TOTAL_WEEKS, |r| r.history.len());
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let header: Vec<String> = META_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain(week_columns(total_weeks))
        .collect();
    w.write_record(&header)?;
    for r in records {
        let m = &r.metadata;
        let mut row = vec![
            m.dataset_id.clone(),
            m.origin.clone(),
            m.configuration.clone(),
            m.file_type.clone(),
            m.data_type.as_str().to_string(),
            m.event_type.clone(),
            m.creation_week.to_string(),
            opt_to_string(m.first_usage_week),
            opt_to_string(m.last_usage_week),
            // `Display` for f64 is the shortest representation that parses back exactly.
            m.replica_size_gb.to_string(),
            m.replicas_on_disk.to_string(),
        ];
        row.extend(r.history.counts().iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonRecord {
    dataset_id: String,
    origin: String,
    configuration: String,
    file_type: String,
    data_type: DataType,
    event_type: String,
    creation_week: i32,
    first_usage_week: Option<i32>,
    last_usage_week: Option<i32>,
    replica_size_gb: f64,
    replicas_on_disk: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    total_disk_gb: Option<f64>,
    weeks: Vec<f64>,
}

fn read_json<R: Read>(reader: R, total_weeks: usize) -> Result<Vec<DatasetRecord>> {
    let entries: Vec<JsonRecord> = serde_json::from_reader(reader)?;
    let mut seen = HashSet::new();
    entries
        .into_iter()
        .enumerate()
        .map(|(i, e)| {
            let location = Location::Entry(i + 1);
            if e.weeks.len() != total_weeks {
                return Err(Error::WeekCount {
                    location,
                    expected: total_weeks,
                    found: e.weeks.len(),
                });
            }
            let metadata = DatasetMetadata {
                dataset_id: e.dataset_id,
                origin: e.origin,
                configuration: e.configuration,
                file_type: e.file_type,
                data_type: e.data_type,
                event_type: e.event_type,
                creation_week: e.creation_week,
                first_usage_week: e.first_usage_week,
                last_usage_week: e.last_usage_week,
                replica_size_gb: e.replica_size_gb,
                replicas_on_disk: e.replicas_on_disk,
            };
            finish_record(metadata, e.weeks, e.total_disk_gb, location, &mut seen)
        })
        .collect()
}

fn write_json<W: Write>(records: &[DatasetRecord], mut out: W) -> std::io::Result<()> {
    // One object per line keeps large catalogues diffable.
    out.write_all(b"[")?;
    for (i, r) in records.iter().enumerate() {
        let m = &r.metadata;
        let entry = JsonRecord {
            dataset_id: m.dataset_id.clone(),
            origin: m.origin.clone(),
            configuration: m.configuration.clone(),
            file_type: m.file_type.clone(),
            data_type: m.data_type,
            event_type: m.event_type.clone(),
            creation_week: m.creation_week,
            first_usage_week: m.first_usage_week,
            last_usage_week: m.last_usage_week,
            replica_size_gb: m.replica_size_gb,
            replicas_on_disk: m.replicas_on_disk,
            total_disk_gb: None,
            weeks: r.history.counts().to_vec(),
        };
        out.write_all(if i == 0 { b"\n" } else { b",\n" })?;
        serde_json::to_writer(&mut out, &entry)?;
    }
    out.write_all(b"\n]\n")
}
