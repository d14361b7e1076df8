use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{Dataset, GenerationManifest, SweepRecord, SCHEMA_VERSION};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 4] = ["height_mm", "frequency_hz", "s21_db", "label"];

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line());
    match err.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => match line {
            Some(line) => Error::MalformedRow {
                line,
                message: format!("{other:?}"),
            },
            None => Error::Schema(format!("{}: {other:?}", path.display())),
        },
    }
}

/// Compare a header line with the expected column list, naming any
/// unexpected or missing column.
pub(crate) fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let found: Vec<&str> = found.iter().map(str::trim).collect();
    if found == expected {
        return Ok(());
    }
    let extra: Vec<&str> = found.iter().copied().filter(|c| !expected.contains(c)).collect();
    let missing: Vec<&str> = expected.iter().copied().filter(|c| !found.contains(c)).collect();
    let detail = if !extra.is_empty() {
        format!("unexpected column(s) {}", extra.join(", "))
    } else if !missing.is_empty() {
        format!("missing column(s) {}", missing.join(", "))
    } else {
        format!("columns out of order: {}", found.join(","))
    };
    Err(Error::Schema(format!(
        "{detail}; expected header `{}`",
        expected.join(",")
    )))
}

/// Read all data rows of a CSV file whose header must equal `expected`.
/// Returns `(line number, fields)` per row.
pub(crate) fn read_rows(path: &Path, expected: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    check_header(&header, expected)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != expected.len() {
            return Err(Error::MalformedRow {
                line,
                message: format!("expected {} fields, found {}", expected.len(), record.len()),
            });
        }
        rows.push((line, record));
    }
    Ok(rows)
}

/// Empty cells are missing values (NaN).
pub(crate) fn parse_f64(field: &str, line: u64, column: &str) -> Result<f64> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(f64::NAN);
    }
    field.parse().map_err(|_| Error::MalformedRow {
        line,
        message: format!("`{field}` is not a number in column {column}"),
    })
}

pub(crate) fn parse_label(field: &str, line: u64) -> Result<Option<usize>> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(None);
    }
    field.parse().map(Some).map_err(|_| Error::MalformedRow {
        line,
        message: format!("`{field}` is not a class label"),
    })
}

pub(crate) fn format_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        // shortest representation that round-trips exactly
        format!("{v}")
    }
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Write `height_mm,frequency_hz,s21_db,label` rows. Missing values become
/// empty cells.
pub fn export_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(out, "{}", CSV_HEADER.join(",")).map_err(io)?;
    for r in &dataset.records {
        writeln!(
            out,
            "{},{},{},{}",
            format_f64(r.height_mm),
            format_f64(r.frequency_hz),
            format_f64(r.s21_db),
            r.label.map(|l| l.to_string()).unwrap_or_default()
        )
        .map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Read a sweep CSV. The sidecar manifest, when present, is attached.
pub fn import_csv(path: &Path) -> Result<Dataset> {
    let rows = read_rows(path, &CSV_HEADER)?;
    let records = rows
        .iter()
        .map(|(line, row)| {
            Ok(SweepRecord {
                height_mm: parse_f64(&row[0], *line, CSV_HEADER[0])?,
                frequency_hz: parse_f64(&row[1], *line, CSV_HEADER[1])?,
                s21_db: parse_f64(&row[2], *line, CSV_HEADER[2])?,
                label: parse_label(&row[3], *line)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest_path = manifest_path_for(path);
    let manifest = if manifest_path.exists() {
        Some(read_manifest(&manifest_path)?)
    } else {
        None
    };
    Ok(Dataset {
        records,
        schema_version: SCHEMA_VERSION.to_owned(),
        manifest,
    })
}

/// `data/sweep.csv` -> `data/sweep.manifest.json`.
pub fn manifest_path_for(csv_path: &Path) -> PathBuf {
    let stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_owned());
    csv_path.with_file_name(format!("{stem}.manifest.json"))
}

pub fn write_manifest(manifest: &GenerationManifest, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, manifest)
        .map_err(|e| Error::Serialization(e.to_string()))?;
    writeln!(out).and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<GenerationManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: GenerationManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    let known = [SCHEMA_VERSION, crate::features::RESONANCE_SCHEMA_VERSION];
    if !known.contains(&manifest.schema_version.as_str()) {
        return Err(Error::Schema(format!(
            "{}: unknown schema {}",
            path.display(),
            manifest.schema_version
        )));
    }
    Ok(manifest)
}
