use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::stratify::ClinicalRecord;

/// `case_id` column followed by numeric columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub columns: Vec<String>,
    pub ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureTable {
    pub fn new(prefix: &str, ids: Vec<String>, rows: Vec<Vec<f64>>) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        Self {
            columns: (0..d).map(|i| format!("{prefix}{i}")).collect(),
            ids,
            rows,
        }
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|i| i == id)
    }
}

/// Shortest round-trip form, with an exponent for very large or small values.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        },
        _ => Error::Format(format!("{}: {e}", path.display())),
    }
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

pub fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

pub fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_features(path: &Path) -> Result<FeatureTable> {
    let mut r = reader(path)?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.get(0) != Some("case_id") || header.len() < 2 {
        return Err(Error::Format(format!(
            "{}: expected header `case_id,<feature columns>`",
            path.display()
        )));
    }
    let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let id = rec.get(0).unwrap_or_default().to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::Format(format!(
                "{}: duplicate case_id `{id}`",
                path.display()
            )));
        }
        let values = rec
            .iter()
            .skip(1)
            .map(|v| {
                v.trim().parse::<f64>().map_err(|_| {
                    Error::Format(format!(
                        "{} line {}: `{v}` is not a number",
                        path.display(),
                        line + 2
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        ids.push(id);
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::Format(format!("{}: no rows", path.display())));
    }
    Ok(FeatureTable { columns, ids, rows })
}

pub fn write_features(path: &Path, table: &FeatureTable) -> Result<()> {
    let mut header = vec!["case_id".to_string()];
    header.extend(table.columns.iter().cloned());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_rows(
        path,
        &header,
        table.ids.iter().zip(&table.rows).map(|(id, row)| {
            std::iter::once(id.clone()).chain(row.iter().map(|&v| num(v)))
        }),
    )
}

pub fn read_clinical(path: &Path) -> Result<Vec<ClinicalRecord>> {
    let mut r = reader(path)?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let (Some(ci), Some(ti), Some(ei)) = (col("case_id"), col("time_days"), col("event")) else {
        return Err(Error::Format(format!(
            "{}: expected header `case_id,time_days,event[,label]`",
            path.display()
        )));
    };
    let li = col("label");
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let bad = |what: &str| {
            Error::Format(format!("{} line {}: invalid {what}", path.display(), line + 2))
        };
        let id = rec.get(ci).ok_or_else(|| bad("case_id"))?.to_string();
        let time: f64 = rec
            .get(ti)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| bad("time_days"))?;
        if !(time >= 0.0) || !time.is_finite() {
            return Err(bad("time_days (must be a finite non-negative number)"));
        }
        let event = match rec.get(ei).map(str::trim) {
            Some("1") => true,
            Some("0") => false,
            _ => return Err(bad("event (expected 0 or 1)")),
        };
        let label = li
            .and_then(|i| rec.get(i))
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string);
        if !seen.insert(id.clone()) {
            return Err(Error::Format(format!(
                "{}: duplicate case_id `{id}`",
                path.display()
            )));
        }
        out.push(ClinicalRecord {
            case_id: id,
            time,
            event,
            label,
        });
    }
    Ok(out)
}

pub fn write_clinical(path: &Path, records: &[ClinicalRecord]) -> Result<()> {
    write_rows(
        path,
        &["case_id", "time_days", "event", "label"],
        records.iter().map(|r| {
            [
                r.case_id.clone(),
                num(r.time),
                (r.event as u8).to_string(),
                r.label.clone().unwrap_or_default(),
            ]
        }),
    )
}

/// Ids present in exactly one of the two lists, sorted.
pub fn orphaned_ids<'a>(a: impl IntoIterator<Item = &'a str>, b: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let a: HashSet<&str> = a.into_iter().collect();
    let b: HashSet<&str> = b.into_iter().collect();
    let mut out: Vec<String> = a.symmetric_difference(&b).map(|s| s.to_string()).collect();
    out.sort();
    out
}
