//! File formats: the subject-level dataset CSV, the flat JSON config and
//! the result tables.
//!
//! Dataset header: `id,study,arm,y,<covariate names>`. `study` is 1 for the
//! current study and 0 for the historical one; `arm` is 1, 0 or empty
//! (masked); `y` is a number or empty (not yet observed).

pub mod config;
pub mod table;

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Arm, Dataset, Study, SubjectRecord};

pub use config::{load_config, parse_config, ConfigFile};
pub use table::Table;

/// Required leading columns of the dataset CSV.
pub const REQUIRED_COLUMNS: [&str; 4] = ["id", "study", "arm", "y"];

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path)?;
    read_dataset(file, &path.display().to_string())
}

/// Parses a dataset from any reader; `source` names it in error messages.
pub fn read_dataset<R: Read>(reader: R, source: &str) -> Result<Dataset> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: source.to_string(),
        line: line as usize,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut rows = rdr.records();

    let header = match rows.next() {
        None => return Err(parse_err(1, "missing header".into())),
        Some(h) => h.map_err(|e| csv_err(source, e))?,
    };
    let header: Vec<&str> = header.iter().collect();
    for (i, want) in REQUIRED_COLUMNS.iter().enumerate() {
        match header.get(i) {
            Some(got) if got == want => {}
            Some(got) if REQUIRED_COLUMNS.contains(got) => {
                return Err(parse_err(1, format!("column {got:?} out of place; expected {want:?}")))
            }
            Some(got) => return Err(parse_err(1, format!("unknown column {got:?}; expected {want:?}"))),
            None => return Err(parse_err(1, format!("missing required column {want:?}"))),
        }
    }
    let covariate_names: Vec<String> = header[4..].iter().map(|s| s.to_string()).collect();
    for (j, name) in covariate_names.iter().enumerate() {
        if name.is_empty() {
            return Err(parse_err(1, format!("empty name for covariate column {}", j + 5)));
        }
        if REQUIRED_COLUMNS.contains(&name.as_str()) || covariate_names[..j].contains(name) {
            return Err(parse_err(1, format!("duplicate column {name:?}")));
        }
    }

    let mut records = Vec::new();
    for row in rows {
        let row = row.map_err(|e| csv_err(source, e))?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != header.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", header.len(), row.len()),
            ));
        }
        let id = row[0].to_string();
        if id.is_empty() {
            return Err(parse_err(line, "empty id".into()));
        }
        let study = match &row[1] {
            "1" => Study::Current,
            "0" => Study::Historical,
            other => return Err(parse_err(line, format!("study must be 0 or 1, found {other:?}"))),
        };
        let arm = match (&row[2], study) {
            ("1", _) => Arm::Treated,
            ("0", _) => Arm::Control,
            ("", Study::Current) => Arm::Masked,
            ("", Study::Historical) => {
                return Err(parse_err(
                    line,
                    "historical subjects are controls; arm must be 0".into(),
                ))
            }
            (other, _) => return Err(parse_err(line, format!("arm must be 0, 1 or empty, found {other:?}"))),
        };
        let y = match &row[3] {
            "" => None,
            s => Some(number(s).map_err(|m| parse_err(line, format!("y: {m}")))?),
        };
        let x = (4..row.len())
            .map(|j| number(&row[j]).map_err(|m| parse_err(line, format!("{}: {m}", header[j]))))
            .collect::<Result<Vec<f64>>>()?;
        records.push(SubjectRecord::new(id, study, arm, x, y));
    }

    let dataset = Dataset::new(covariate_names, records);
    dataset.ensure_valid()?;
    Ok(dataset)
}

fn number(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(format!("non-finite value {s:?}")),
        Err(_) if s.is_empty() => Err("missing value".into()),
        Err(_) => Err(format!("not a number: {s:?}")),
    }
}

fn csv_err(source: &str, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        path: source.to_string(),
        line,
        message: e.to_string(),
    }
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut file = File::create(path)?;
    write_dataset(dataset, &mut file)?;
    file.flush()?;
    Ok(())
}

/// Writes the dataset CSV. Numbers use the shortest representation that
/// parses back to the same value.
pub fn write_dataset<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(writer);
    let mut header: Vec<&str> = REQUIRED_COLUMNS.to_vec();
    header.extend(dataset.covariate_names.iter().map(String::as_str));
    w.write_record(&header).map_err(io_err)?;
    for r in &dataset.records {
        let mut row = vec![
            r.id.clone(),
            match r.study {
                Study::Current => "1".into(),
                Study::Historical => "0".into(),
            },
            match r.arm {
                Arm::Treated => "1".into(),
                Arm::Control => "0".into(),
                Arm::Masked => String::new(),
            },
            r.y.map(|v| v.to_string()).unwrap_or_default(),
        ];
        row.extend(r.x.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `id,e` pairs (extra columns ignored) and returns the propensities
/// in the order of `dataset`.
pub fn load_propensities(path: impl AsRef<Path>, dataset: &Dataset) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let source = path.display().to_string();
    let parse_err = |line: u64, message: String| Error::Parse {
        path: source.clone(),
        line: line as usize,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| csv_err(&source, e))?;
    let header = rdr.headers().map_err(|e| csv_err(&source, e))?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(1, format!("missing required column {name:?}")))
    };
    let (id_col, e_col) = (col("id")?, col("e")?);
    let mut by_id = std::collections::HashMap::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_err(&source, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let e = number(&row[e_col]).map_err(|m| parse_err(line, format!("e: {m}")))?;
        if !(0.0..=1.0).contains(&e) {
            return Err(parse_err(line, format!("propensity {e} outside [0,1]")));
        }
        if by_id.insert(row[id_col].to_string(), e).is_some() {
            return Err(parse_err(line, format!("duplicate id {:?}", &row[id_col])));
        }
    }
    dataset
        .records
        .iter()
        .map(|r| {
            by_id
                .get(&r.id)
                .copied()
                .ok_or_else(|| Error::InvalidData(format!("no propensity for subject {}", r.id)))
        })
        .collect()
}

fn io_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
