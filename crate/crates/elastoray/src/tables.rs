//! CSV tables: header row, '.' decimal point, '\n' line ends.

use std::path::Path;

use crate::error::CliError;

/// Shortest round-trip text of a float, with exponent notation at the extremes.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn encode(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::Format(format!("csv: {e}"));
    w.write_record(header).map_err(fail)?;
    for r in rows {
        if r.len() != header.len() {
            return Err(CliError::Format(format!("csv row has {} fields, header has {}", r.len(), header.len())));
        }
        w.write_record(r).map_err(fail)?;
    }
    w.into_inner().map_err(|e| CliError::Format(format!("csv: {e}")))
}

pub fn write(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    crate::error::write(path, &encode(header, rows)?)
}

/// A parsed table whose header matched the expected columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Column `name` parsed as floats.
    pub fn floats(&self, name: &str, origin: &Path) -> Result<Vec<f64>, CliError> {
        let c = self
            .column(name)
            .ok_or_else(|| CliError::Format(format!("{}: missing column {name:?}", origin.display())))?;
        self.rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                row[c].parse::<f64>().map_err(|_| {
                    CliError::Format(format!("{}: row {}, column {name}: bad number {:?}", origin.display(), r + 2, row[c]))
                })
            })
            .collect()
    }
}

pub fn read(path: &Path, required: &[&str]) -> Result<Table, CliError> {
    let bytes = crate::error::read(path)?;
    let fail = |e: csv::Error| CliError::Format(format!("{}: {e}", path.display()));
    let mut r = csv::ReaderBuilder::new().from_reader(bytes.as_slice());
    let columns: Vec<String> = r.headers().map_err(fail)?.iter().map(str::to_owned).collect();
    for want in required {
        if !columns.iter().any(|c| c == want) {
            return Err(CliError::Format(format!("{}: missing column {want:?}", path.display())));
        }
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(fail)?.iter().map(str::to_owned).collect());
    }
    Ok(Table { columns, rows })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRow {
    pub ray_id: usize,
    pub value: f64,
    pub length: f64,
}

pub const SAMPLE_COLUMNS: [&str; 3] = ["ray_id", "value", "length"];

pub fn write_samples(path: &Path, samples: &[SampleRow]) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> =
        samples.iter().map(|s| vec![s.ray_id.to_string(), num(s.value), num(s.length)]).collect();
    write(path, &SAMPLE_COLUMNS, &rows)
}

pub fn read_samples(path: &Path) -> Result<Vec<SampleRow>, CliError> {
    let t = read(path, &SAMPLE_COLUMNS)?;
    let values = t.floats("value", path)?;
    let lengths = t.floats("length", path)?;
    let c = t.column("ray_id").expect("checked");
    t.rows
        .iter()
        .enumerate()
        .map(|(r, row)| {
            let ray_id = row[c]
                .parse::<usize>()
                .map_err(|_| CliError::Format(format!("{}: row {}: bad ray_id {:?}", path.display(), r + 2, row[c])))?;
            Ok(SampleRow { ray_id, value: values[r], length: lengths[r] })
        })
        .collect()
}
