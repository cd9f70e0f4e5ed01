//! CSV tables and JSON documents.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use transport_tmle_core::RawTable;

use crate::error::{Error, Result};

/// Cells that read as absent.
const MISSING_TOKENS: [&str; 3] = ["", "NA", "NaN"];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a headed CSV of numbers; empty, `NA` and `NaN` cells are absent.
pub fn read_table(path: &Path) -> Result<RawTable> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_err(path))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err(path))?;
        let line = record.position().map_or(0, |p| p.line());
        let row = record
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                if MISSING_TOKENS.contains(&cell) {
                    return Ok(None);
                }
                cell.parse::<f64>().map(Some).map_err(|_| Error::Cell {
                    path: path.to_path_buf(),
                    line,
                    column: header.get(j).cloned().unwrap_or_default(),
                    cell: cell.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(RawTable { header, rows })
}

pub fn write_table(path: &Path, table: &RawTable) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    write_table_to(BufWriter::new(file), table).map_err(csv_err(path))
}

pub fn write_table_to(out: impl Write, table: &RawTable) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(&table.header)?;
    for row in &table.rows {
        writer.write_record(row.iter().map(|c| c.map(format_cell).unwrap_or_default()))?;
    }
    writer.flush()?;
    Ok(())
}

/// Integers print without a fractional part; other values use the
/// shortest representation that round-trips.
fn format_cell(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json(value))
}

/// Adds absent columns of `expected` filled with empty cells, so a target
/// site can supply only `s` and its covariates. `s` defaults to 0.
pub fn pad_target_columns(table: &mut RawTable, expected: &[String]) {
    for name in expected {
        if table.header.contains(name) {
            continue;
        }
        let fill = if name == "s" { Some(0.0) } else { None };
        table.header.push(name.clone());
        for row in &mut table.rows {
            row.push(fill);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let table = RawTable {
            header: vec!["s".into(), "w1".into(), "y".into()],
            rows: vec![
                vec![Some(1.0), Some(0.25), Some(1.0)],
                vec![Some(0.0), Some(-3.0), None],
            ],
        };
        write_table(&path, &table).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "s,w1,y\n1,0.25,1\n0,-3,\n");
        assert_eq!(read_table(&path).unwrap(), table);
    }

    #[test]
    fn bad_cell_names_line_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "s,w1\n1,0\n0,abc\n").unwrap();
        let err = read_table(&path).unwrap_err();
        assert!(matches!(err, Error::Cell { line: 3, ref column, .. } if column == "w1"));
    }

    #[test]
    fn padding_adds_only_absent_columns() {
        let mut t = RawTable {
            header: vec!["w1".into()],
            rows: vec![vec![Some(1.0)]],
        };
        pad_target_columns(&mut t, &["s".into(), "w1".into(), "a".into()]);
        assert_eq!(t.header, ["w1", "s", "a"]);
        assert_eq!(t.rows[0], [Some(1.0), Some(0.0), None]);
    }
}
