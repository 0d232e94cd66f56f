//! Tab-separated feature tables: one header row, then one row per survivor.
//!
//! Leading columns are `frame_id`, `box_id`, `iou`, `tp`; the feature columns
//! follow in the table's order. Floats use the shortest representation that
//! round-trips, so reading back is bit-exact.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{FeatureRow, FeatureTable};

const FIXED_COLUMNS: [&str; 4] = ["frame_id", "box_id", "iou", "tp"];

pub fn write_feature_table(path: &Path, table: &FeatureTable) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let header: Vec<&str> = FIXED_COLUMNS
        .iter()
        .copied()
        .chain(table.names.iter().map(String::as_str))
        .collect();
    writeln!(w, "{}", header.join("\t")).map_err(io)?;
    for row in &table.rows {
        if row.frame_id.contains(['\t', '\n']) {
            return Err(Error::validation(format!("frame id {:?} contains a tab or newline", row.frame_id)));
        }
        write!(w, "{}\t{}\t{}\t{}", row.frame_id, row.box_id, row.iou, u8::from(row.tp)).map_err(io)?;
        for v in &row.values {
            write!(w, "\t{v}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a table; with `expected` set, the feature columns must match it exactly.
pub fn read_feature_table(path: &Path, expected: Option<&[String]>) -> Result<FeatureTable> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(l) => l.map_err(|e| Error::io(path, e))?,
        None => return Err(Error::validation(format!("{}: missing header row", path.display()))),
    };
    let cols: Vec<&str> = header.split('\t').collect();
    if cols.len() < FIXED_COLUMNS.len() || cols[..4] != FIXED_COLUMNS {
        return Err(Error::validation(format!(
            "{}: header must start with {}",
            path.display(),
            FIXED_COLUMNS.join(", ")
        )));
    }
    let names: Vec<String> = cols[4..].iter().map(|s| s.to_string()).collect();
    if let Some(exp) = expected {
        if let Some(missing) = exp.iter().find(|e| !names.contains(e)) {
            return Err(Error::validation(format!(
                "{}: {} feature columns, expected {}; missing column {missing:?}",
                path.display(),
                names.len(),
                exp.len()
            )));
        }
        if names != exp {
            return Err(Error::validation(format!(
                "{}: feature columns are not in the expected order",
                path.display()
            )));
        }
    }

    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let ctx = || format!("{}:{lineno}", path.display());
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != cols.len() {
            return Err(Error::validation(format!(
                "{}: {} columns, header has {}",
                ctx(),
                fields.len(),
                cols.len()
            )));
        }
        let num = |j: usize| -> Result<f64> {
            let v: f64 = fields[j]
                .parse()
                .map_err(|_| Error::validation(format!("{}: column {:?} is not a number", ctx(), cols[j])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::validation(format!("{}: column {:?} is not finite", ctx(), cols[j])))
            }
        };
        let box_id = fields[1]
            .parse()
            .map_err(|_| Error::validation(format!("{}: box_id is not an integer", ctx())))?;
        let tp = match fields[3] {
            "0" => false,
            "1" => true,
            _ => return Err(Error::validation(format!("{}: tp must be 0 or 1", ctx()))),
        };
        rows.push(FeatureRow {
            frame_id: fields[0].to_string(),
            box_id,
            iou: num(2)?,
            tp,
            values: (4..fields.len()).map(num).collect::<Result<_>>()?,
        });
    }
    Ok(FeatureTable::new(names, rows))
}
