//! Reading response matrices, Q-matrices and saved fits.
//!
//! Responses are CSV with a header row. The first column holds examinee ids
//! and the remaining header cells name the items. Cells are `0`, `1` or the
//! missing token (default `NA`; an empty cell is also missing). Parse errors
//! cite the 1-based data row (the header is not counted) and the 1-based
//! item column (the id column is not counted).

use std::fs::File;
use std::io::Read;
use std::path::Path;

use dcm_core::em::FitResult;
use dcm_core::{DcmError, Family, ResponseMatrix};
use log::info;

use crate::error::{CliError, Result};

pub const DEFAULT_MISSING_TOKEN: &str = "NA";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadOptions {
    pub missing_token: String,
}

impl Default for ReadOptions {
    fn default() -> Self {
        ReadOptions {
            missing_token: DEFAULT_MISSING_TOKEN.into(),
        }
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

pub fn ingest_responses(path: &Path, options: &ReadOptions) -> Result<ResponseMatrix> {
    let data = read_responses(open(path)?, &path.display().to_string(), options)?;
    info!(
        "read {}: {} examinees x {} items, {} missing cells",
        path.display(),
        data.n_examinees(),
        data.n_items(),
        data.missing_count()
    );
    Ok(data)
}

/// Parses a response CSV; `name` labels error locations.
pub fn read_responses<R: Read>(reader: R, name: &str, options: &ReadOptions) -> Result<ResponseMatrix> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = csv.records();
    let parse_err = |row: usize, column: usize, message: String| CliError::Parse {
        path: name.to_string(),
        row,
        column,
        message,
    };
    let header = match records.next() {
        None => return Err(DcmError::Input(format!("{name}: empty file")).into()),
        Some(r) => r.map_err(|e| parse_err(0, 0, e.to_string()))?,
    };
    if header.len() < 2 {
        return Err(CliError::Format {
            path: name.into(),
            message: "header needs an id column and at least one item".into(),
        });
    }
    let item_ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let n_items = item_ids.len();
    let mut examinee_ids = Vec::new();
    let mut cells = Vec::new();
    for (r, record) in records.enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| parse_err(row, 0, e.to_string()))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() != n_items + 1 {
            return Err(parse_err(
                row,
                record.len().saturating_sub(1),
                format!("expected {} item cells, found {}", n_items, record.len().saturating_sub(1)),
            ));
        }
        examinee_ids.push(record[0].to_string());
        for (c, cell) in record.iter().skip(1).enumerate() {
            cells.push(match cell {
                "0" => Some(false),
                "1" => Some(true),
                t if t.is_empty() || t == options.missing_token => None,
                other => {
                    return Err(parse_err(row, c + 1, format!("cell '{other}' is not 0, 1 or '{}'", options.missing_token)));
                }
            });
        }
    }
    if examinee_ids.is_empty() {
        return Err(DcmError::Input(format!("{name}: no data rows")).into());
    }
    Ok(ResponseMatrix::new(examinee_ids, item_ids, cells)?)
}

/// Attribute structure read from a Q-matrix file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QMatrix {
    pub attribute_names: Vec<String>,
    /// Attribute index per response item, in response-file order.
    pub item_attribute: Vec<usize>,
}

/// Reads a Q-matrix CSV (`item,attr1,attr2,...` then one 0/1 row per item)
/// and aligns it with `item_ids`. Every item must measure exactly one
/// attribute.
pub fn ingest_qmatrix(path: &Path, item_ids: &[String]) -> Result<QMatrix> {
    read_qmatrix(open(path)?, &path.display().to_string(), item_ids)
}

pub fn read_qmatrix<R: Read>(reader: R, name: &str, item_ids: &[String]) -> Result<QMatrix> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = csv.records();
    let format_err = |message: String| CliError::Format {
        path: name.to_string(),
        message,
    };
    let header = match records.next() {
        None => return Err(DcmError::Input(format!("{name}: empty file")).into()),
        Some(r) => r.map_err(|e| format_err(e.to_string()))?,
    };
    let attribute_names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if attribute_names.is_empty() {
        return Err(format_err("Q-matrix header lists no attributes".into()));
    }
    let mut assigned: Vec<Option<usize>> = vec![None; item_ids.len()];
    for (r, record) in records.enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| format_err(e.to_string()))?;
        if record.len() != attribute_names.len() + 1 {
            return Err(CliError::Parse {
                path: name.into(),
                row,
                column: 0,
                message: format!("expected {} attribute cells", attribute_names.len()),
            });
        }
        let item = &record[0];
        let Some(pos) = item_ids.iter().position(|id| id == item) else {
            return Err(format_err(format!("item '{item}' is not in the response file")));
        };
        let mut attrs = Vec::new();
        for (c, cell) in record.iter().skip(1).enumerate() {
            match cell {
                "0" => {}
                "1" => attrs.push(c),
                other => {
                    return Err(CliError::Parse {
                        path: name.into(),
                        row,
                        column: c + 1,
                        message: format!("Q-matrix cell '{other}' is not 0 or 1"),
                    })
                }
            }
        }
        if attrs.len() != 1 {
            return Err(DcmError::Input(format!(
                "item '{item}' measures {} attributes; only simple structure is supported",
                attrs.len()
            ))
            .into());
        }
        if assigned[pos].replace(attrs[0]).is_some() {
            return Err(format_err(format!("item '{item}' listed twice")));
        }
    }
    let item_attribute = assigned
        .into_iter()
        .enumerate()
        .map(|(i, a)| a.ok_or_else(|| format_err(format!("item '{}' missing from the Q-matrix", item_ids[i]))))
        .collect::<Result<Vec<_>>>()?;
    Ok(QMatrix {
        attribute_names,
        item_attribute,
    })
}

/// Loads a fit written by `fit` or `compare`. A `compare` report holds two
/// fits; `family` picks one.
pub fn load_fit(path: &Path, family: Option<Family>) -> Result<FitResult> {
    let mut text = String::new();
    open(path)?
        .read_to_string(&mut text)
        .map_err(|e| CliError::io(path, e))?;
    parse_fit(&text, &path.display().to_string(), family)
}

pub fn parse_fit(text: &str, name: &str, family: Option<Family>) -> Result<FitResult> {
    let format_err = |message: String| CliError::Format {
        path: name.to_string(),
        message,
    };
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| format_err(e.to_string()))?;
    let decode = |v: &serde_json::Value| -> Result<FitResult> {
        let fit: FitResult = serde_json::from_value(v.clone()).map_err(|e| format_err(e.to_string()))?;
        fit.params.validate_shape(&fit.spec)?;
        Ok(fit)
    };
    if let Some(fit) = value.get("fit") {
        let fit = decode(fit)?;
        if let Some(f) = family {
            if fit.spec.family != f {
                return Err(DcmError::ModelMismatch(format!(
                    "{name} holds a {} fit, {} was requested",
                    fit.spec.family.as_str(),
                    f.as_str()
                ))
                .into());
            }
        }
        return Ok(fit);
    }
    if let Some(fits) = value.get("fits").and_then(|f| f.as_array()) {
        let Some(family) = family else {
            return Err(CliError::Usage(format!("{name} holds several fits; pass --model to choose one")));
        };
        for entry in fits {
            let fit = decode(entry.get("fit").unwrap_or(entry))?;
            if fit.spec.family == family {
                return Ok(fit);
            }
        }
        return Err(DcmError::ModelMismatch(format!("{name} has no {} fit", family.as_str())).into());
    }
    decode(&value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str) -> Result<ResponseMatrix> {
        read_responses(text.as_bytes(), "t.csv", &ReadOptions::default())
    }

    #[test]
    fn small_matrix() {
        let m = read("id,a,b\nx,0,1\ny,1,1\nz,0,0\n").unwrap();
        assert_eq!((m.n_examinees(), m.n_items()), (3, 2));
        assert_eq!(m.item_ids(), ["a", "b"]);
        assert_eq!(m.get(0, 1), Some(true));
    }

    #[test]
    fn bad_cell_coordinates() {
        let text = "id,i1,i2,i3\na,0,0,0\nb,0,0,0\nc,0,0,0\nd,0,0,0\ne,0,1,2\n";
        match read(text).unwrap_err() {
            CliError::Parse { row, column, .. } => assert_eq!((row, column), (5, 3)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_tokens() {
        let m = read("id,a,b\nx,NA,1\ny,1,\n").unwrap();
        assert_eq!(m.missing_count(), 2);
        assert_eq!(m.get(0, 0), None);
        let opts = ReadOptions {
            missing_token: "-9".into(),
        };
        let m = read_responses("id,a\nx,-9\ny,1\n".as_bytes(), "t", &opts);
        assert!(m.is_err());
        let m = read_responses("id,a,b\nx,-9,1\n".as_bytes(), "t", &opts).unwrap();
        assert_eq!(m.missing_count(), 1);
    }

    #[test]
    fn input_errors() {
        assert!(matches!(read(""), Err(CliError::Model(DcmError::Input(_)))));
        assert!(matches!(read("id,a\nx,1\nx,0\n"), Err(CliError::Model(DcmError::Input(_)))));
        assert!(matches!(read("id,a,b\nx,1\n"), Err(CliError::Parse { row: 1, .. })));
    }

    #[test]
    fn qmatrix_alignment() {
        let ids: Vec<String> = ["i1", "i2", "i3"].iter().map(|s| s.to_string()).collect();
        let q = read_qmatrix("item,A,B\ni3,0,1\ni1,1,0\ni2,0,1\n".as_bytes(), "q", &ids).unwrap();
        assert_eq!(q.item_attribute, vec![0, 1, 1]);
        assert!(read_qmatrix("item,A,B\ni1,1,1\ni2,0,1\ni3,0,1\n".as_bytes(), "q", &ids).is_err());
        assert!(read_qmatrix("item,A,B\ni1,1,0\ni2,0,1\n".as_bytes(), "q", &ids).is_err());
    }
}
