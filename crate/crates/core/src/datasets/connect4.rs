//! UCI Connect-4 reader.
//!
//! Each line holds 42 board cells (`x`, `o` or `b`, columns a..g bottom to
//! top) followed by the outcome for the first player. Cells are ordinally
//! encoded `b → 0`, `x → 1`, `o → 2`; outcomes map `win → 0`, `loss → 1`,
//! `draw → 2`.

use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use super::{DatasetError, LabeledDataset};
use crate::linalg::Matrix;

pub const CONNECT4_FEATURES: usize = 42;
pub const CONNECT4_CLASSES: [&str; 3] = ["win", "loss", "draw"];

fn cell_value(symbol: &str) -> Option<f64> {
    match symbol {
        "b" => Some(0.0),
        "x" => Some(1.0),
        "o" => Some(2.0),
        _ => None,
    }
}

fn class_id(token: &str) -> Option<usize> {
    CONNECT4_CLASSES.iter().position(|&c| c == token)
}

/// Parses Connect-4 records from any reader. Blank lines are skipped.
pub fn parse_connect4<R: Read>(reader: R) -> Result<LabeledDataset, DatasetError> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| DatasetError::Io {
            path: "<connect-4 input>".into(),
            source,
        })?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != CONNECT4_FEATURES + 1 {
            return Err(DatasetError::ColumnCount {
                line: line_no,
                expected: CONNECT4_FEATURES + 1,
                found: fields.len(),
            });
        }
        for (col, sym) in fields[..CONNECT4_FEATURES].iter().enumerate() {
            let v = cell_value(sym).ok_or_else(|| DatasetError::UnknownSymbol {
                line: line_no,
                column: col + 1,
                symbol: sym.to_string(),
            })?;
            features.push(v);
        }
        let token = fields[CONNECT4_FEATURES];
        let label = class_id(token).ok_or_else(|| DatasetError::UnknownClass {
            line: line_no,
            token: token.to_string(),
        })?;
        labels.push(label);
    }
    let n = labels.len();
    LabeledDataset::new(
        Matrix::from_vec(n, CONNECT4_FEATURES, features),
        labels,
        CONNECT4_CLASSES.len(),
        CONNECT4_CLASSES.iter().map(|s| s.to_string()).collect(),
    )
}

pub fn load_connect4(data_path: impl AsRef<Path>) -> Result<LabeledDataset, DatasetError> {
    let path = data_path.as_ref();
    let file = fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_connect4(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(cells: &[&str], class: &str) -> String {
        let mut v: Vec<&str> = cells.to_vec();
        v.push(class);
        v.join(",")
    }

    #[test]
    fn empty_board_draw() {
        let line = row(&["b"; 42], "draw");
        let ds = parse_connect4(line.as_bytes()).unwrap();
        assert_eq!(ds.len(), 1);
        assert!(ds.features().row(0).iter().all(|&v| v == 0.0));
        assert_eq!(ds.labels(), &[2]);
        assert_eq!(ds.n_features(), 42);
    }

    #[test]
    fn encodes_symbols_and_classes() {
        let mut cells = ["b"; 42];
        cells[0] = "x";
        cells[1] = "o";
        let text = format!("{}\n{}\n", row(&cells, "win"), row(&cells, "loss"));
        let ds = parse_connect4(text.as_bytes()).unwrap();
        assert_eq!(&ds.features().row(0)[..3], &[1.0, 2.0, 0.0]);
        assert_eq!(ds.labels(), &[0, 1]);
        assert_eq!(ds.class_names(), &["win", "loss", "draw"]);
    }

    #[test]
    fn unknown_symbol_names_line_and_column() {
        let mut cells = ["b"; 42];
        cells[2] = "q";
        let text = format!("{}\n{}\n", row(&["b"; 42], "win"), row(&cells, "win"));
        let err = parse_connect4(text.as_bytes()).unwrap_err();
        match err {
            DatasetError::UnknownSymbol { line, column, symbol } => {
                assert_eq!((line, column, symbol.as_str()), (2, 3, "q"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn unknown_class_and_column_count() {
        let err = parse_connect4(row(&["b"; 42], "tie").as_bytes()).unwrap_err();
        assert!(matches!(err, DatasetError::UnknownClass { line: 1, .. }));
        let err = parse_connect4(row(&["b"; 41], "win").as_bytes()).unwrap_err();
        assert!(matches!(err, DatasetError::ColumnCount { line: 1, found: 42, .. }));
    }
}
