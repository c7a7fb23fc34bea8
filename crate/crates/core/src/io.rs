//! Plain-text formats: delimited data matrices, upper-triangle edge lists,
//! cluster maps and dendrograms. Node indices are 0-based throughout.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::netstats::Graph;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: line {line}: missing value in column {column}")]
    MissingValue { path: String, line: usize, column: usize },
    #[error("{path}: line {line}: cannot parse {value:?} as a number")]
    BadNumber { path: String, line: usize, value: String },
    #[error("{path}: line {line}: expected {expected} fields, found {found}")]
    Ragged { path: String, line: usize, expected: usize, found: usize },
    #[error("{path}: no data rows")]
    Empty { path: String },
    #[error("{path}: {msg}")]
    Invalid { path: String, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    pub names: Option<Vec<String>>,
    pub x: DMatrix<f64>,
}

fn delimiter_for(path: &Path) -> u8 {
    match path.extension().and_then(|e| e.to_str()) {
        Some("tsv") | Some("tab") | Some("txt") => b'\t',
        _ => b',',
    }
}

fn is_missing(field: &str) -> bool {
    let f = field.trim();
    f.is_empty() || f.eq_ignore_ascii_case("na") || f.eq_ignore_ascii_case("nan") || f == "?"
}

/// Reads an `n x p` numeric table. The first row is treated as a header
/// when any of its fields is not a number. Missing values are rejected.
pub fn read_data(path: &Path) -> Result<DataTable, IoError> {
    let text = fs::read(path).map_err(|source| IoError::Io { path: path.display().to_string(), source })?;
    parse_data(&text, delimiter_for(path), &path.display().to_string())
}

pub fn parse_data(bytes: &[u8], delimiter: u8, label: &str) -> Result<DataTable, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut names = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|source| IoError::Csv { path: label.to_string(), source })?;
        let line = idx + 1;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if idx == 0 && rec.iter().any(|f| !is_missing(f) && f.parse::<f64>().is_err()) {
            names = Some(rec.iter().map(str::to_string).collect::<Vec<_>>());
            width = Some(rec.len());
            continue;
        }
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(IoError::Ragged { path: label.to_string(), line, expected: w, found: rec.len() });
        }
        let mut row = Vec::with_capacity(w);
        for (c, f) in rec.iter().enumerate() {
            if is_missing(f) {
                return Err(IoError::MissingValue { path: label.to_string(), line, column: c + 1 });
            }
            let v: f64 = f
                .parse()
                .map_err(|_| IoError::BadNumber { path: label.to_string(), line, value: f.to_string() })?;
            if !v.is_finite() {
                return Err(IoError::BadNumber { path: label.to_string(), line, value: f.to_string() });
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(IoError::Empty { path: label.to_string() });
    }
    let (n, p) = (rows.len(), rows[0].len());
    let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
    Ok(DataTable { names, x })
}

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let err = |source| IoError::Io { path: path.display().to_string(), source };
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(err)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp).map_err(err)?;
        f.write_all(bytes).map_err(err)?;
        f.sync_all().map_err(err)?;
    }
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        err(e)
    })
}

/// Shortest round-trip representation of a float.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn data_to_csv(x: &DMatrix<f64>, names: Option<&[String]>) -> String {
    let mut out = String::new();
    let p = x.ncols();
    match names {
        Some(n) => out.push_str(&n.join(",")),
        None => out.push_str(&(0..p).map(|j| format!("V{}", j + 1)).collect::<Vec<_>>().join(",")),
    }
    out.push('\n');
    for i in 0..x.nrows() {
        let row: Vec<String> = (0..p).map(|j| fmt_f64(x[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Edge list `i\tj\tvalue` over the upper triangle; the value is taken from
/// `values` when given, else 1.
pub fn edges_to_tsv(graph: &Graph, values: Option<&DMatrix<f64>>) -> String {
    let mut out = String::from("i\tj\tvalue\n");
    for (i, j) in graph.edges() {
        let v = values.map_or(1.0, |m| m[(i, j)]);
        out.push_str(&format!("{i}\t{j}\t{}\n", fmt_f64(v)));
    }
    out
}

/// Nonzero upper-triangle entries of a symmetric matrix, diagonal included.
pub fn matrix_to_tsv(m: &DMatrix<f64>) -> String {
    let mut out = String::from("i\tj\tvalue\n");
    let p = m.nrows();
    for i in 0..p {
        for j in i..p {
            if m[(i, j)] != 0.0 {
                out.push_str(&format!("{i}\t{j}\t{}\n", fmt_f64(m[(i, j)])));
            }
        }
    }
    out
}

fn parse_triples(text: &str, label: &str) -> Result<Vec<(usize, usize, f64)>, IoError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (idx == 0 && line.starts_with('i')) {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() < 2 {
            return Err(IoError::Ragged { path: label.to_string(), line: idx + 1, expected: 3, found: f.len() });
        }
        let bad = |v: &str| IoError::BadNumber { path: label.to_string(), line: idx + 1, value: v.to_string() };
        let i = f[0].parse().map_err(|_| bad(f[0]))?;
        let j = f[1].parse().map_err(|_| bad(f[1]))?;
        let v = match f.get(2) {
            Some(s) => s.parse().map_err(|_| bad(s))?,
            None => 1.0,
        };
        out.push((i, j, v));
    }
    Ok(out)
}

/// Reads an edge list written by [`edges_to_tsv`].
pub fn parse_edges(text: &str, p: usize, label: &str) -> Result<Graph, IoError> {
    let triples = parse_triples(text, label)?;
    Graph::from_edges(p, triples.into_iter().filter(|t| t.0 != t.1).map(|t| (t.0, t.1)))
        .map_err(|e| IoError::Invalid { path: label.to_string(), msg: e.to_string() })
}

/// Reads a symmetric matrix written by [`matrix_to_tsv`].
pub fn parse_matrix(text: &str, p: usize, label: &str) -> Result<DMatrix<f64>, IoError> {
    let mut m = DMatrix::zeros(p, p);
    for (i, j, v) in parse_triples(text, label)? {
        if i >= p || j >= p {
            return Err(IoError::Invalid { path: label.to_string(), msg: format!("index ({i}, {j}) out of range for p = {p}") });
        }
        m[(i, j)] = v;
        m[(j, i)] = v;
    }
    Ok(m)
}

pub fn clusters_to_tsv(assignment: &[usize]) -> String {
    let mut out = String::from("node\tcluster\n");
    for (i, c) in assignment.iter().enumerate() {
        out.push_str(&format!("{i}\t{c}\n"));
    }
    out
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Io { path: path.display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_detection_and_missing_values() {
        let t = parse_data(b"a,b\n1,2\n3,4\n", b',', "x").unwrap();
        assert_eq!(t.names, Some(vec!["a".into(), "b".into()]));
        assert_eq!(t.x, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let t = parse_data(b"1\t2\n3\t4\n", b'\t', "x").unwrap();
        assert!(t.names.is_none());
        assert!(matches!(parse_data(b"1,2\n3,\n", b',', "x"), Err(IoError::MissingValue { line: 2, .. })));
        assert!(matches!(parse_data(b"1,2\n3,NA\n", b',', "x"), Err(IoError::MissingValue { .. })));
        assert!(matches!(parse_data(b"1,2\n3\n", b',', "x"), Err(IoError::Ragged { .. })));
    }

    #[test]
    fn edge_and_matrix_round_trip() {
        let g = Graph::from_edges(4, [(0, 1), (2, 3)]).unwrap();
        let back = parse_edges(&edges_to_tsv(&g, None), 4, "x").unwrap();
        assert_eq!(back, g);
        let m = DMatrix::from_row_slice(3, 3, &[2.0, -0.5, 0.0, -0.5, 1.5, 0.1, 0.0, 0.1, 1.0]);
        assert_eq!(parse_matrix(&matrix_to_tsv(&m), 3, "x").unwrap(), m);
    }

    #[test]
    fn data_round_trip_is_exact() {
        let x = DMatrix::from_row_slice(2, 2, &[0.1 + 0.2, -1e-300, 3.0, 1.0 / 3.0]);
        let t = parse_data(data_to_csv(&x, None).as_bytes(), b',', "x").unwrap();
        assert_eq!(t.x, x);
    }
}
