//! Dataset files.
//!
//! Two formats are supported:
//!
//! * sparse text, one observation per line: `<label> <index>:<value> ...` with
//!   1-based indices in the file (0-based in memory);
//! * dense binary: `b"DDG1"`, `u64 N`, `u64 M`, `u8 label_kind`, then `N·M`
//!   row-major `f64` values and `N` `f64` labels, all little-endian.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::{DataGrid, LabelKind};

pub const DENSE_MAGIC: &[u8; 4] = b"DDG1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    DenseBinary,
    SparseText,
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" | "dense-binary" => Ok(DataFormat::DenseBinary),
            "sparse" | "sparse-text" => Ok(DataFormat::SparseText),
            other => Err(Error::Config(format!("unknown data format {other:?}"))),
        }
    }
}

pub fn load_dataset(
    path: &Path,
    format: DataFormat,
    label_kind: LabelKind,
    n_features: Option<usize>,
) -> Result<DataGrid> {
    match format {
        DataFormat::SparseText => {
            let file = File::open(path)?;
            read_sparse(BufReader::new(file), path, label_kind, n_features)
        }
        DataFormat::DenseBinary => {
            let mut buf = Vec::new();
            File::open(path)?.read_to_end(&mut buf)?;
            read_dense(&buf, path)
        }
    }
}

pub fn save_dataset(grid: &DataGrid, path: &Path, format: DataFormat) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        DataFormat::SparseText => write_sparse(grid, &mut out)?,
        DataFormat::DenseBinary => write_dense(grid, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

fn map_label(raw: f64, kind: LabelKind, path: &Path, line: usize) -> Result<f64> {
    match kind {
        LabelKind::Regression => Ok(raw),
        LabelKind::Classification => {
            if raw == 1.0 {
                Ok(1.0)
            } else if raw == -1.0 || raw == 0.0 {
                Ok(-1.0)
            } else {
                Err(Error::Label {
                    path: path.to_path_buf(),
                    line,
                    label: raw,
                })
            }
        }
    }
}

/// Parses sparse text. When `n_features` is `None` the width is the largest
/// index seen.
pub fn read_sparse<R: BufRead>(
    reader: R,
    path: &Path,
    label_kind: LabelKind,
    n_features: Option<usize>,
) -> Result<DataGrid> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut width = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let raw: f64 = label_tok
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad label {label_tok:?}")))?;
        labels.push(map_label(raw, label_kind, path, lineno)?);

        let mut row = Vec::new();
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(lineno, format!("expected index:value, got {tok:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad index {idx:?}")))?;
            if idx == 0 {
                return Err(parse_err(lineno, "indices are 1-based; found 0".into()));
            }
            if let Some(m) = n_features {
                if idx > m {
                    return Err(parse_err(lineno, format!("index {idx} exceeds M={m}")));
                }
            }
            let val: f64 = val
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad value {val:?}")))?;
            width = width.max(idx);
            row.push((idx - 1, val));
        }
        let mut sorted = row.clone();
        sorted.sort_by_key(|&(k, _)| k);
        if sorted.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(parse_err(lineno, "duplicate feature index".into()));
        }
        rows.push(row);
    }
    let m = n_features.unwrap_or(width);
    DataGrid::from_sparse_rows(m, rows, labels, label_kind)
}

pub fn write_sparse<W: Write>(grid: &DataGrid, out: &mut W) -> Result<()> {
    for j in 0..grid.n_obs() {
        write!(out, "{}", grid.label(j))?;
        let mut res = Ok(());
        grid.row(j).for_each_nonzero(|k, x| {
            if res.is_ok() && x != 0.0 {
                res = write!(out, " {}:{}", k + 1, x);
            }
        });
        res?;
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_dense<W: Write>(grid: &DataGrid, out: &mut W) -> Result<()> {
    out.write_all(DENSE_MAGIC)?;
    out.write_all(&(grid.n_obs() as u64).to_le_bytes())?;
    out.write_all(&(grid.n_features() as u64).to_le_bytes())?;
    let kind: u8 = match grid.label_kind() {
        LabelKind::Classification => 0,
        LabelKind::Regression => 1,
    };
    out.write_all(&[kind])?;
    for j in 0..grid.n_obs() {
        for x in grid.row_dense(j) {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    for &y in grid.labels() {
        out.write_all(&y.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_dense(buf: &[u8], path: &Path) -> Result<DataGrid> {
    let err = |offset: usize, msg: &str| Error::Parse {
        path: path.to_path_buf(),
        line: offset,
        msg: format!("byte offset {offset}: {msg}"),
    };
    const HEADER: usize = 4 + 8 + 8 + 1;
    if buf.len() < HEADER {
        return Err(err(0, "truncated header"));
    }
    if &buf[..4] != DENSE_MAGIC {
        return Err(err(0, "bad magic"));
    }
    let read_u64 = |at: usize| u64::from_le_bytes(buf[at..at + 8].try_into().unwrap());
    let n = read_u64(4) as usize;
    let m = read_u64(12) as usize;
    let label_kind = match buf[20] {
        0 => LabelKind::Classification,
        1 => LabelKind::Regression,
        other => return Err(err(20, &format!("unknown label kind {other}"))),
    };
    let expected = n
        .checked_mul(m)
        .and_then(|nm| nm.checked_add(n))
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| c.checked_add(HEADER))
        .ok_or_else(|| err(4, "dimensions overflow"))?;
    if buf.len() != expected {
        return Err(err(
            buf.len().min(expected),
            &format!("expected {expected} bytes, found {}", buf.len()),
        ));
    }
    let floats = |from: usize, count: usize| -> Vec<f64> {
        buf[from..from + 8 * count]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    let values = floats(HEADER, n * m);
    let labels = floats(HEADER + 8 * n * m, n);
    if label_kind == LabelKind::Classification {
        if let Some(j) = labels.iter().position(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::Label {
                path: path.to_path_buf(),
                line: j + 1,
                label: labels[j],
            });
        }
    }
    DataGrid::from_dense(m, values, labels, label_kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::StorageKind;
    use std::io::Cursor;

    fn parse(text: &str, m: Option<usize>) -> Result<DataGrid> {
        read_sparse(
            Cursor::new(text),
            Path::new("mem"),
            LabelKind::Classification,
            m,
        )
    }

    #[test]
    fn sparse_line_is_zero_based_in_memory() {
        let g = parse("+1 3:0.5 7:-1.25\n", Some(10)).unwrap();
        assert_eq!(g.n_obs(), 1);
        assert_eq!(g.n_features(), 10);
        let mut nz = Vec::new();
        g.row(0).for_each_nonzero(|k, x| nz.push((k, x)));
        assert_eq!(nz, vec![(2, 0.5), (6, -1.25)]);
        assert_eq!(g.storage_kind(), StorageKind::Sparse);
    }

    #[test]
    fn empty_file_gives_empty_grid_rejected_by_scheme() {
        let g = parse("", Some(10)).unwrap();
        assert_eq!(g.n_obs(), 0);
        assert!(matches!(g.scheme(1, 1), Err(Error::Divisibility(_))));
    }

    #[test]
    fn index_beyond_width_is_parse_error() {
        let e = parse("1 11:1.0\n", Some(10)).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }), "{e}");
    }

    #[test]
    fn labels_zero_one_are_mapped() {
        let g = parse("0 1:1\n1 2:1\n-1 1:2\n", None).unwrap();
        assert_eq!(g.labels(), &[-1.0, 1.0, -1.0]);
        assert_eq!(g.n_features(), 2);
        let e = parse("2 1:1\n", None).unwrap_err();
        assert!(matches!(e, Error::Label { line: 1, .. }));
    }

    #[test]
    fn malformed_tokens_report_line() {
        let e = parse("1 1:1\n1 2-3\n", None).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let e = parse("1 0:1\n", None).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn dense_header_is_checked() {
        let e = read_dense(b"DDG0", Path::new("mem")).unwrap_err();
        assert!(matches!(e, Error::Parse { .. }));
        let g =
            DataGrid::from_dense(2, vec![1.0, 2.0], vec![1.0], LabelKind::Classification).unwrap();
        let mut buf = Vec::new();
        write_dense(&g, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"DDG1");
        assert_eq!(buf.len(), 21 + 8 * 3);
        assert!(read_dense(&buf[..buf.len() - 1], Path::new("mem")).is_err());
        assert_eq!(read_dense(&buf, Path::new("mem")).unwrap(), g);
    }
}
