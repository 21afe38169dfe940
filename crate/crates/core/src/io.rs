//! Text formats for tensors and vectors.
//!
//! ```text
//! # comment
//! tensor <m> <n> <nnz>
//! <i1> ... <im> <value>     (nnz lines, 1-based indices)
//!
//! vector <n>
//! <value>                   (n lines)
//! ```
//!
//! Values are written with 17 significant digits so a write/read cycle is exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::SparseTensor;

/// Significant digits used when writing tensor and vector files.
pub const EXACT_DIGITS: usize = 17;

/// Formats a float in scientific notation with `digits` significant digits.
pub fn fmt_float(x: f64, digits: usize) -> String {
    format!("{:.*e}", digits.max(1) - 1, x)
}

/// Non-blank, non-comment lines with their 1-based line numbers.
pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub(crate) fn parse_num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid {what} '{tok}'"),
    })
}

pub(crate) fn parse_value(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = parse_num(tok, line, "value")?;
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("{tok} at line {line}")));
    }
    Ok(v)
}

/// Parses a 1-based index token into a 0-based index below `dim`.
pub(crate) fn parse_index(tok: &str, dim: usize, line: usize) -> Result<usize> {
    let k: usize = parse_num(tok, line, "index")?;
    if k == 0 || k > dim {
        return Err(Error::IndexOutOfRange(format!(
            "index {k} at line {line} (valid range 1..={dim})"
        )));
    }
    Ok(k - 1)
}

pub fn parse_tensor(text: &str) -> Result<SparseTensor> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or(Error::Parse {
        line: 0,
        msg: "empty tensor file".into(),
    })?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 4 || toks[0] != "tensor" {
        return Err(Error::Parse {
            line: hline,
            msg: "malformed header, expected 'tensor <m> <n> <nnz>'".into(),
        });
    }
    let order: usize = parse_num(toks[1], hline, "order")?;
    let dim: usize = parse_num(toks[2], hline, "dimension")?;
    let nnz: usize = parse_num(toks[3], hline, "entry count")?;
    if order < 2 || dim < 1 {
        return Err(Error::Parse {
            line: hline,
            msg: format!("malformed header: order {order}, dimension {dim}"),
        });
    }
    let mut entries = Vec::with_capacity(nnz);
    for (ln, l) in lines {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != order + 1 {
            return Err(Error::Parse {
                line: ln,
                msg: format!("expected {} indices and a value", order),
            });
        }
        let idx = toks[..order]
            .iter()
            .map(|t| parse_index(t, dim, ln))
            .collect::<Result<Vec<_>>>()?;
        let v = parse_value(toks[order], ln)?;
        entries.push((idx, v));
    }
    if entries.len() != nnz {
        return Err(Error::Parse {
            line: hline,
            msg: format!("header declares {nnz} entries, found {}", entries.len()),
        });
    }
    SparseTensor::from_entries(order, dim, entries)
}

pub fn format_tensor(t: &SparseTensor) -> String {
    let mut s = format!("tensor {} {} {}\n", t.order(), t.dim(), t.nnz());
    for (idx, v) in t.entries() {
        for i in idx {
            s.push_str(&(i + 1).to_string());
            s.push(' ');
        }
        s.push_str(&fmt_float(v, EXACT_DIGITS));
        s.push('\n');
    }
    s
}

pub fn parse_vec(text: &str) -> Result<Vec<f64>> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or(Error::Parse {
        line: 0,
        msg: "empty vector file".into(),
    })?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 2 || toks[0] != "vector" {
        return Err(Error::Parse {
            line: hline,
            msg: "malformed header, expected 'vector <n>'".into(),
        });
    }
    let n: usize = parse_num(toks[1], hline, "dimension")?;
    let mut values = Vec::with_capacity(n);
    for (ln, l) in lines {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 1 {
            return Err(Error::Parse {
                line: ln,
                msg: "expected one value per line".into(),
            });
        }
        values.push(parse_value(toks[0], ln)?);
    }
    if values.len() != n {
        return Err(Error::Parse {
            line: hline,
            msg: format!("header declares {n} values, found {}", values.len()),
        });
    }
    Ok(values)
}

pub fn format_vec(v: &[f64]) -> String {
    format_vec_digits(v, EXACT_DIGITS)
}

/// Vector file text with `digits` significant digits per value.
pub fn format_vec_digits(v: &[f64], digits: usize) -> String {
    let mut s = format!("vector {}\n", v.len());
    for x in v {
        s.push_str(&fmt_float(*x, digits));
        s.push('\n');
    }
    s
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes through a temporary file in the target directory, then renames it
/// into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<SparseTensor> {
    parse_tensor(&read_text(path.as_ref())?)
}

pub fn write_tensor(t: &SparseTensor, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), format_tensor(t).as_bytes())
}

pub fn read_vec(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    parse_vec(&read_text(path.as_ref())?)
}

pub fn write_vec(v: &[f64], path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), format_vec(v).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_comments() {
        let t = parse_tensor("# identity\ntensor 3 2 2\n1 1 1 1.0\n\n2 2 2 1\n").unwrap();
        assert_eq!(t, SparseTensor::identity(3, 2).unwrap());
    }

    #[test]
    fn duplicate_index_error() {
        let e = parse_tensor("tensor 2 2 2\n1 2 1.0\n1 2 3.0\n").unwrap_err();
        assert!(e.to_string().contains("duplicate index"), "{e}");
    }

    #[test]
    fn zero_index_out_of_range() {
        let e = parse_tensor("tensor 2 2 1\n0 1 1.0\n").unwrap_err();
        assert!(e.to_string().contains("index out of range"), "{e}");
    }

    #[test]
    fn malformed_header() {
        assert!(matches!(parse_tensor("tensr 2 2 1\n1 1 1\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse_tensor("tensor 2 2\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse_tensor(""), Err(Error::Parse { .. })));
    }

    #[test]
    fn entry_count_mismatch() {
        assert!(matches!(parse_tensor("tensor 2 2 2\n1 1 1\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn non_finite_value() {
        assert!(matches!(parse_tensor("tensor 2 1 1\n1 1 inf\n"), Err(Error::NonFinite(_))));
        assert!(matches!(parse_vec("vector 1\nNaN\n"), Err(Error::NonFinite(_))));
    }

    #[test]
    fn vector_round_trip_exact() {
        let v = vec![0.1, -1.0 / 3.0, 1e-300, 12345.678901234567];
        assert_eq!(parse_vec(&format_vec(&v)).unwrap(), v);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.txt");
        let t = SparseTensor::from_entries(3, 3, vec![(vec![0, 1, 2], 1.0 / 7.0), (vec![2, 2, 2], -2.5)]).unwrap();
        write_tensor(&t, &p).unwrap();
        assert_eq!(read_tensor(&p).unwrap(), t);
    }
}
