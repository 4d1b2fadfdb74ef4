//! Matrix Market coordinate format, real and complex.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use faer::{c64, MatRef};

use super::SparseMat;
use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq)]
enum Field {
    Real,
    Complex,
}

#[derive(Clone, Copy, PartialEq)]
enum Symmetry {
    General,
    Symmetric,
    Hermitian,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<SparseMat> {
    let text = fs::read_to_string(path.as_ref())?;
    parse_matrix_market(&text)
}

pub(crate) fn parse_matrix_market(text: &str) -> Result<SparseMat> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (_, banner) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let words: Vec<String> = banner.split_whitespace().map(str::to_ascii_lowercase).collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
        return Err(parse_err(1, "expected `%%MatrixMarket matrix coordinate <field> <symmetry>` banner"));
    }
    if words[2] != "coordinate" {
        return Err(parse_err(1, format!("unsupported format `{}`", words[2])));
    }
    let field = match words[3].as_str() {
        "real" => Field::Real,
        "complex" => Field::Complex,
        other => return Err(parse_err(1, format!("unsupported field `{other}`"))),
    };
    let symmetry = match words[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "hermitian" => Symmetry::Hermitian,
        other => return Err(parse_err(1, format!("unsupported symmetry `{other}`"))),
    };

    let mut data = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (size_line, size) = data.next().ok_or_else(|| parse_err(1, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| parse_err(size_line, format!("bad size line: {e}")))?;
    let [nrows, ncols, nnz] = dims[..] else {
        return Err(parse_err(size_line, "size line needs `rows cols entries`"));
    };
    if symmetry != Symmetry::General && nrows != ncols {
        return Err(parse_err(size_line, "symmetric and hermitian matrices must be square"));
    }

    let width = if field == Field::Real { 3 } else { 4 };
    let mut entries = Vec::with_capacity(if symmetry == Symmetry::General { nnz } else { 2 * nnz });
    let mut origin = Vec::with_capacity(entries.capacity());
    let mut count = 0;
    for (ln, line) in data {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != width {
            return Err(parse_err(ln, format!("expected {width} fields, found {}", toks.len())));
        }
        let idx = |t: &str, dim: usize, what: &str| -> Result<usize> {
            let v: usize = t.parse().map_err(|_| parse_err(ln, format!("bad {what} index `{t}`")))?;
            if v == 0 || v > dim {
                return Err(parse_err(ln, format!("{what} index {v} out of bounds 1..={dim}")));
            }
            Ok(v - 1)
        };
        let num = |t: &str| -> Result<f64> {
            let v: f64 = t.parse().map_err(|_| parse_err(ln, format!("bad number `{t}`")))?;
            if !v.is_finite() {
                return Err(parse_err(ln, "non-finite value"));
            }
            Ok(v)
        };
        let i = idx(toks[0], nrows, "row")?;
        let j = idx(toks[1], ncols, "column")?;
        let v = match field {
            Field::Real => c64::new(num(toks[2])?, 0.0),
            Field::Complex => c64::new(num(toks[2])?, num(toks[3])?),
        };
        if symmetry != Symmetry::General && i < j {
            return Err(parse_err(ln, "symmetric storage expects lower-triangle entries only"));
        }
        if symmetry == Symmetry::Hermitian && i == j && v.im != 0.0 {
            return Err(parse_err(ln, "hermitian diagonal entry must be real"));
        }
        count += 1;
        if count > nnz {
            return Err(parse_err(ln, format!("more than the declared {nnz} entries")));
        }
        entries.push((i, j, v));
        origin.push(ln);
        if i != j {
            match symmetry {
                Symmetry::General => {}
                Symmetry::Symmetric => {
                    entries.push((j, i, v));
                    origin.push(ln);
                }
                Symmetry::Hermitian => {
                    entries.push((j, i, v.conj()));
                    origin.push(ln);
                }
            }
        }
    }
    if count != nnz {
        return Err(parse_err(size_line, format!("declared {nnz} entries, found {count}")));
    }

    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by_key(|&t| (entries[t].1, entries[t].0, origin[t]));
    for w in order.windows(2) {
        let (a, b) = (entries[w[0]], entries[w[1]]);
        if (a.0, a.1) == (b.0, b.1) {
            return Err(parse_err(
                origin[w[1]],
                format!("duplicate entry ({}, {})", a.0 + 1, a.1 + 1),
            ));
        }
    }
    SparseMat::try_from_triplets(nrows, ncols, &entries)
}

/// Writes a general coordinate file; uses the `real` field when every entry
/// has a zero imaginary part. Values are printed with round-trip precision.
pub fn write_matrix_market(path: impl AsRef<Path>, m: &SparseMat) -> Result<()> {
    let t = m.triplets();
    write_entries(path.as_ref(), m.nrows(), m.ncols(), &t)
}

/// Writes every entry of a dense matrix, zeros included, in coordinate form.
pub fn write_matrix_market_dense(path: impl AsRef<Path>, m: MatRef<'_, c64>) -> Result<()> {
    let mut t = Vec::with_capacity(m.nrows() * m.ncols());
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            t.push((i, j, m[(i, j)]));
        }
    }
    write_entries(path.as_ref(), m.nrows(), m.ncols(), &t)
}

fn write_entries(path: &Path, nrows: usize, ncols: usize, t: &[(usize, usize, c64)]) -> Result<()> {
    let real = t.iter().all(|e| e.2.im == 0.0);
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(
        w,
        "%%MatrixMarket matrix coordinate {} general",
        if real { "real" } else { "complex" }
    )?;
    writeln!(w, "{nrows} {ncols} {}", t.len())?;
    for &(i, j, v) in t {
        if real {
            writeln!(w, "{} {} {:e}", i + 1, j + 1, v.re)?;
        } else {
            writeln!(w, "{} {} {:e} {:e}", i + 1, j + 1, v.re, v.im)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_file() {
        let m = parse_matrix_market("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n2 2 1.0\n").unwrap();
        assert_eq!(m, SparseMat::identity(2));
    }

    #[test]
    fn complex_entry() {
        let m = parse_matrix_market(
            "%%MatrixMarket matrix coordinate complex general\n% comment\n2 2 1\n1 2 0.5 -0.25\n",
        )
        .unwrap();
        assert_eq!(m.get(0, 1), c64::new(0.5, -0.25));
        assert_eq!(m.nnz(), 1);
    }

    #[test]
    fn symmetric_expansion_matches_transpose() {
        let m = parse_matrix_market(
            "%%MatrixMarket matrix coordinate real symmetric\n3 3 4\n1 1 2\n2 1 -1\n3 2 4\n3 3 1\n",
        )
        .unwrap();
        let d = m.to_dense();
        let mut mirrored = d.clone();
        for i in 0..3 {
            for j in 0..3 {
                mirrored[(i, j)] = d[(j, i)];
            }
        }
        assert_eq!(d, mirrored);
        assert_eq!(m.nnz(), 6);
    }

    #[test]
    fn hermitian_expansion_conjugates() {
        let m = parse_matrix_market(
            "%%MatrixMarket matrix coordinate complex hermitian\n2 2 2\n1 1 1 0\n2 1 0 1\n",
        )
        .unwrap();
        assert_eq!(m.get(1, 0), c64::new(0.0, 1.0));
        assert_eq!(m.get(0, 1), c64::new(0.0, -1.0));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("%%MatrixMarket matrix array real general\n1 1\n1\n", 1),
            ("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n", 3),
            ("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n1 1 2.0\n", 4),
            ("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 x 1.0\n", 3),
            ("%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 2 1.0\n2 2 1.0\n", 3),
        ];
        for (text, line) in cases {
            match parse_matrix_market(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("expected parse error for {text:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn round_trip_through_file() {
        let m = SparseMat::try_from_triplets(
            3,
            2,
            &[(0, 0, c64::new(0.1, 1.0 / 3.0)), (2, 1, c64::new(-7.25e-300, 0.0))],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.mtx");
        write_matrix_market(&p, &m).unwrap();
        assert_eq!(read_matrix_market(&p).unwrap(), m);
    }
}
