//! Plain-text coordinate serialization for matrices.
//!
//! One `row col value` triple per line with 1-based indices, every entry
//! listed in row-major order. Values use the shortest round-trip decimal
//! form, so write → read is exact and repeated writes are byte-identical.

use std::io::{self, BufRead, Write};

use nalgebra::DMatrix;

/// Writes all entries of `m` as `row col value` lines.
pub fn write_coord<W: Write>(w: &mut W, m: &DMatrix<f64>) -> io::Result<()> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            writeln!(w, "{} {} {}", i + 1, j + 1, m[(i, j)])?;
        }
    }
    Ok(())
}

/// Reads a coordinate listing; dimensions are inferred from the largest
/// indices seen. Blank lines and `%`-prefixed comment lines are skipped.
pub fn read_coord<R: BufRead>(r: R) -> io::Result<DMatrix<f64>> {
    let mut triples: Vec<(usize, usize, f64)> = Vec::new();
    let mut nrows = 0usize;
    let mut ncols = 0usize;
    for line in r.lines() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        fn next_tok(tok: Option<&str>) -> io::Result<&str> {
            tok.ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "short line"))
        }
        let i: usize = next_tok(parts.next())?
            .parse()
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        let j: usize = next_tok(parts.next())?
            .parse()
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        let v: f64 = next_tok(parts.next())?
            .parse()
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        if i == 0 || j == 0 {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                "coordinate indices are 1-based",
            ));
        }
        nrows = nrows.max(i);
        ncols = ncols.max(j);
        triples.push((i - 1, j - 1, v));
    }
    let mut m = DMatrix::zeros(nrows, ncols);
    for (i, j, v) in triples {
        m[(i, j)] = v;
    }
    Ok(m)
}
