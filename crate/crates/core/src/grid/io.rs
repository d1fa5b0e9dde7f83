//! Field serialization.
//!
//! CSV: header `index,coord_1,...,coord_n,value`, one row per node in storage
//! order, floats in shortest round-trip form.
//!
//! Binary (little-endian throughout):
//!
//! | bytes        | content                                   |
//! |--------------|-------------------------------------------|
//! | 5            | magic `FBAC1`                             |
//! | 8            | `dim` as u64                              |
//! | 8 * dim      | node count per axis, u64                  |
//! | 16 * dim     | extent per axis as `(lo, hi)`, f64 pairs  |
//! | 8 * len      | nodal values, f64, storage order          |

use std::io::{BufRead, Read, Write};

use super::{Field, FieldKind, Grid};
use crate::error::{Error, Result};

pub const BINARY_MAGIC: &[u8; 5] = b"FBAC1";

pub fn write_csv<W: Write>(field: &Field, mut out: W) -> Result<()> {
    let g = field.grid();
    let mut header = String::from("index");
    for a in 1..=g.dim() {
        header.push_str(&format!(",coord_{a}"));
    }
    header.push_str(",value\n");
    out.write_all(header.as_bytes())?;
    let mut line = String::new();
    for (i, v) in field.values().iter().enumerate() {
        line.clear();
        line.push_str(&i.to_string());
        let p = g.coord(i);
        for c in &p[..g.dim()] {
            line.push(',');
            line.push_str(&c.to_string());
        }
        line.push(',');
        line.push_str(&v.to_string());
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}

/// Read values from a CSV dump onto a known grid. Coordinates are checked
/// against the grid to one part in 1e9 of the spacing.
pub fn read_csv<R: BufRead>(grid: &Grid, kind: FieldKind, input: R) -> Result<Field> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty CSV".into()))??;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() != grid.dim() + 2 || cols[0] != "index" || cols[cols.len() - 1] != "value" {
        return Err(Error::Format(format!("unexpected CSV header `{header}`")));
    }
    let mut values = vec![f64::NAN; grid.len()];
    let mut seen = 0usize;
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.trim().split(',').collect();
        if parts.len() != cols.len() {
            return Err(Error::Format(format!("bad CSV row `{line}`")));
        }
        let idx: usize = parts[0]
            .parse()
            .map_err(|_| Error::Format(format!("bad index in `{line}`")))?;
        if idx >= grid.len() {
            return Err(Error::Format(format!("index {idx} out of range")));
        }
        let p = grid.coord(idx);
        for a in 0..grid.dim() {
            let c: f64 = parts[1 + a]
                .parse()
                .map_err(|_| Error::Format(format!("bad coordinate in `{line}`")))?;
            if (c - p[a]).abs() > 1e-9 * grid.spacing(a) {
                return Err(Error::Format(format!("row {idx}: coordinate mismatch")));
            }
        }
        values[idx] = parts[cols.len() - 1]
            .parse()
            .map_err(|_| Error::Format(format!("bad value in `{line}`")))?;
        seen += 1;
    }
    if seen != grid.len() || values.iter().any(|v| v.is_nan()) {
        return Err(Error::Format(format!(
            "CSV covers {seen} of {} nodes",
            grid.len()
        )));
    }
    Field::new(grid.clone(), kind, values)
}

pub fn write_binary<W: Write>(field: &Field, mut out: W) -> Result<()> {
    let g = field.grid();
    out.write_all(BINARY_MAGIC)?;
    out.write_all(&(g.dim() as u64).to_le_bytes())?;
    for a in 0..g.dim() {
        out.write_all(&(g.nodes(a) as u64).to_le_bytes())?;
    }
    for a in 0..g.dim() {
        let (lo, hi) = g.extent(a);
        out.write_all(&lo.to_le_bytes())?;
        out.write_all(&hi.to_le_bytes())?;
    }
    for v in field.values() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|_| Error::Format("truncated binary field".into()))?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

pub fn read_binary<R: Read>(kind: FieldKind, mut input: R) -> Result<Field> {
    let mut magic = [0u8; 5];
    input
        .read_exact(&mut magic)
        .map_err(|_| Error::Format("truncated binary field".into()))?;
    if &magic != BINARY_MAGIC {
        return Err(Error::Format("bad magic, expected FBAC1".into()));
    }
    let dim = read_u64(&mut input)? as usize;
    if !(1..=3).contains(&dim) {
        return Err(Error::Format(format!("bad dimension {dim}")));
    }
    let mut nodes = Vec::with_capacity(dim);
    for _ in 0..dim {
        nodes.push(read_u64(&mut input)? as usize);
    }
    let mut extents = Vec::with_capacity(dim);
    for _ in 0..dim {
        let lo = read_f64(&mut input)?;
        let hi = read_f64(&mut input)?;
        extents.push((lo, hi));
    }
    let grid = Grid::new(&extents, &nodes).map_err(|e| Error::Format(e.to_string()))?;
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        values.push(read_f64(&mut input)?);
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after field values".into()));
    }
    Field::new(grid, kind, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(dim: usize) -> Field {
        let g = Grid::new(&vec![(-0.5, 1.25); dim], &vec![4; dim]).unwrap();
        Field::from_fn(&g, FieldKind::Phase, |p| (p[0] * 3.0 + p[1]).sin())
    }

    #[test]
    fn csv_header_and_rows() {
        let f = sample(2);
        let mut buf = Vec::new();
        write_csv(&f, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "index,coord_1,coord_2,value");
        assert!(lines.next().unwrap().starts_with("0,-0.5,-0.5,"));
        let back = read_csv(f.grid(), FieldKind::Phase, &buf[..]).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn binary_layout() {
        let f = sample(1);
        let mut buf = Vec::new();
        write_binary(&f, &mut buf).unwrap();
        assert_eq!(&buf[..5], b"FBAC1");
        assert_eq!(buf.len(), 5 + 8 + 8 + 16 + 8 * 4);
        assert_eq!(u64::from_le_bytes(buf[5..13].try_into().unwrap()), 1);
        assert!(read_binary(FieldKind::Phase, &buf[..buf.len() - 1]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_binary(FieldKind::Phase, &bad[..]).is_err());
    }

    proptest! {
        #[test]
        fn binary_round_trip(dim in 1usize..=3, n in 3usize..6, seed in any::<u32>()) {
            let g = Grid::new(&vec![(0.0, 1.0 + seed as f64 * 1e-6); dim], &vec![n; dim]).unwrap();
            let f = Field::from_fn(&g, FieldKind::Free, |p| (seed as f64 + p[0] * 7.1 - p[1]).cos() * 1e3);
            let mut buf = Vec::new();
            write_binary(&f, &mut buf).unwrap();
            let back = read_binary(FieldKind::Free, &buf[..]).unwrap();
            prop_assert_eq!(back, f);
        }
    }
}
