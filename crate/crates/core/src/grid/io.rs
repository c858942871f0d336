//! Field import and export.
//!
//! CSV: header `t,x,value` (1D) or `t,x,y,value` (2D), one row per node in
//! storage order (time slowest, then y, then x).
//!
//! Binary dump, little-endian throughout:
//!
//! | bytes | content                                   |
//! |-------|-------------------------------------------|
//! | 8     | magic `PQFIELD1`                          |
//! | 4     | `u32` space dimension `n`                 |
//! | 4     | `u32` nodes per axis `nx`                 |
//! | 4     | `u32` time steps `nt`                     |
//! | 4     | reserved, zero                            |
//! | 16·n  | `f64` lower, upper per axis               |
//! | 8     | `f64` final time                          |
//! | 8·N   | `f64` values, row-major over (t, y, x)    |

use std::io::{Read, Write};

use super::{Domain, GridError, SpaceTimeField};

const MAGIC: &[u8; 8] = b"PQFIELD1";

pub fn write_csv<W: Write>(field: &SpaceTimeField, writer: W) -> Result<(), GridError> {
    let d = field.domain();
    let mut w = csv::Writer::from_writer(writer);
    if d.n == 1 {
        w.write_record(["t", "x", "value"])?;
    } else {
        w.write_record(["t", "x", "y", "value"])?;
    }
    for j in 0..d.n_time() {
        let t = d.time(j).to_string();
        for s in 0..d.n_space() {
            let x = d.coords(s);
            let v = field.at(j, s).to_string();
            if d.n == 1 {
                w.write_record([t.as_str(), &x[0].to_string(), &v])?;
            } else {
                w.write_record([t.as_str(), &x[0].to_string(), &x[1].to_string(), &v])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV written for `domain`; coordinates must match the grid.
pub fn read_csv<R: Read>(domain: &Domain, reader: R) -> Result<SpaceTimeField, GridError> {
    let mut r = csv::Reader::from_reader(reader);
    let expected_cols = domain.n + 2;
    let mut values = Vec::with_capacity(domain.len());
    for (row, record) in r.records().enumerate() {
        let record = record?;
        if record.len() != expected_cols {
            return Err(GridError::Format(format!(
                "row {row}: expected {expected_cols} columns, got {}",
                record.len()
            )));
        }
        let nums = record
            .iter()
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| GridError::Format(format!("row {row}: {e}")))?;
        if row >= domain.len() {
            return Err(GridError::ShapeMismatch {
                expected: domain.len(),
                got: row + 1,
            });
        }
        let (j, s) = (row / domain.n_space(), row % domain.n_space());
        let x = domain.coords(s);
        let tol = 1e-9;
        let mismatch = (nums[0] - domain.time(j)).abs() > tol * domain.t_final.max(1.0)
            || (0..domain.n).any(|a| {
                (nums[1 + a] - x[a]).abs() > tol * (domain.upper[a] - domain.lower[a]).max(1.0)
            });
        if mismatch {
            return Err(GridError::Format(format!(
                "row {row}: coordinates do not match the grid"
            )));
        }
        values.push(nums[expected_cols - 1]);
    }
    SpaceTimeField::new(domain.clone(), values)
}

pub fn write_binary<W: Write>(field: &SpaceTimeField, mut w: W) -> Result<(), GridError> {
    let d = field.domain();
    w.write_all(MAGIC)?;
    for v in [d.n as u32, d.nx as u32, d.nt as u32, 0u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    for a in 0..d.n {
        w.write_all(&d.lower[a].to_le_bytes())?;
        w.write_all(&d.upper[a].to_le_bytes())?;
    }
    w.write_all(&d.t_final.to_le_bytes())?;
    let mut buf = Vec::with_capacity(8 * field.values().len());
    for v in field.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, GridError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, GridError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_binary<R: Read>(mut r: R) -> Result<SpaceTimeField, GridError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(GridError::Format("bad magic".into()));
    }
    let n = read_u32(&mut r)? as usize;
    let nx = read_u32(&mut r)? as usize;
    let nt = read_u32(&mut r)? as usize;
    let _reserved = read_u32(&mut r)?;
    if !(1..=2).contains(&n) {
        return Err(GridError::Format(format!("unsupported dimension {n}")));
    }
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    for _ in 0..n {
        lower.push(read_f64(&mut r)?);
        upper.push(read_f64(&mut r)?);
    }
    let t_final = read_f64(&mut r)?;
    let domain = Domain::new(lower, upper, t_final, nx, nt)?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * domain.len() {
        return Err(GridError::ShapeMismatch {
            expected: domain.len(),
            got: bytes.len() / 8,
        });
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    SpaceTimeField::new(domain, values)
}
