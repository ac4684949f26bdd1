//! Field files: one JSON header line, then the values as little-endian
//! `f64` in column-major order.

use crate::error::{invalid, Result};
use crate::ns::{NsGrid, NsState};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

pub const FIELD_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub schema_version: u32,
    pub name: String,
    /// `[rows, cols]`: `ζ` levels by `x₁` points.
    pub shape: [usize; 2],
    pub epsilon: f64,
    pub grid: NsGrid,
    pub time: f64,
}

pub fn write_field<W: Write>(mut out: W, header: &FieldHeader, data: &DMatrix<f64>) -> Result<()> {
    if header.shape != [data.nrows(), data.ncols()] {
        return Err(invalid(format!(
            "header shape {:?} does not match {}x{}",
            header.shape,
            data.nrows(),
            data.ncols()
        )));
    }
    serde_json::to_writer(&mut out, header)?;
    out.write_all(b"\n")?;
    let bytes: Vec<u8> = data
        .as_slice()
        .iter()
        .flat_map(|v| v.to_le_bytes())
        .collect();
    out.write_all(&bytes)?;
    Ok(())
}

pub fn read_field<R: Read>(input: R) -> Result<(FieldHeader, DMatrix<f64>)> {
    let mut rd = BufReader::new(input);
    let mut line = String::new();
    rd.read_line(&mut line)?;
    let header: FieldHeader = serde_json::from_str(line.trim_end())?;
    if header.schema_version != FIELD_SCHEMA {
        return Err(invalid(format!(
            "field schema {} is not {FIELD_SCHEMA}",
            header.schema_version
        )));
    }
    let [r, c] = header.shape;
    let mut bytes = Vec::with_capacity(8 * r * c);
    rd.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * r * c {
        return Err(invalid(format!(
            "expected {} bytes of data, found {}",
            8 * r * c,
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok((header, DMatrix::from_vec(r, c, values)))
}

/// Writes `omega.f64` and `psi.f64` of a state into `dir`.
pub fn write_checkpoint(dir: &Path, state: &NsState, epsilon: f64, grid: NsGrid) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, m) in [("omega", &state.omega), ("psi", &state.psi)] {
        let h = FieldHeader {
            schema_version: FIELD_SCHEMA,
            name: name.into(),
            shape: [m.nrows(), m.ncols()],
            epsilon,
            grid,
            time: state.time,
        };
        let f = std::fs::File::create(dir.join(format!("{name}.f64")))?;
        write_field(std::io::BufWriter::new(f), &h, m)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_round_trip_is_bitwise() {
        let m = DMatrix::from_fn(3, 5, |i, j| (i as f64 + 0.1).powf(j as f64 - 1.7));
        let h = FieldHeader {
            schema_version: FIELD_SCHEMA,
            name: "omega".into(),
            shape: [3, 5],
            epsilon: 0.25,
            grid: NsGrid::default(),
            time: 0.5,
        };
        let mut buf = Vec::new();
        write_field(&mut buf, &h, &m).unwrap();
        assert_eq!(
            buf.len() - buf.iter().position(|&b| b == b'\n').unwrap() - 1,
            8 * 15
        );
        let (h2, m2) = read_field(buf.as_slice()).unwrap();
        assert_eq!(h2, h);
        assert_eq!(m2, m);
    }

    #[test]
    fn truncated_data_is_rejected() {
        let m = DMatrix::from_element(2, 2, 1.0);
        let h = FieldHeader {
            schema_version: FIELD_SCHEMA,
            name: "psi".into(),
            shape: [2, 2],
            epsilon: 0.5,
            grid: NsGrid::default(),
            time: 0.0,
        };
        let mut buf = Vec::new();
        write_field(&mut buf, &h, &m).unwrap();
        buf.pop();
        assert!(read_field(buf.as_slice()).is_err());
    }
}
