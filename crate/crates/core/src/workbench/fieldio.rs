//! Full-precision text storage of real and complex fields.
//!
//! ```text
//! LITHOFIELD 1 <rows> <cols> <dx_nm> <dy_nm> <real|complex>
//! ```
//! followed by row-major values; complex entries are `re im` pairs.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;

use super::write_atomic;
use crate::error::{IltError, Result};
use crate::optics::GridSpec;

pub const MAGIC: &str = "LITHOFIELD";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum FieldData {
    Real(Array2<f64>),
    Complex(Array2<Complex64>),
}

impl FieldData {
    pub fn dim(&self) -> (usize, usize) {
        match self {
            FieldData::Real(a) => a.dim(),
            FieldData::Complex(a) => a.dim(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldFile {
    pub dx_nm: f64,
    pub dy_nm: f64,
    pub data: FieldData,
}

impl FieldFile {
    pub fn real(values: Array2<f64>, dx_nm: f64) -> Self {
        Self {
            dx_nm,
            dy_nm: dx_nm,
            data: FieldData::Real(values),
        }
    }

    pub fn complex(values: Array2<Complex64>, dx_nm: f64) -> Self {
        Self {
            dx_nm,
            dy_nm: dx_nm,
            data: FieldData::Complex(values),
        }
    }

    pub fn into_real(self) -> Result<Array2<f64>> {
        match self.data {
            FieldData::Real(a) => Ok(a),
            FieldData::Complex(_) => Err(IltError::DimensionMismatch(
                "expected a real field, found complex".into(),
            )),
        }
    }

    pub fn into_complex(self) -> Result<Array2<Complex64>> {
        match self.data {
            FieldData::Complex(a) => Ok(a),
            FieldData::Real(a) => Ok(a.mapv(Complex64::from)),
        }
    }

    /// Checks the shape and pitch against a grid.
    pub fn check_grid(&self, grid: &GridSpec) -> Result<()> {
        let (rows, cols) = self.data.dim();
        if rows != grid.n || cols != grid.n || self.dx_nm != grid.dx_nm || self.dy_nm != grid.dx_nm {
            return Err(IltError::DimensionMismatch(format!(
                "field is {rows}x{cols} at {}x{} nm, grid is {n}x{n} at {} nm",
                self.dx_nm,
                self.dy_nm,
                grid.dx_nm,
                n = grid.n
            )));
        }
        Ok(())
    }
}

fn push_value(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").expect("writing to a String");
}

pub fn encode(field: &FieldFile) -> String {
    let (rows, cols) = field.data.dim();
    let kind = match field.data {
        FieldData::Real(_) => "real",
        FieldData::Complex(_) => "complex",
    };
    let mut out = format!(
        "{MAGIC} {VERSION} {rows} {cols} {} {} {kind}\n",
        field.dx_nm, field.dy_nm
    );
    for i in 0..rows {
        for j in 0..cols {
            if j > 0 {
                out.push(' ');
            }
            match &field.data {
                FieldData::Real(a) => push_value(&mut out, a[[i, j]]),
                FieldData::Complex(a) => {
                    push_value(&mut out, a[[i, j]].re);
                    out.push(' ');
                    push_value(&mut out, a[[i, j]].im);
                }
            }
        }
        out.push('\n');
    }
    out
}

struct Token<'a> {
    text: &'a str,
    line: usize,
    offset: usize,
}

fn tokens(text: &str) -> impl Iterator<Item = Token<'_>> {
    text.lines().enumerate().flat_map(|(li, line)| {
        let base = line.as_ptr() as usize;
        line.split_ascii_whitespace().map(move |t| Token {
            text: t,
            line: li + 1,
            offset: t.as_ptr() as usize - base,
        })
    })
}

fn parse_err(line: usize, offset: usize, msg: impl Into<String>) -> IltError {
    IltError::Parse {
        line,
        offset,
        msg: msg.into(),
    }
}

pub fn decode(text: &str) -> Result<FieldFile> {
    let header = text.lines().next().unwrap_or("");
    let parts: Vec<&str> = header.split_ascii_whitespace().collect();
    if parts.len() != 7 || parts[0] != MAGIC {
        return Err(parse_err(
            1,
            0,
            format!("expected `{MAGIC} {VERSION} rows cols dx dy real|complex`"),
        ));
    }
    let field = |k: usize| header.find(parts[k]).unwrap_or(0);
    let version: u32 = parts[1].parse().map_err(|_| parse_err(1, field(1), "bad version"))?;
    if version != VERSION {
        return Err(parse_err(1, field(1), format!("unsupported version {version}")));
    }
    let rows: usize = parts[2].parse().map_err(|_| parse_err(1, field(2), "bad row count"))?;
    let cols: usize = parts[3]
        .parse()
        .map_err(|_| parse_err(1, field(3), "bad column count"))?;
    let dx: f64 = parts[4].parse().map_err(|_| parse_err(1, field(4), "bad dx"))?;
    let dy: f64 = parts[5].parse().map_err(|_| parse_err(1, field(5), "bad dy"))?;
    let per = match parts[6] {
        "real" => 1,
        "complex" => 2,
        other => return Err(parse_err(1, field(6), format!("unknown kind {other:?}"))),
    };
    let expected = rows * cols * per;
    let mut values = Vec::with_capacity(expected);
    let mut last = (1, header.len());
    for tok in tokens(text).filter(|t| t.line > 1) {
        if values.len() == expected {
            return Err(parse_err(tok.line, tok.offset, format!("more than {expected} values")));
        }
        let v: f64 = tok
            .text
            .parse()
            .map_err(|_| parse_err(tok.line, tok.offset, format!("not a number: {:?}", tok.text)))?;
        values.push(v);
        last = (tok.line, tok.offset + tok.text.len());
    }
    if values.len() != expected {
        return Err(parse_err(
            last.0,
            last.1,
            format!(
                "header declares {rows}x{cols} {} but {} values are present",
                parts[6],
                values.len()
            ),
        ));
    }
    let data = if per == 1 {
        FieldData::Real(Array2::from_shape_vec((rows, cols), values).expect("count checked"))
    } else {
        let c: Vec<Complex64> = values.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
        FieldData::Complex(Array2::from_shape_vec((rows, cols), c).expect("count checked"))
    };
    Ok(FieldFile {
        dx_nm: dx,
        dy_nm: dy,
        data,
    })
}

pub fn write_field(path: impl AsRef<Path>, field: &FieldFile) -> Result<()> {
    write_atomic(path, encode(field).as_bytes())
}

pub fn read_field(path: impl AsRef<Path>) -> Result<FieldFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| IltError::io(path, e))?;
    decode(&text)
}
