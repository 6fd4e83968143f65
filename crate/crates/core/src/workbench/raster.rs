//! Netpbm rasters: PGM for grey-level fields, PBM for exact binary patterns.

use std::path::Path;

use ndarray::Array2;

use super::write_atomic;
use crate::error::{IltError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmEncoding {
    /// `P2`, decimal text.
    Text,
    /// `P5`, one byte per pixel.
    Binary,
}

/// Grey level `round(255 u)` of a value clamped to `[0, 1]`.
pub fn grey_level(u: f64) -> u8 {
    (255.0 * u.clamp(0.0, 1.0)).round() as u8
}

pub fn encode_pgm(levels: &Array2<u8>, encoding: PgmEncoding) -> Vec<u8> {
    let (rows, cols) = levels.dim();
    let magic = match encoding {
        PgmEncoding::Text => "P2",
        PgmEncoding::Binary => "P5",
    };
    let mut out = format!("{magic}\n{cols} {rows}\n255\n").into_bytes();
    match encoding {
        PgmEncoding::Binary => out.extend(levels.iter()),
        PgmEncoding::Text => {
            for row in levels.rows() {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                out.extend(line.join(" ").bytes());
                out.push(b'\n');
            }
        }
    }
    out
}

pub fn encode_pbm(mask: &Array2<bool>) -> Vec<u8> {
    let (rows, cols) = mask.dim();
    let mut out = format!("P1\n{cols} {rows}\n").into_bytes();
    for row in mask.rows() {
        let line: Vec<&str> = row.iter().map(|v| if *v { "1" } else { "0" }).collect();
        out.extend(line.join(" ").bytes());
        out.push(b'\n');
    }
    out
}

pub fn write_pgm(path: impl AsRef<Path>, u: &Array2<f64>, encoding: PgmEncoding) -> Result<()> {
    write_atomic(path, &encode_pgm(&u.mapv(grey_level), encoding))
}

pub fn write_pbm(path: impl AsRef<Path>, mask: &Array2<bool>) -> Result<()> {
    write_atomic(path, &encode_pbm(mask))
}

/// Comparison of an exposed pattern with its target: 0 where the target is
/// missed, 255 where exposure lies outside the target, 128 elsewhere.
pub fn difference_levels(exposed: &Array2<bool>, target: &Array2<bool>) -> Result<Array2<u8>> {
    if exposed.dim() != target.dim() {
        return Err(IltError::DimensionMismatch(format!(
            "exposed {:?} vs target {:?}",
            exposed.dim(),
            target.dim()
        )));
    }
    Ok(ndarray::Zip::from(exposed)
        .and(target)
        .map_collect(|&e, &t| match (e, t) {
            (false, true) => 0,
            (true, false) => 255,
            _ => 128,
        }))
}

pub fn write_difference(path: impl AsRef<Path>, exposed: &Array2<bool>, target: &Array2<bool>) -> Result<()> {
    write_atomic(
        path,
        &encode_pgm(&difference_levels(exposed, target)?, PgmEncoding::Text),
    )
}

/// Decoded netpbm image: grey levels scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub values: Array2<f64>,
    pub bilevel: bool,
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn location(&self) -> (usize, usize) {
        let before = &self.data[..self.pos];
        let line = before.iter().filter(|b| **b == b'\n').count() + 1;
        let start = before.iter().rposition(|b| *b == b'\n').map_or(0, |p| p + 1);
        (line, self.pos - start)
    }

    fn error(&self, msg: impl Into<String>) -> IltError {
        let (line, offset) = self.location();
        IltError::Parse {
            line,
            offset,
            msg: msg.into(),
        }
    }

    fn skip_space(&mut self) {
        while self.pos < self.data.len() {
            match self.data[self.pos] {
                b'#' => {
                    while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Result<&'a str> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.data.len() && !self.data[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("unexpected end of file"));
        }
        std::str::from_utf8(&self.data[start..self.pos]).map_err(|_| self.error("non-ASCII token"))
    }

    fn number(&mut self) -> Result<usize> {
        let t = self.token()?;
        t.parse()
            .map_err(|_| self.error(format!("expected an integer, found {t:?}")))
    }

    /// Next bit of a plain PBM, where digits need not be separated.
    fn bit(&mut self) -> Result<bool> {
        self.skip_space();
        match self.data.get(self.pos) {
            Some(b'0') => {
                self.pos += 1;
                Ok(false)
            }
            Some(b'1') => {
                self.pos += 1;
                Ok(true)
            }
            Some(_) => Err(self.error("expected 0 or 1")),
            None => Err(self.error("unexpected end of file")),
        }
    }
}

pub fn decode(data: &[u8]) -> Result<Raster> {
    let mut cur = Cursor { data, pos: 0 };
    let magic = cur.token()?;
    let cols = cur.number()?;
    let rows = cur.number()?;
    let count = rows * cols;
    match magic {
        "P1" => {
            let bits = (0..count).map(|_| cur.bit()).collect::<Result<Vec<_>>>()?;
            Ok(Raster {
                values: Array2::from_shape_vec((rows, cols), bits)
                    .expect("size checked")
                    .mapv(f64::from),
                bilevel: true,
            })
        }
        "P4" => {
            cur.pos += 1;
            let stride = cols.div_ceil(8);
            let body = data
                .get(cur.pos..cur.pos + stride * rows)
                .ok_or_else(|| cur.error("truncated P4 data"))?;
            let values = Array2::from_shape_fn((rows, cols), |(i, j)| {
                f64::from((body[i * stride + j / 8] >> (7 - j % 8)) & 1)
            });
            Ok(Raster { values, bilevel: true })
        }
        "P2" | "P5" => {
            let maxval = cur.number()?;
            if maxval == 0 || maxval > 255 {
                return Err(cur.error(format!("unsupported maxval {maxval}")));
            }
            let levels: Vec<usize> = if magic == "P2" {
                (0..count).map(|_| cur.number()).collect::<Result<_>>()?
            } else {
                cur.pos += 1;
                data.get(cur.pos..cur.pos + count)
                    .ok_or_else(|| cur.error("truncated P5 data"))?
                    .iter()
                    .map(|b| *b as usize)
                    .collect()
            };
            if let Some(v) = levels.iter().find(|v| **v > maxval) {
                return Err(cur.error(format!("level {v} exceeds maxval {maxval}")));
            }
            let scale = maxval as f64;
            Ok(Raster {
                values: Array2::from_shape_vec((rows, cols), levels)
                    .expect("size checked")
                    .mapv(|v| v as f64 / scale),
                bilevel: false,
            })
        }
        other => Err(IltError::Parse {
            line: 1,
            offset: 0,
            msg: format!("unknown netpbm magic {other:?}"),
        }),
    }
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let data = std::fs::read(path).map_err(|e| IltError::io(path, e))?;
    decode(&data)
}

/// Binary mask from a PBM (1 = foreground) or a PGM thresholded at one half.
pub fn read_mask(path: impl AsRef<Path>) -> Result<Array2<bool>> {
    Ok(read_raster(path)?.values.mapv(|v| v > 0.5))
}
