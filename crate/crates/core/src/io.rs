//! File formats: headerless matrix CSV, index lists, PGM images, JSON.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// One matrix row per line, 17 significant digits, so a round trip is
/// bit-exact.
pub fn format_matrix_csv(m: &DenseMatrix) -> String {
    let mut out = String::with_capacity(m.len() * 24);
    for i in 0..m.rows() {
        let line: Vec<String> = m.row(i).iter().map(|x| format!("{x:.16e}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn write_matrix_csv(path: impl AsRef<Path>, m: &DenseMatrix) -> Result<()> {
    write_text(path.as_ref(), &format_matrix_csv(m))
}

pub fn parse_matrix_csv(text: &str, path: &Path) -> Result<DenseMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| parse_err(path, k + 1, format!("{:?}: {e}", f.trim())))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    path,
                    k + 1,
                    format!("expected {} fields, found {}", first.len(), row.len()),
                ));
            }
        }
        if let Some(c) = row.iter().position(|x| !x.is_finite()) {
            return Err(parse_err(
                path,
                k + 1,
                format!("non-finite value in field {}", c + 1),
            ));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(path, 0, "no data"));
    }
    DenseMatrix::from_rows(&rows)
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    parse_matrix_csv(&read_text(path)?, path)
}

/// `row,col` per line.
pub fn write_mask_csv(path: impl AsRef<Path>, mask: &[(usize, usize)]) -> Result<()> {
    let text: String = mask.iter().map(|(i, j)| format!("{i},{j}\n")).collect();
    write_text(path.as_ref(), &text)
}

pub fn read_mask_csv(path: impl AsRef<Path>) -> Result<Vec<(usize, usize)>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (k, line) in read_text(path)?.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: Option<(usize, usize)> = line
            .split_once(',')
            .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
        out.push(
            parsed.ok_or_else(|| parse_err(path, k + 1, format!("expected row,col: {line:?}")))?,
        );
    }
    Ok(out)
}

/// One non-negative integer per line (labels, column indices).
pub fn write_index_list(path: impl AsRef<Path>, xs: &[usize]) -> Result<()> {
    let text: String = xs.iter().map(|x| format!("{x}\n")).collect();
    write_text(path.as_ref(), &text)
}

pub fn read_index_list(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            l.trim()
                .parse()
                .map_err(|_| parse_err(path, k + 1, format!("expected an integer: {:?}", l.trim())))
        })
        .collect()
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidConfig(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    write_text(path, &text)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PgmImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u32,
    /// Raw pixel values, row-major.
    pub pixels: Vec<f64>,
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Option<&str> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .filter(|t| !t.is_empty())
    }

    fn number(&mut self, what: &str) -> std::result::Result<u32, String> {
        let tok = self.token().ok_or_else(|| format!("missing {what}"))?;
        tok.parse().map_err(|_| format!("bad {what}: {tok:?}"))
    }
}

/// Parses ASCII (`P2`) and binary (`P5`) greymaps. Pixel values are kept in
/// raw units, not rescaled by `maxval`.
pub fn parse_pgm(bytes: &[u8], path: &Path) -> Result<PgmImage> {
    let err = |msg: String| parse_err(path, 0, msg);
    let mut h = Header { bytes, pos: 0 };
    let magic = h
        .token()
        .ok_or_else(|| err("empty file".into()))?
        .to_string();
    if magic != "P2" && magic != "P5" {
        return Err(err(format!("unsupported magic {magic:?}")));
    }
    let width = h.number("width").map_err(err)? as usize;
    let height = h.number("height").map_err(err)? as usize;
    let maxval = h.number("maxval").map_err(err)?;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(err(format!("bad header {width}x{height} maxval {maxval}")));
    }
    let count = width * height;
    let pixels: Vec<f64> = if magic == "P2" {
        let mut px = Vec::with_capacity(count);
        for _ in 0..count {
            let v = h.number("pixel").map_err(err)?;
            if v > maxval {
                return Err(err(format!("pixel {v} exceeds maxval {maxval}")));
            }
            px.push(f64::from(v));
        }
        px
    } else {
        // Exactly one whitespace byte separates the header from the raster.
        let start = h.pos + 1;
        let wide = maxval > 255;
        let need = count * if wide { 2 } else { 1 };
        let raster = bytes
            .get(start..start + need)
            .ok_or_else(|| err(format!("raster truncated: need {need} bytes")))?;
        let px: Vec<f64> = if wide {
            raster
                .chunks_exact(2)
                .map(|b| f64::from(u16::from_be_bytes([b[0], b[1]])))
                .collect()
        } else {
            raster.iter().map(|&b| f64::from(b)).collect()
        };
        if let Some(v) = px.iter().find(|&&v| v > f64::from(maxval)) {
            return Err(err(format!("pixel {v} exceeds maxval {maxval}")));
        }
        px
    };
    Ok(PgmImage {
        width,
        height,
        maxval,
        pixels,
    })
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<PgmImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes, path)
}

/// Loads every `.pgm` file of `dir` in file-name order, one image per
/// column. Returns the matrix and the common `(height, width)`.
pub fn load_pgm_dir(dir: impl AsRef<Path>) -> Result<(DenseMatrix, (usize, usize))> {
    let dir = dir.as_ref();
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
        })
        .collect();
    files.sort();
    let first = files
        .first()
        .ok_or_else(|| parse_err(dir, 0, "no .pgm files"))?;
    let img = read_pgm(first)?;
    let shape = (img.height, img.width);
    let mut columns = vec![img.pixels];
    for f in &files[1..] {
        let img = read_pgm(f)?;
        if (img.height, img.width) != shape {
            return Err(parse_err(
                f,
                0,
                format!(
                    "image is {}x{}, expected {}x{}",
                    img.height, img.width, shape.0, shape.1
                ),
            ));
        }
        columns.push(img.pixels);
    }
    Ok((
        DenseMatrix::from_columns(shape.0 * shape.1, &columns)?,
        shape,
    ))
}
