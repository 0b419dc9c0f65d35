use std::fmt::Write as _;
use std::path::Path;

use super::{ensure_parent, file_err, parse_err, IoError};

/// Raster in ESRI ASCII layout, stored south row first (`j * ncols + i`).
///
/// Files list the northern row first, as the format requires. Non-square
/// cells are written with `dx`/`dy` header lines instead of `cellsize`.
#[derive(Debug, Clone, PartialEq)]
pub struct AsciiGrid {
    pub ncols: usize,
    pub nrows: usize,
    pub xll: f64,
    pub yll: f64,
    pub dx: f64,
    pub dy: f64,
    pub nodata: f64,
    pub values: Vec<f64>,
}

impl AsciiGrid {
    pub fn new(ncols: usize, nrows: usize, dx: f64, dy: f64, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), ncols * nrows);
        Self { ncols, nrows, xll: 0.0, yll: 0.0, dx, dy, nodata: -9999.0, values }
    }

    pub fn from_bools(ncols: usize, nrows: usize, dx: f64, dy: f64, v: &[bool]) -> Self {
        Self::new(ncols, nrows, dx, dy, v.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
    }

    pub fn to_bools(&self) -> Vec<bool> {
        self.values.iter().map(|&v| v != 0.0 && v != self.nodata).collect()
    }

    pub fn to_string_repr(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "ncols {}", self.ncols);
        let _ = writeln!(s, "nrows {}", self.nrows);
        let _ = writeln!(s, "xllcorner {}", self.xll);
        let _ = writeln!(s, "yllcorner {}", self.yll);
        if self.dx == self.dy {
            let _ = writeln!(s, "cellsize {}", self.dx);
        } else {
            let _ = writeln!(s, "dx {}", self.dx);
            let _ = writeln!(s, "dy {}", self.dy);
        }
        let _ = writeln!(s, "NODATA_value {}", self.nodata);
        for j in (0..self.nrows).rev() {
            let row = &self.values[j * self.ncols..(j + 1) * self.ncols];
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, IoError> {
        let mut ncols = None;
        let mut nrows = None;
        let (mut xll, mut yll) = (0.0, 0.0);
        let (mut dx, mut dy) = (None, None);
        let mut nodata = -9999.0;
        let mut values = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let first = line.split_whitespace().next().unwrap_or_default();
            if first.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
                let mut it = line.split_whitespace();
                let key = it.next().unwrap_or_default().to_ascii_lowercase();
                let val = it.next().ok_or_else(|| parse_err(path, format!("line {}: missing value", ln + 1)))?;
                let num: f64 = val
                    .parse()
                    .map_err(|_| parse_err(path, format!("line {}: bad number {val:?}", ln + 1)))?;
                match key.as_str() {
                    "ncols" => ncols = Some(num as usize),
                    "nrows" => nrows = Some(num as usize),
                    "xllcorner" | "xllcenter" => xll = num,
                    "yllcorner" | "yllcenter" => yll = num,
                    "cellsize" => {
                        dx = Some(num);
                        dy = Some(num);
                    }
                    "dx" => dx = Some(num),
                    "dy" => dy = Some(num),
                    "nodata_value" => nodata = num,
                    other => return Err(parse_err(path, format!("unknown header key {other:?}"))),
                }
                continue;
            }
            for tok in line.split_whitespace() {
                let v: f64 =
                    tok.parse().map_err(|_| parse_err(path, format!("line {}: bad value {tok:?}", ln + 1)))?;
                values.push(v);
            }
        }
        let ncols = ncols.ok_or_else(|| parse_err(path, "missing ncols"))?;
        let nrows = nrows.ok_or_else(|| parse_err(path, "missing nrows"))?;
        let dx = dx.ok_or_else(|| parse_err(path, "missing cellsize"))?;
        let dy = dy.ok_or_else(|| parse_err(path, "missing cellsize"))?;
        if values.len() != ncols * nrows {
            return Err(parse_err(path, format!("expected {} values, found {}", ncols * nrows, values.len())));
        }
        // flip to south-first storage
        let mut flipped = Vec::with_capacity(values.len());
        for j in (0..nrows).rev() {
            flipped.extend_from_slice(&values[j * ncols..(j + 1) * ncols]);
        }
        Ok(Self { ncols, nrows, xll, yll, dx, dy, nodata, values: flipped })
    }
}

pub fn write_ascii_grid(path: &Path, grid: &AsciiGrid) -> Result<(), IoError> {
    ensure_parent(path)?;
    std::fs::write(path, grid.to_string_repr()).map_err(file_err(path))
}

pub fn read_ascii_grid(path: &Path) -> Result<AsciiGrid, IoError> {
    let text = std::fs::read_to_string(path).map_err(file_err(path))?;
    AsciiGrid::parse(&text, path)
}
