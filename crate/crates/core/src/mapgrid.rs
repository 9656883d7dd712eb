//! Geo-referenced gravity rasters.
//!
//! A [`GravityMap`] is a regular lon/lat grid whose cell centers carry the
//! coordinates: cell `(row, col)` sits at
//! `(origin_lon + col * res_lon, origin_lat + row * res_lat)`. Lookups are
//! nearest-neighbor; the HMM state space is the discrete set of cells so
//! there is no interpolation anywhere in this module.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::LonLat;

pub const MAP_MAGIC: &[u8; 8] = b"GMAP0001";
const HEADER_LEN: usize = 8 + 4 * 8 + 2 * 8;

/// Constant offset of synthetic fields, roughly Earth's surface gravity in mGal.
pub const SYNTH_BASE_MGAL: f64 = 9.79e5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    pub row: usize,
    pub col: usize,
}

impl CellIndex {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GravityMap {
    origin: LonLat,
    res_lon: f64,
    res_lat: f64,
    nrows: usize,
    ncols: usize,
    values: Vec<f64>,
}

impl GravityMap {
    /// `values` is row-major, `nrows * ncols` long, in mGal.
    pub fn new(
        origin: LonLat,
        res_lon: f64,
        res_lat: f64,
        nrows: usize,
        ncols: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if !(res_lon > 0.0 && res_lat > 0.0 && res_lon.is_finite() && res_lat.is_finite()) {
            return Err(Error::Config(format!(
                "map resolution must be positive, got ({res_lon}, {res_lat})"
            )));
        }
        if nrows == 0 || ncols == 0 {
            return Err(Error::Config("map must have at least one cell".into()));
        }
        if !origin.is_finite() {
            return Err(Error::Config("map origin must be finite".into()));
        }
        if values.len() != nrows * ncols {
            return Err(Error::LengthMismatch { expected: nrows * ncols, got: values.len() });
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Config(format!("non-finite map value at index {bad}")));
        }
        Ok(Self { origin, res_lon, res_lat, nrows, ncols, values })
    }

    /// A map filled with one value.
    pub fn constant(origin: LonLat, res: f64, nrows: usize, ncols: usize, value: f64) -> Result<Self> {
        Self::new(origin, res, res, nrows, ncols, vec![value; nrows * ncols])
    }

    pub fn origin(&self) -> LonLat {
        self.origin
    }
    pub fn res_lon(&self) -> f64 {
        self.res_lon
    }
    pub fn res_lat(&self) -> f64 {
        self.res_lat
    }
    pub fn nrows(&self) -> usize {
        self.nrows
    }
    pub fn ncols(&self) -> usize {
        self.ncols
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, cell: CellIndex) -> f64 {
        self.values[cell.row * self.ncols + cell.col]
    }

    pub fn cell_center(&self, cell: CellIndex) -> LonLat {
        LonLat::new(
            self.origin.lon + cell.col as f64 * self.res_lon,
            self.origin.lat + cell.row as f64 * self.res_lat,
        )
    }

    /// Center of the cell whose extent contains `position`.
    ///
    /// A position exactly halfway between two centers goes to the lower index.
    pub fn nearest_cell(&self, position: LonLat) -> Result<CellIndex> {
        let col = round_half_down((position.lon - self.origin.lon) / self.res_lon, self.ncols);
        let row = round_half_down((position.lat - self.origin.lat) / self.res_lat, self.nrows);
        match (row, col) {
            (Some(row), Some(col)) => Ok(CellIndex { row, col }),
            _ => Err(Error::OutOfBounds { lon: position.lon, lat: position.lat }),
        }
    }

    /// Nearest-neighbor gravity value at `position` (the map's look-up function).
    pub fn lookup(&self, position: LonLat) -> Result<f64> {
        Ok(self.value(self.nearest_cell(position)?))
    }

    /// The `n x n` window of cells centred on the cell containing `s_ins`.
    pub fn build_window(&self, t: usize, s_ins: LonLat, n: usize) -> Result<GridWindow> {
        if n < 3 || n.is_multiple_of(2) {
            return Err(Error::Config(format!("window size must be odd and >= 3, got {n}")));
        }
        let center = self.nearest_cell(s_ins)?;
        let h = n / 2;
        if center.row < h || center.col < h || center.row + h >= self.nrows || center.col + h >= self.ncols {
            return Err(Error::WindowClipped { row: center.row, col: center.col, n });
        }
        let mut cells = Vec::with_capacity(n * n);
        for dr in 0..n {
            for dc in 0..n {
                let index = CellIndex::new(center.row + dr - h, center.col + dc - h);
                cells.push(WindowCell {
                    label: dr * n + dc + 1,
                    index,
                    position: self.cell_center(index),
                    gravity: self.value(index),
                });
            }
        }
        Ok(GridWindow { t, center, n, res_lon: self.res_lon, res_lat: self.res_lat, cells })
    }

    /// Keeps every `factor`-th row and column starting at index 0.
    pub fn downsample(&self, factor: usize) -> Result<GravityMap> {
        if factor == 0 {
            return Err(Error::Config("downsample factor must be >= 1".into()));
        }
        let nrows = self.nrows.div_ceil(factor);
        let ncols = self.ncols.div_ceil(factor);
        let mut values = Vec::with_capacity(nrows * ncols);
        for r in (0..self.nrows).step_by(factor) {
            for c in (0..self.ncols).step_by(factor) {
                values.push(self.value(CellIndex::new(r, c)));
            }
        }
        GravityMap::new(
            self.origin,
            self.res_lon * factor as f64,
            self.res_lat * factor as f64,
            nrows,
            ncols,
            values,
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.values.len());
        out.extend_from_slice(MAP_MAGIC);
        for x in [self.origin.lon, self.origin.lat, self.res_lon, self.res_lat] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out.extend_from_slice(&(self.nrows as u64).to_le_bytes());
        out.extend_from_slice(&(self.ncols as u64).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<GravityMap> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::MalformedFile("truncated header".into()));
        }
        if &bytes[..8] != MAP_MAGIC {
            return Err(Error::MalformedFile("bad magic".into()));
        }
        let f64_at = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
        let u64_at = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
        let origin = LonLat::new(f64_at(8), f64_at(16));
        let (res_lon, res_lat) = (f64_at(24), f64_at(32));
        let (nrows, ncols) = (u64_at(40), u64_at(48));
        let count = nrows
            .checked_mul(ncols)
            .and_then(|c| usize::try_from(c).ok())
            .ok_or_else(|| Error::MalformedFile("cell count overflows".into()))?;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != count.saturating_mul(8) {
            return Err(Error::MalformedFile(format!(
                "expected {} value bytes, found {}",
                count * 8,
                payload.len()
            )));
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::MalformedFile("non-finite value".into()));
        }
        GravityMap::new(origin, res_lon, res_lat, nrows as usize, ncols as usize, values)
            .map_err(|e| Error::MalformedFile(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    /// Loads a `GMAP0001` binary file, or a CSV raster if the file does not
    /// start with the binary magic.
    pub fn load(path: impl AsRef<Path>) -> Result<GravityMap> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.starts_with(MAP_MAGIC) {
            GravityMap::from_bytes(&bytes)
        } else if bytes.starts_with(b"GMAP") {
            Err(Error::MalformedFile("bad magic".into()))
        } else {
            GravityMap::from_csv(BufReader::new(&bytes[..]))
        }
    }

    /// CSV raster: one line `origin_lon,origin_lat,res_lon,res_lat` (optionally
    /// preceded by a line of column names), then one line of values per row,
    /// row 0 first.
    pub fn from_csv(reader: impl BufRead) -> Result<GravityMap> {
        let bad = |msg: String| Error::MalformedFile(msg);
        let mut lines = reader
            .lines()
            .map(|l| l.map_err(Error::from))
            .filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
        let parse_row = |line: &str| -> std::result::Result<Vec<f64>, String> {
            line.split(',')
                .map(|f| f.trim().parse::<f64>().map_err(|_| format!("bad number {f:?}")))
                .collect()
        };
        let first = lines.next().ok_or_else(|| bad("empty file".into()))??;
        let header = match parse_row(&first) {
            Ok(h) => h,
            Err(_) => {
                let second = lines.next().ok_or_else(|| bad("missing header values".into()))??;
                parse_row(&second).map_err(bad)?
            }
        };
        let [lon, lat, res_lon, res_lat] = header[..] else {
            return Err(bad(format!("header needs 4 fields, found {}", header.len())));
        };
        let mut values = Vec::new();
        let mut ncols = None;
        let mut nrows = 0;
        for line in lines {
            let row = parse_row(&line?).map_err(bad)?;
            match ncols {
                None => ncols = Some(row.len()),
                Some(c) if c != row.len() => {
                    return Err(bad(format!("row {nrows} has {} values, expected {c}", row.len())))
                }
                _ => {}
            }
            values.extend(row);
            nrows += 1;
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite value".into()));
        }
        GravityMap::new(LonLat::new(lon, lat), res_lon, res_lat, nrows, ncols.unwrap_or(0), values)
            .map_err(|e| bad(e.to_string()))
    }
}

/// Rounds `f` to the nearest index in `0..len`, ties toward the lower index.
fn round_half_down(f: f64, len: usize) -> Option<usize> {
    if !(f > -0.5 && f <= len as f64 - 0.5) {
        return None;
    }
    let i = (f - 0.5).ceil();
    Some((i.max(0.0) as usize).min(len - 1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowCell {
    /// 1-based, row-major over the window.
    pub label: usize,
    pub index: CellIndex,
    pub position: LonLat,
    pub gravity: f64,
}

/// The `n x n` neighborhood around one INS estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct GridWindow {
    pub t: usize,
    pub center: CellIndex,
    pub n: usize,
    pub res_lon: f64,
    pub res_lat: f64,
    pub cells: Vec<WindowCell>,
}

impl GridWindow {
    pub fn center_label(&self) -> usize {
        (self.n * self.n).div_ceil(2)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Cell by 1-based label.
    pub fn cell(&self, label: usize) -> &WindowCell {
        &self.cells[label - 1]
    }

    /// Sub-cell center `l` (1-based, row-major) of cell `j` split `o x o` ways.
    pub fn subcell_center(&self, j: usize, l: usize, o: usize) -> LonLat {
        let h = (o / 2) as isize;
        let kr = ((l - 1) / o) as isize - h;
        let kc = ((l - 1) % o) as isize - h;
        subcell_offset(self.cell(j).position, kr, kc, self.res_lon, self.res_lat, o)
    }

    pub fn subcell_centers(&self, j: usize, o: usize) -> Vec<LonLat> {
        assert!(o % 2 == 1, "sub-cell factor must be odd");
        assert!((1..=self.len()).contains(&j), "label {j} out of range");
        (1..=o * o).map(|l| self.subcell_center(j, l, o)).collect()
    }
}

/// Position of the sub-cell `(kr, kc)` lattice steps from `center`; shared by
/// every consumer so all of them agree bit-for-bit.
#[inline]
pub(crate) fn subcell_offset(center: LonLat, kr: isize, kc: isize, res_lon: f64, res_lat: f64, o: usize) -> LonLat {
    if o == 1 {
        return center;
    }
    LonLat::new(
        center.lon + kc as f64 * (res_lon / o as f64),
        center.lat + kr as f64 * (res_lat / o as f64),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Roughness {
    Smooth,
    Rough,
}

impl FromStr for Roughness {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "smooth" => Ok(Roughness::Smooth),
            "rough" => Ok(Roughness::Rough),
            other => Err(Error::Config(format!("unknown roughness {other:?}"))),
        }
    }
}

impl Roughness {
    /// (bump count, amplitude bound in mGal, width range in cells)
    fn recipe(self) -> (usize, f64, (f64, f64)) {
        match self {
            Roughness::Rough => (200, 40.0, (2.0, 10.0)),
            Roughness::Smooth => (40, 8.0, (20.0, 60.0)),
        }
    }
}

/// Parameters for a synthetic field made of random Gaussian bumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub origin: LonLat,
    pub extent_lon: f64,
    pub extent_lat: f64,
    pub resolution: f64,
    pub roughness: Roughness,
    pub seed: u64,
    /// Overrides the roughness preset's bump count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bumps: Option<usize>,
}

pub fn synth_map(p: &SynthParams) -> Result<GravityMap> {
    let ncols = (p.extent_lon / p.resolution).round() as usize;
    let nrows = (p.extent_lat / p.resolution).round() as usize;
    if ncols < 64 || nrows < 64 {
        return Err(Error::Config(format!(
            "synthetic map needs at least 64x64 cells, got {nrows}x{ncols}"
        )));
    }
    let (preset_k, amp, (wmin, wmax)) = p.roughness.recipe();
    let k = p.bumps.unwrap_or(preset_k);
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let bumps: Vec<(f64, f64, f64, f64)> = (0..k)
        .map(|_| {
            let col = rng.gen_range(0.0..ncols as f64);
            let row = rng.gen_range(0.0..nrows as f64);
            let a = rng.gen_range(-amp..amp);
            let w = rng.gen_range(wmin..wmax);
            (row, col, a, 1.0 / (2.0 * w * w))
        })
        .collect();
    let mut values = vec![SYNTH_BASE_MGAL; nrows * ncols];
    for (i, v) in values.iter_mut().enumerate() {
        let (r, c) = ((i / ncols) as f64, (i % ncols) as f64);
        let mut acc = 0.0;
        for &(br, bc, a, inv) in &bumps {
            let d2 = (r - br).powi(2) + (c - bc).powi(2);
            acc += a * (-d2 * inv).exp();
        }
        *v += acc;
    }
    GravityMap::new(p.origin, p.resolution, p.resolution, nrows, ncols, values)
}
