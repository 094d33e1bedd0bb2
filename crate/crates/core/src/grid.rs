//! Occupancy grids and their file formats.
//!
//! Coordinate convention, used everywhere in this crate: `x` is the column
//! index, `y` is the row index, `y` increases downward, angles are measured
//! in radians from the +x axis (so a positive angle turns toward +y).
//! Continuous coordinates are in cell units; multiply by `resolution` to get
//! meters.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

/// Ternary state of a grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellState {
    Free,
    Occupied,
    Unknown,
}

/// A cell address: `x` = column, `y` = row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub fn new(x: i32, y: i32) -> Self {
        Cell { x, y }
    }

    /// Center of the cell in continuous cell coordinates.
    pub fn center(&self) -> (f64, f64) {
        (self.x as f64 + 0.5, self.y as f64 + 0.5)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// Continuous robot pose in cell coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64) -> Self {
        Pose { x, y }
    }

    /// Pose at the center of `cell`.
    pub fn at_cell(cell: Cell) -> Self {
        let (x, y) = cell.center();
        Pose { x, y }
    }

    pub fn cell(&self) -> Cell {
        Cell::new(self.x.floor() as i32, self.y.floor() as i32)
    }
}

/// Whether a loaded grid is a complete ground-truth map or a partial belief.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    GroundTruth,
    Belief,
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed PGM header: {0}")]
    MalformedHeader(String),
    #[error("truncated PGM payload: expected {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("ground-truth map contains an unknown (mid-gray) pixel at {0}")]
    UnknownInGroundTruth(Cell),
    #[error("lattice mismatch: {0}x{1} vs {2}x{3}")]
    LatticeMismatch(usize, usize, usize, usize),
    #[error("invalid grid dimensions {0}x{1}")]
    BadDimensions(usize, usize),
}

/// 2D occupancy grid, row-major, origin at the top-left cell.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    width: usize,
    height: usize,
    /// Meters per cell.
    resolution: f64,
    cells: Vec<CellState>,
}

impl OccupancyGrid {
    pub const DEFAULT_RESOLUTION: f64 = 0.1;

    pub fn new(width: usize, height: usize, resolution: f64, fill: CellState) -> Self {
        assert!(width > 0 && height > 0, "empty grid");
        assert!(resolution > 0.0, "resolution must be positive");
        OccupancyGrid {
            width,
            height,
            resolution,
            cells: vec![fill; width * height],
        }
    }

    /// All-Unknown belief grid on the same lattice as `other`.
    pub fn unknown_like(other: &OccupancyGrid) -> Self {
        Self::new(other.width, other.height, other.resolution, CellState::Unknown)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.x >= 0 && cell.y >= 0 && (cell.x as usize) < self.width && (cell.y as usize) < self.height
    }

    fn idx(&self, cell: Cell) -> usize {
        debug_assert!(self.in_bounds(cell));
        cell.y as usize * self.width + cell.x as usize
    }

    /// State of `cell`; out-of-bounds reads as Unknown.
    pub fn get(&self, cell: Cell) -> CellState {
        if self.in_bounds(cell) {
            self.cells[self.idx(cell)]
        } else {
            CellState::Unknown
        }
    }

    pub fn set(&mut self, cell: Cell, state: CellState) {
        let i = self.idx(cell);
        self.cells[i] = state;
    }

    pub fn cells(&self) -> &[CellState] {
        &self.cells
    }

    pub fn iter_cells(&self) -> impl Iterator<Item = (Cell, CellState)> + '_ {
        let w = self.width;
        self.cells
            .iter()
            .enumerate()
            .map(move |(i, &s)| (Cell::new((i % w) as i32, (i / w) as i32), s))
    }

    pub fn count(&self, state: CellState) -> usize {
        self.cells.iter().filter(|&&s| s == state).count()
    }

    pub fn same_lattice(&self, other: &OccupancyGrid) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn has_unknown(&self) -> bool {
        self.cells.contains(&CellState::Unknown)
    }

    /// Load a grid from a binary PGM (P5) file.
    ///
    /// Pixel thresholds: `< 100` Occupied, `> 200` Free, otherwise Unknown.
    /// `GridKind::GroundTruth` rejects any Unknown cell.
    pub fn load(path: impl AsRef<Path>, kind: GridKind) -> Result<Self, GridError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| GridError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_pgm_bytes(&bytes, kind)
    }

    pub fn from_pgm_bytes(bytes: &[u8], kind: GridKind) -> Result<Self, GridError> {
        let (width, height, maxval, offset) = parse_pgm_header(bytes)?;
        if maxval != 255 {
            return Err(GridError::MalformedHeader(format!(
                "maxval {maxval}, expected 255"
            )));
        }
        let expected = width * height;
        let payload = &bytes[offset..];
        if payload.len() < expected {
            return Err(GridError::Truncated {
                expected,
                got: payload.len(),
            });
        }
        let mut cells = Vec::with_capacity(expected);
        for (i, &p) in payload[..expected].iter().enumerate() {
            let state = if p < 100 {
                CellState::Occupied
            } else if p > 200 {
                CellState::Free
            } else {
                CellState::Unknown
            };
            if state == CellState::Unknown && kind == GridKind::GroundTruth {
                let cell = Cell::new((i % width) as i32, (i / width) as i32);
                return Err(GridError::UnknownInGroundTruth(cell));
            }
            cells.push(state);
        }
        Ok(OccupancyGrid {
            width,
            height,
            resolution: Self::DEFAULT_RESOLUTION,
            cells,
        })
    }

    /// Save as binary PGM. Free = 255, Occupied = 0, Unknown = 127.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GridError> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|source| GridError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut w = BufWriter::new(file);
        let io = |source| GridError::Io {
            path: path.display().to_string(),
            source,
        };
        write!(w, "P5\n{} {}\n255\n", self.width, self.height).map_err(io)?;
        let bytes: Vec<u8> = self
            .cells
            .iter()
            .map(|s| match s {
                CellState::Occupied => 0u8,
                CellState::Unknown => 127,
                CellState::Free => 255,
            })
            .collect();
        w.write_all(&bytes).map_err(io)?;
        w.flush().map_err(io)
    }

    /// Set of Occupied cells, in row-major order.
    pub fn occupied_set(&self) -> BTreeSet<Cell> {
        self.iter_cells()
            .filter(|(_, s)| *s == CellState::Occupied)
            .map(|(c, _)| c)
            .collect()
    }
}

fn parse_pgm_header(bytes: &[u8]) -> Result<(usize, usize, usize, usize), GridError> {
    // Header: magic, width, height, maxval as whitespace-separated tokens,
    // with '#' comments allowed, then a single whitespace byte before payload.
    let mut pos = 0usize;
    let mut tokens: Vec<String> = Vec::new();
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(GridError::MalformedHeader("unexpected end of header".into()));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if tokens[0] != "P5" {
        return Err(GridError::MalformedHeader(format!(
            "magic {:?}, expected P5",
            tokens[0]
        )));
    }
    let width: usize = tokens[1]
        .parse()
        .map_err(|_| GridError::MalformedHeader(format!("bad width {:?}", tokens[1])))?;
    let height: usize = tokens[2]
        .parse()
        .map_err(|_| GridError::MalformedHeader(format!("bad height {:?}", tokens[2])))?;
    let maxval: usize = tokens[3]
        .parse()
        .map_err(|_| GridError::MalformedHeader(format!("bad maxval {:?}", tokens[3])))?;
    if width == 0 || height == 0 {
        return Err(GridError::BadDimensions(width, height));
    }
    // Exactly one whitespace byte separates maxval from the payload.
    pos += 1;
    Ok((width, height, maxval, pos))
}

/// Boolean mask on the same lattice as an occupancy grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryGrid {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryGrid {
    pub fn new(width: usize, height: usize) -> Self {
        BinaryGrid {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn like(grid: &OccupancyGrid) -> Self {
        Self::new(grid.width(), grid.height())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.x >= 0 && cell.y >= 0 && (cell.x as usize) < self.width && (cell.y as usize) < self.height
    }

    pub fn get(&self, cell: Cell) -> bool {
        self.in_bounds(cell) && self.bits[cell.y as usize * self.width + cell.x as usize]
    }

    pub fn set(&mut self, cell: Cell, value: bool) {
        assert!(self.in_bounds(cell));
        self.bits[cell.y as usize * self.width + cell.x as usize] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn iter_set(&self) -> impl Iterator<Item = Cell> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| Cell::new((i % w) as i32, (i / w) as i32))
    }

    pub fn union_with(&mut self, other: &BinaryGrid) {
        assert_eq!(self.bits.len(), other.bits.len());
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= *b;
        }
    }
}

/// Float accumulation grid (back-projection evidence lives here).
#[derive(Debug, Clone, PartialEq)]
pub struct FloatGrid {
    width: usize,
    height: usize,
    /// Meters per cell.
    resolution: f64,
    values: Vec<f64>,
}

impl FloatGrid {
    pub fn new(width: usize, height: usize, resolution: f64) -> Self {
        FloatGrid {
            width,
            height,
            resolution,
            values: vec![0.0; width * height],
        }
    }

    pub fn like(grid: &OccupancyGrid) -> Self {
        Self::new(grid.width(), grid.height(), grid.resolution())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.x >= 0 && cell.y >= 0 && (cell.x as usize) < self.width && (cell.y as usize) < self.height
    }

    pub fn get(&self, cell: Cell) -> f64 {
        if self.in_bounds(cell) {
            self.values[cell.y as usize * self.width + cell.x as usize]
        } else {
            0.0
        }
    }

    pub fn add(&mut self, cell: Cell, value: f64) {
        if self.in_bounds(cell) {
            self.values[cell.y as usize * self.width + cell.x as usize] += value;
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_cell(&self) -> Option<(Cell, f64)> {
        let w = self.width;
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .max_by(|(ia, a), (ib, b)| a.partial_cmp(b).unwrap().then(ib.cmp(ia)))
            .map(|(i, &v)| (Cell::new((i % w) as i32, (i / w) as i32), v))
    }

    /// Export as a text header (`dims` + resolution) followed by f32 LE values.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GridError> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|source| GridError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut w = BufWriter::new(file);
        let io = |source| GridError::Io {
            path: path.display().to_string(),
            source,
        };
        write!(w, "BPF1 {} {} {}\n", self.width, self.height, self.resolution).map_err(io)?;
        for v in &self.values {
            w.write_all(&(*v as f32).to_le_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GridError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| GridError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| GridError::MalformedHeader("missing BPF header line".into()))?;
        let header = String::from_utf8_lossy(&bytes[..newline]);
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "BPF1" {
            return Err(GridError::MalformedHeader(format!("bad BPF header {header:?}")));
        }
        let width: usize = fields[1]
            .parse()
            .map_err(|_| GridError::MalformedHeader("bad width".into()))?;
        let height: usize = fields[2]
            .parse()
            .map_err(|_| GridError::MalformedHeader("bad height".into()))?;
        let resolution: f64 = fields[3]
            .parse()
            .map_err(|_| GridError::MalformedHeader("bad resolution".into()))?;
        let payload = &bytes[newline + 1..];
        let expected = width * height * 4;
        if payload.len() < expected {
            return Err(GridError::Truncated {
                expected,
                got: payload.len(),
            });
        }
        let values = payload[..expected]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Ok(FloatGrid {
            width,
            height,
            resolution,
            values,
        })
    }
}

/// 4-neighborhood offsets, fixed order for deterministic traversals.
pub const NEIGHBORS4: [(i32, i32); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// 8-neighborhood offsets.
pub const NEIGHBORS8: [(i32, i32); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
];
