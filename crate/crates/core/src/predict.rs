//! Global map prediction: complete the belief into an ensemble of full map
//! hypotheses plus a per-cell disagreement score.
//!
//! The built-in predictor varies a morphological closing radius over the
//! observed walls and NLOS evidence; an external adapter exchanges PGM files
//! with an arbitrary predictor process so trained models can be plugged in.

use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::grid::{BinaryGrid, Cell, CellState, GridError, GridKind, OccupancyGrid};

/// Inputs to a predictor: partial belief (carved cells already Free), binary
/// occupied-evidence grid, and the unknown mask derived from the belief.
#[derive(Debug, Clone)]
pub struct PredictorInput {
    pub belief: OccupancyGrid,
    pub evidence: BinaryGrid,
}

impl PredictorInput {
    pub fn new(belief: OccupancyGrid, evidence: BinaryGrid) -> Self {
        assert_eq!(belief.width(), evidence.width());
        assert_eq!(belief.height(), evidence.height());
        PredictorInput { belief, evidence }
    }

    /// 1 where the belief is Unknown.
    pub fn unknown_mask(&self) -> BinaryGrid {
        let mut m = BinaryGrid::like(&self.belief);
        for (c, s) in self.belief.iter_cells() {
            if s == CellState::Unknown {
                m.set(c, true);
            }
        }
        m
    }
}

/// K complete map hypotheses plus per-cell disagreement in [0, 1].
#[derive(Debug, Clone)]
pub struct PredictedEnsemble {
    pub members: Vec<OccupancyGrid>,
    /// 4p(1-p) where p is the fraction of members labeling the cell Occupied.
    pub disagreement: Vec<f64>,
}

impl PredictedEnsemble {
    pub fn disagreement_at(&self, cell: Cell) -> f64 {
        let w = self.members[0].width();
        if !self.members[0].in_bounds(cell) {
            return 0.0;
        }
        self.disagreement[cell.y as usize * w + cell.x as usize]
    }

    /// Per-cell majority vote across members (ties go to Occupied).
    pub fn majority_map(&self) -> OccupancyGrid {
        let proto = &self.members[0];
        let mut out = OccupancyGrid::new(
            proto.width(),
            proto.height(),
            proto.resolution(),
            CellState::Free,
        );
        let k = self.members.len();
        for (c, _) in proto.iter_cells() {
            let occ = self
                .members
                .iter()
                .filter(|m| m.get(c) == CellState::Occupied)
                .count();
            if 2 * occ >= k {
                out.set(c, CellState::Occupied);
            }
        }
        out
    }
}

/// Per-cell variance-like disagreement over ensemble members.
pub fn disagreement_of(members: &[OccupancyGrid]) -> Vec<f64> {
    assert!(!members.is_empty());
    let proto = &members[0];
    for m in members {
        assert!(m.same_lattice(proto), "ensemble members share one lattice");
    }
    let k = members.len() as f64;
    let mut out = vec![0.0; proto.len()];
    for (i, slot) in out.iter_mut().enumerate() {
        let c = Cell::new((i % proto.width()) as i32, (i / proto.width()) as i32);
        let occ = members
            .iter()
            .filter(|m| m.get(c) == CellState::Occupied)
            .count() as f64;
        let p = occ / k;
        *slot = 4.0 * p * (1.0 - p);
    }
    out
}

/// Square-structuring-element dilation by `radius` cells.
fn dilate(src: &BinaryGrid, radius: i32) -> BinaryGrid {
    if radius == 0 {
        return src.clone();
    }
    let mut out = BinaryGrid::new(src.width(), src.height());
    for c in src.iter_set() {
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                let n = Cell::new(c.x + dx, c.y + dy);
                if out.in_bounds(n) {
                    out.set(n, true);
                }
            }
        }
    }
    out
}

/// Square-structuring-element erosion; cells outside the grid count as
/// foreground so border seeds survive.
fn erode(src: &BinaryGrid, radius: i32) -> BinaryGrid {
    if radius == 0 {
        return src.clone();
    }
    let mut out = BinaryGrid::new(src.width(), src.height());
    for y in 0..src.height() as i32 {
        'cell: for x in 0..src.width() as i32 {
            for dy in -radius..=radius {
                for dx in -radius..=radius {
                    let n = Cell::new(x + dx, y + dy);
                    if src.in_bounds(n) && !src.get(n) {
                        continue 'cell;
                    }
                }
            }
            out.set(Cell::new(x, y), true);
        }
    }
    out
}

/// Morphological closing (dilate then erode). Seeds are re-added afterwards,
/// so the result always contains the input set.
pub fn closing(src: &BinaryGrid, radius: i32) -> BinaryGrid {
    let mut closed = erode(&dilate(src, radius), radius);
    closed.union_with(src);
    closed
}

/// Built-in heuristic ensemble: each member closes the observed walls plus
/// NLOS evidence with a different structuring radius; unknown cells not
/// reached by the closing default to Free.
pub fn predict_builtin(input: &PredictorInput, radii: &[i32]) -> PredictedEnsemble {
    assert!(!radii.is_empty(), "need at least one closing radius");
    let belief = &input.belief;
    let mut seeds = BinaryGrid::like(belief);
    for (c, s) in belief.iter_cells() {
        if s == CellState::Occupied {
            seeds.set(c, true);
        }
    }
    seeds.union_with(&input.evidence);
    let members: Vec<OccupancyGrid> = radii
        .iter()
        .map(|&r| {
            let closed = closing(&seeds, r);
            let mut member = belief.clone();
            for (c, s) in belief.iter_cells() {
                if s == CellState::Unknown {
                    member.set(
                        c,
                        if closed.get(c) {
                            CellState::Occupied
                        } else {
                            CellState::Free
                        },
                    );
                }
            }
            member
        })
        .collect();
    let disagreement = disagreement_of(&members);
    PredictedEnsemble {
        members,
        disagreement,
    }
}

#[derive(Debug, Error)]
pub enum ExternalPredictorError {
    #[error("failed to launch predictor {command}: {source}")]
    Spawn {
        command: String,
        source: std::io::Error,
    },
    #[error("predictor exited with status {status}; stderr: {stderr}")]
    Failed { status: i32, stderr: String },
    #[error("predictor timed out after {0:?}")]
    Timeout(Duration),
    #[error("predictor output {path} is missing or unreadable: {source}")]
    MissingOutput { path: PathBuf, source: GridError },
    #[error("predictor output {path} has lattice {got_w}x{got_h}, expected {want_w}x{want_h}")]
    WrongLattice {
        path: PathBuf,
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// External predictor contract: the exchange directory receives
/// `belief.pgm`, `evidence.pgm` (evidence cells = 0, rest = 255) and
/// `mask.pgm` (unknown cells = 255, rest = 0); the command is invoked with
/// the directory path as its sole argument and must write
/// `pred_000.pgm` .. `pred_{K-1}.pgm` in ground-truth format.
pub fn predict_external(
    input: &PredictorInput,
    command: &str,
    k: usize,
    timeout: Duration,
    exchange_dir: &Path,
) -> Result<PredictedEnsemble, ExternalPredictorError> {
    assert!(k >= 1);
    let belief = &input.belief;
    belief.save(exchange_dir.join("belief.pgm"))?;
    save_mask(
        &input.evidence,
        exchange_dir.join("evidence.pgm"),
        0,
        255,
    )?;
    save_mask(&input.unknown_mask(), exchange_dir.join("mask.pgm"), 255, 0)?;

    let mut child = Command::new(command)
        .arg(exchange_dir)
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|source| ExternalPredictorError::Spawn {
            command: command.to_string(),
            source,
        })?;
    let start = Instant::now();
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if start.elapsed() > timeout {
            let _ = child.kill();
            let _ = child.wait();
            return Err(ExternalPredictorError::Timeout(timeout));
        }
        std::thread::sleep(Duration::from_millis(10));
    };
    if !status.success() {
        let mut stderr = String::new();
        if let Some(mut s) = child.stderr.take() {
            use std::io::Read;
            let _ = s.read_to_string(&mut stderr);
        }
        return Err(ExternalPredictorError::Failed {
            status: status.code().unwrap_or(-1),
            stderr: stderr.trim().to_string(),
        });
    }

    let mut members = Vec::with_capacity(k);
    for i in 0..k {
        let path = exchange_dir.join(format!("pred_{i:03}.pgm"));
        let mut grid = OccupancyGrid::load(&path, GridKind::GroundTruth).map_err(|source| {
            ExternalPredictorError::MissingOutput {
                path: path.clone(),
                source,
            }
        })?;
        if !grid.same_lattice(belief) {
            return Err(ExternalPredictorError::WrongLattice {
                path,
                got_w: grid.width(),
                got_h: grid.height(),
                want_w: belief.width(),
                want_h: belief.height(),
            });
        }
        // The adapter owns observed-cell fidelity: overwrite any observed
        // cell the model changed.
        for (c, s) in belief.iter_cells() {
            if s != CellState::Unknown {
                grid.set(c, s);
            }
        }
        members.push(grid);
    }
    let disagreement = disagreement_of(&members);
    Ok(PredictedEnsemble {
        members,
        disagreement,
    })
}

fn save_mask(
    mask: &BinaryGrid,
    path: PathBuf,
    set_value: u8,
    clear_value: u8,
) -> Result<(), GridError> {
    use std::io::Write;
    let file = std::fs::File::create(&path).map_err(|source| GridError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut w = std::io::BufWriter::new(file);
    let io = |source| GridError::Io {
        path: path.display().to_string(),
        source,
    };
    write!(w, "P5\n{} {}\n255\n", mask.width(), mask.height()).map_err(io)?;
    let mut bytes = vec![clear_value; mask.width() * mask.height()];
    for c in mask.iter_set() {
        bytes[c.y as usize * mask.width() + c.x as usize] = set_value;
    }
    w.write_all(&bytes).map_err(io)?;
    w.flush().map_err(io)
}
