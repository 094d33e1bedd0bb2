//! From histograms to spatial evidence: peak decomposition, space carving of
//! guaranteed-empty hidden regions, back-projection of occluded structure and
//! classical filtering of the accumulated maps.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::grid::{BinaryGrid, Cell, CellState, FloatGrid, OccupancyGrid};
use crate::ray::walk_grid;
use crate::spad::{Scan, TransientHistogram};

/// LOS / NLOS cluster boundaries of one histogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeakDecomposition {
    /// First nonzero bin (the LOS return), if any.
    pub los_bin: Option<usize>,
    /// Last bin of the first contiguous nonzero cluster.
    pub los_end: Option<usize>,
    /// First nonzero bin after at least `gap` empty bins past `los_end`.
    pub nlos_onset: Option<usize>,
}

/// Decompose a histogram into its LOS cluster and an optional NLOS onset.
///
/// A candidate second cluster separated by fewer than `gap` empty bins is
/// treated as merged with the LOS return and yields no NLOS evidence.
pub fn detect_peaks(h: &TransientHistogram, gap: usize) -> PeakDecomposition {
    assert!(gap >= 1);
    let bins = &h.bins;
    let Some(los_bin) = bins.iter().position(|&v| v > 0.0) else {
        return PeakDecomposition {
            los_bin: None,
            los_end: None,
            nlos_onset: None,
        };
    };
    let mut los_end = los_bin;
    while los_end + 1 < bins.len() && bins[los_end + 1] > 0.0 {
        los_end += 1;
    }
    let next = bins[los_end + 1..]
        .iter()
        .position(|&v| v > 0.0)
        .map(|off| los_end + 1 + off);
    let nlos_onset = match next {
        Some(j) if j - los_end - 1 >= gap => Some(j),
        _ => None,
    };
    PeakDecomposition {
        los_bin: Some(los_bin),
        los_end: Some(los_end),
        nlos_onset,
    }
}

/// Carving radius in meters for a histogram: the free semicircle around the
/// primary hit implied by the NLOS onset, or the full window capped at
/// `max_range` when no second peak exists.
fn carve_radius(d1: f64, onset: Option<usize>, bin_length: f64, n_bins: usize, max_range: f64) -> f64 {
    let r = match onset {
        Some(b) => ((b as f64) * bin_length - 2.0 * d1) / 2.0,
        None => (((n_bins as f64) * bin_length - 2.0 * d1) / 2.0).min(max_range),
    };
    r.max(0.0)
}

/// Space-carve `belief` from one scan: Unknown cells provably empty (no
/// object within the onset radius of a primary hit, on the normal side,
/// visible from the hit through believed-free space) become Free.
///
/// Returns the set of newly carved cells; `belief` is updated in place.
pub fn carve(belief: &mut OccupancyGrid, scan: &Scan, gap: usize) -> BTreeSet<Cell> {
    let res = belief.resolution();
    let bin_length = scan.sensor.bin_length();
    // The half-plane sweep is evaluated per histogram in parallel; the carve
    // sets are merged by union, which is order-independent.
    let per_ray: Vec<Vec<Cell>> = scan
        .histograms
        .par_iter()
        .map(|h| {
            let Some(p) = h.primary else {
                return Vec::new();
            };
            let Some(n) = p.normal else {
                return Vec::new();
            };
            // The direct return is a single delta bin, so every nonzero bin
            // after it is a bounce off some surface — even ones merged into
            // a contiguous run with the direct return, which the peak
            // decomposition still counts as part of the LOS cluster. Carving
            // past any such return would declare space empty that was never
            // probed, so the radius is capped at the earliest one.
            let pk = detect_peaks(h, gap);
            // In the noise-free model the direct return contributes a known
            // count to its bin. A grazing bounce off a surface right at the
            // hit point lands in that same bin, where it is invisible to the
            // onset search; its only signature is excess mass in the direct
            // bin. Skip carving for such rays rather than carve past an
            // unlocalized obstacle.
            let expected_direct = crate::spad::photons_first_bounce(
                scan.sensor.pulse_energy,
                scan.sensor.reflectance,
                scan.sensor.efficiency,
                scan.sensor.wavelength,
            );
            if let Some(b) = pk.los_bin {
                if h.bins[b] > expected_direct * (1.0 + 1e-9) {
                    return Vec::new();
                }
            }
            let onset = pk.los_bin.and_then(|b| {
                h.bins[b + 1..]
                    .iter()
                    .position(|&v| v > 0.0)
                    .map(|off| b + 1 + off)
            });
            let r = carve_radius(
                p.hit.distance,
                onset,
                bin_length,
                scan.sensor.n_bins,
                scan.sensor.max_range,
            );
            let r_cells = r / res;
            if r_cells < 0.5 {
                return Vec::new();
            }
            let mut cells = Vec::new();
            // Angular sweep over the open half-plane about the normal. Ray
            // spacing keeps adjacent rays under half a cell apart at radius r.
            let normal_angle = n.1.atan2(n.0);
            let step = (0.5 / r_cells).min(0.05);
            let origin = (
                p.hit.point.0 + n.0 * 1e-4,
                p.hit.point.1 + n.1 * 1e-4,
            );
            let mut phi = -std::f64::consts::FRAC_PI_2 + step;
            while phi < std::f64::consts::FRAC_PI_2 {
                walk_grid(origin, normal_angle + phi, r_cells, |cell, _t, _axis, _step| {
                    if !belief.in_bounds(cell) {
                        return false;
                    }
                    match belief.get(cell) {
                        // Believed walls block the carving sweep.
                        CellState::Occupied => false,
                        CellState::Unknown => {
                            // The sweep only establishes reachability; the
                            // carve predicate itself is evaluated on the cell
                            // center: inside the radius and strictly on the
                            // normal side. Boundary-clipped cells stay Unknown.
                            let (cx, cy) = cell.center();
                            let (dx, dy) = (cx - p.hit.point.0, cy - p.hit.point.1);
                            if dx * dx + dy * dy <= r_cells * r_cells
                                && dx * n.0 + dy * n.1 > 0.0
                            {
                                cells.push(cell);
                            }
                            true
                        }
                        CellState::Free => true,
                    }
                });
                phi += step;
            }
            cells
        })
        .collect();
    let mut carved = BTreeSet::new();
    for cells in per_ray {
        for c in cells {
            if belief.get(c) == CellState::Unknown {
                belief.set(c, CellState::Free);
                carved.insert(c);
            } else {
                carved.insert(c);
            }
        }
    }
    carved
}

/// Accumulate semicircular evidence arcs for every NLOS bin of every
/// histogram.
pub fn backproject(scan: &Scan, width: usize, height: usize, resolution: f64, gap: usize) -> FloatGrid {
    let bin_length = scan.sensor.bin_length();
    let partial: Vec<Vec<(Cell, f64)>> = scan
        .histograms
        .par_iter()
        .map(|h| {
            let Some(p) = h.primary else {
                return Vec::new();
            };
            let Some(n) = p.normal else {
                return Vec::new();
            };
            let Some(onset) = detect_peaks(h, gap).nlos_onset else {
                return Vec::new();
            };
            let d1 = p.hit.distance;
            let normal_angle = n.1.atan2(n.0);
            let mut deposits = Vec::new();
            for (b, &count) in h.bins.iter().enumerate().skip(onset) {
                if count <= 0.0 {
                    continue;
                }
                let r = ((b as f64) * bin_length - 2.0 * d1) / 2.0;
                if r <= 0.0 {
                    continue;
                }
                // A return in bin b pins the bounce distance to the radial
                // interval [r, r + bin_length/2): stamp both edge arcs of
                // that annulus so the cell actually containing the scatterer
                // is always covered, not just the quantized inner radius.
                let r_outer = r + bin_length / 2.0;
                // Angular step <= resolution / (2 r) radians so adjacent arc
                // samples are under half a cell apart.
                let step = (resolution / (2.0 * r_outer)).min(0.2);
                let mut arc_cells: BTreeSet<Cell> = BTreeSet::new();
                let mut phi = -std::f64::consts::FRAC_PI_2;
                while phi <= std::f64::consts::FRAC_PI_2 {
                    let a = normal_angle + phi;
                    for radius in [r / resolution, r_outer / resolution] {
                        let x = p.hit.point.0 + a.cos() * radius;
                        let y = p.hit.point.1 + a.sin() * radius;
                        let cell = Cell::new(x.floor() as i32, y.floor() as i32);
                        if cell.x >= 0
                            && cell.y >= 0
                            && (cell.x as usize) < width
                            && (cell.y as usize) < height
                        {
                            arc_cells.insert(cell);
                        }
                    }
                    phi += step;
                }
                for c in arc_cells {
                    deposits.push((c, count));
                }
            }
            deposits
        })
        .collect();
    let mut map = FloatGrid::new(width, height, resolution);
    // Accumulate in histogram order for a deterministic float sum.
    for deposits in partial {
        for (c, v) in deposits {
            map.add(c, v);
        }
    }
    map
}

/// Sign-flipped 3x3 Laplacian response: positive at local peaks.
fn laplacian_response(bp: &FloatGrid, cell: Cell) -> f64 {
    4.0 * bp.get(cell)
        - bp.get(Cell::new(cell.x + 1, cell.y))
        - bp.get(Cell::new(cell.x - 1, cell.y))
        - bp.get(Cell::new(cell.x, cell.y + 1))
        - bp.get(Cell::new(cell.x, cell.y - 1))
}

/// Keep cells whose sign-flipped Laplacian response reaches the given
/// percentile of all positive responses.
pub fn laplacian_filter(bp: &FloatGrid, percentile: f64) -> BinaryGrid {
    let mut out = BinaryGrid::new(bp.width(), bp.height());
    let mut responses: Vec<f64> = Vec::new();
    let mut per_cell: Vec<(Cell, f64)> = Vec::new();
    for y in 0..bp.height() as i32 {
        for x in 0..bp.width() as i32 {
            let c = Cell::new(x, y);
            let r = laplacian_response(bp, c);
            if r > 0.0 {
                responses.push(r);
                per_cell.push((c, r));
            }
        }
    }
    if responses.is_empty() {
        return out;
    }
    let threshold = percentile_of(&mut responses, percentile);
    for (c, r) in per_cell {
        if r >= threshold {
            out.set(c, true);
        }
    }
    out
}

/// Threshold the raw map at the given percentile of its positive values
/// (the unfiltered baseline the Laplacian filter is compared against).
pub fn raw_threshold(bp: &FloatGrid, percentile: f64) -> BinaryGrid {
    let mut out = BinaryGrid::new(bp.width(), bp.height());
    let mut values: Vec<f64> = bp.values().iter().copied().filter(|&v| v > 0.0).collect();
    if values.is_empty() {
        return out;
    }
    let threshold = percentile_of(&mut values, percentile);
    for y in 0..bp.height() as i32 {
        for x in 0..bp.width() as i32 {
            let c = Cell::new(x, y);
            if bp.get(c) >= threshold && bp.get(c) > 0.0 {
                out.set(c, true);
            }
        }
    }
    out
}

/// Nearest-rank percentile of a nonempty sample.
fn percentile_of(values: &mut [f64], percentile: f64) -> f64 {
    let p = percentile.clamp(0.0, 100.0);
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if p == 0.0 {
        return values[0];
    }
    let rank = ((p / 100.0) * values.len() as f64).ceil() as usize;
    values[rank.saturating_sub(1).min(values.len() - 1)]
}

/// IoU of two binary grids; two empty sets compare as identical (1.0).
pub fn evaluate_filter(evidence: &BinaryGrid, truth: &BinaryGrid) -> f64 {
    assert_eq!(evidence.width(), truth.width());
    assert_eq!(evidence.height(), truth.height());
    let mut inter = 0usize;
    let mut union = 0usize;
    for y in 0..truth.height() as i32 {
        for x in 0..truth.width() as i32 {
            let c = Cell::new(x, y);
            let a = evidence.get(c);
            let b = truth.get(c);
            if a && b {
                inter += 1;
            }
            if a || b {
                union += 1;
            }
        }
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// The two NLOS products fed into map prediction.
#[derive(Debug, Clone)]
pub struct NlosEvidence {
    pub carved_free: BTreeSet<Cell>,
    pub occupied_evidence: BinaryGrid,
}

impl NlosEvidence {
    /// Build evidence from filter output, masking out cells carved free by
    /// the same scan so the two sets stay disjoint.
    pub fn new(carved_free: BTreeSet<Cell>, mut occupied_evidence: BinaryGrid) -> Self {
        for &c in &carved_free {
            if occupied_evidence.in_bounds(c) {
                occupied_evidence.set(c, false);
            }
        }
        NlosEvidence {
            carved_free,
            occupied_evidence,
        }
    }
}
