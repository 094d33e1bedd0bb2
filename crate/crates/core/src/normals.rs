//! Wall surface normals estimated by Sobel gradients of the occupancy
//! indicator (Occupied = 1, Free = 0).
//!
//! The stored normal is the normalized negative gradient, i.e. it points out
//! of the wall into free space. Interior wall cells and isolated pixels with
//! zero gradient carry no normal.

use crate::grid::{Cell, CellState, OccupancyGrid};

/// Per-cell unit normals; `None` where undefined.
#[derive(Debug, Clone)]
pub struct NormalField {
    width: usize,
    height: usize,
    normals: Vec<Option<(f64, f64)>>,
}

impl NormalField {
    pub fn get(&self, cell: Cell) -> Option<(f64, f64)> {
        if cell.x < 0
            || cell.y < 0
            || cell.x as usize >= self.width
            || cell.y as usize >= self.height
        {
            return None;
        }
        self.normals[cell.y as usize * self.width + cell.x as usize]
    }

    /// Orient the normal at `cell` so it makes an acute angle with the
    /// reversed incoming ray direction. Returns `None` when the cell carries
    /// no normal or the ray is tangent to the surface.
    pub fn oriented(&self, cell: Cell, incoming_dir: (f64, f64)) -> Option<(f64, f64)> {
        let n = self.get(cell)?;
        let dot = -(incoming_dir.0 * n.0 + incoming_dir.1 * n.1);
        if dot > 1e-12 {
            Some(n)
        } else if dot < -1e-12 {
            Some((-n.0, -n.1))
        } else {
            None
        }
    }
}

const SOBEL_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];

/// Estimate normals for every Occupied cell of `grid`.
///
/// Intended for ground-truth grids; Unknown cells count as occupied mass so
/// partial beliefs degrade conservatively.
pub fn estimate_normals(grid: &OccupancyGrid) -> NormalField {
    let w = grid.width();
    let h = grid.height();
    let occ = |x: i32, y: i32| -> f64 {
        // clamp to edge
        let x = x.clamp(0, w as i32 - 1);
        let y = y.clamp(0, h as i32 - 1);
        match grid.get(Cell::new(x, y)) {
            CellState::Free => 0.0,
            _ => 1.0,
        }
    };
    let mut normals = vec![None; w * h];
    for y in 0..h as i32 {
        for x in 0..w as i32 {
            if grid.get(Cell::new(x, y)) != CellState::Occupied {
                continue;
            }
            let mut gx = 0.0;
            let mut gy = 0.0;
            for ky in 0..3 {
                for kx in 0..3 {
                    let v = occ(x + kx as i32 - 1, y + ky as i32 - 1);
                    gx += SOBEL_X[ky][kx] * v;
                    gy += SOBEL_X[kx][ky] * v; // transposed kernel
                }
            }
            let mag = (gx * gx + gy * gy).sqrt();
            if mag > 1e-9 {
                // Gradient points from free toward occupied; flip it.
                normals[y as usize * w + x as usize] = Some((-gx / mag, -gy / mag));
            }
        }
    }
    NormalField {
        width: w,
        height: h,
        normals,
    }
}
