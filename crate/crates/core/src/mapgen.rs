//! Synthetic ground-truth floorplans: corridors, the L-shaped dead-end scene,
//! room layouts and mazes. All generators are deterministic per seed and
//! guarantee 4-connected free space.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::grid::{Cell, CellState, OccupancyGrid, NEIGHBORS4};

#[derive(Debug, Error)]
pub enum MapGenError {
    #[error("degenerate parameters: {0}")]
    Degenerate(String),
    #[error("generated map has disconnected free space (internal bug)")]
    Disconnected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    Corridor,
    LDeadend,
    Rooms,
    Maze,
}

impl std::str::FromStr for MapKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "corridor" => Ok(MapKind::Corridor),
            "L_deadend" | "l_deadend" => Ok(MapKind::LDeadend),
            "rooms" => Ok(MapKind::Rooms),
            "maze" => Ok(MapKind::Maze),
            other => Err(format!(
                "unknown map kind {other:?} (expected corridor|L_deadend|rooms|maze)"
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MapGenParams {
    pub width: usize,
    pub height: usize,
    /// Corridor width in cells (corridor, L_deadend).
    pub corridor_width: usize,
    /// Number of rooms (rooms kind).
    pub n_rooms: usize,
    pub seed: u64,
}

impl Default for MapGenParams {
    fn default() -> Self {
        MapGenParams {
            width: 60,
            height: 40,
            corridor_width: 4,
            n_rooms: 4,
            seed: 0,
        }
    }
}

/// Generate a ground-truth map. Free space is verified 4-connected.
pub fn generate(kind: MapKind, params: &MapGenParams) -> Result<OccupancyGrid, MapGenError> {
    if params.width < 12 || params.height < 12 {
        return Err(MapGenError::Degenerate(format!(
            "map {}x{} too small (min 12x12)",
            params.width, params.height
        )));
    }
    if params.corridor_width == 0 {
        return Err(MapGenError::Degenerate("zero-width corridor".into()));
    }
    if kind == MapKind::Rooms && params.n_rooms == 0 {
        return Err(MapGenError::Degenerate("zero rooms".into()));
    }
    let grid = match kind {
        MapKind::Corridor => gen_corridor(params),
        MapKind::LDeadend => gen_l_deadend(params),
        MapKind::Rooms => gen_rooms(params),
        MapKind::Maze => gen_maze(params),
    };
    check_connected(&grid)?;
    Ok(grid)
}

/// Suggested start cell for a generated map: the first Free cell scanning
/// row-major from the bottom-left quadrant, falling back to any Free cell.
pub fn suggested_start(grid: &OccupancyGrid) -> Cell {
    let half_y = (grid.height() / 2) as i32;
    for y in (half_y..grid.height() as i32).rev() {
        for x in 0..grid.width() as i32 {
            let c = Cell::new(x, y);
            if grid.get(c) == CellState::Free {
                return c;
            }
        }
    }
    grid.iter_cells()
        .find(|(_, s)| *s == CellState::Free)
        .map(|(c, _)| c)
        .expect("generated map has free space")
}

fn solid(params: &MapGenParams) -> OccupancyGrid {
    OccupancyGrid::new(
        params.width,
        params.height,
        OccupancyGrid::DEFAULT_RESOLUTION,
        CellState::Occupied,
    )
}

fn carve_rect(g: &mut OccupancyGrid, x0: usize, y0: usize, x1: usize, y1: usize) {
    for y in y0..=y1.min(g.height() - 1) {
        for x in x0..=x1.min(g.width() - 1) {
            g.set(Cell::new(x as i32, y as i32), CellState::Free);
        }
    }
}

fn gen_corridor(params: &MapGenParams) -> OccupancyGrid {
    let mut g = solid(params);
    let w = params.width;
    let h = params.height;
    let cw = params.corridor_width.min(h / 3);
    let cy = h / 2 - cw / 2;
    // Main corridor plus two side rooms with doorways.
    carve_rect(&mut g, 2, cy, w - 3, cy + cw - 1);
    let room_h = (h / 2 - cw).saturating_sub(4).max(3);
    carve_rect(&mut g, 5, cy.saturating_sub(room_h + 1), 5 + w / 4, cy.saturating_sub(2));
    carve_rect(&mut g, 7, cy.saturating_sub(1), 8, cy); // doorway up
    let x0 = w / 2 + 2;
    carve_rect(&mut g, x0, cy + cw + 1, x0 + w / 4, (cy + cw + room_h).min(h - 3));
    carve_rect(&mut g, x0 + 2, cy + cw - 1, x0 + 3, cy + cw); // doorway down
    g
}

/// The dead-end scene: a start room feeding a horizontal corridor that turns
/// up at the far side, with an added wall truncating the vertical segment.
/// From the corner, the vertical segment looks like an open continuation.
pub fn gen_l_deadend(params: &MapGenParams) -> OccupancyGrid {
    let mut g = solid(params);
    let w = params.width;
    let h = params.height;
    let cw = params.corridor_width.clamp(3, 6);
    // Horizontal corridor along the bottom.
    let hy0 = h - 3 - cw;
    carve_rect(&mut g, 3, hy0, w - 4, hy0 + cw - 1);
    // Vertical far segment, truncated by the dead-end wall.
    let vx0 = w - 4 - cw;
    let dead_y = h / 3;
    carve_rect(&mut g, vx0, dead_y, vx0 + cw - 1, hy0 + cw - 1);
    // Start room on the left, connected to the corridor.
    carve_rect(&mut g, 3, h / 4, 3 + w / 3, hy0 + cw - 1);
    g
}

fn gen_rooms(params: &MapGenParams) -> OccupancyGrid {
    let mut g = solid(params);
    let w = params.width;
    let h = params.height;
    if params.n_rooms == 1 {
        carve_rect(&mut g, 2, 2, w - 3, h - 3);
        return g;
    }
    // Rooms in a row along a shared corridor, doorways carved per room.
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let cw = params.corridor_width.clamp(2, 5);
    let cy0 = h - 3 - cw;
    carve_rect(&mut g, 2, cy0, w - 3, cy0 + cw - 1);
    let n = params.n_rooms.min((w - 4) / 6).max(1);
    let room_w = (w - 4) / n;
    for i in 0..n {
        let x0 = 2 + i * room_w + 1;
        let x1 = (x0 + room_w - 3).min(w - 3);
        let y1 = cy0 - 2;
        let y0 = 3 + rng.gen_range(0..3);
        if x1 <= x0 || y1 <= y0 {
            continue;
        }
        carve_rect(&mut g, x0, y0, x1, y1);
        let door = rng.gen_range(x0..=x1.min(x0 + room_w));
        carve_rect(&mut g, door, y1 + 1, door, cy0 - 1);
    }
    g
}

fn gen_maze(params: &MapGenParams) -> OccupancyGrid {
    let mut g = solid(params);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    // Recursive backtracker on a lattice of odd cells, passages 2 cells wide
    // so the robot and frontier clusters fit.
    let cell = 3usize; // lattice pitch
    let cols = (params.width - 3) / cell;
    let rows = (params.height - 3) / cell;
    let at = |cx: usize, cy: usize| (2 + cx * cell, 2 + cy * cell);
    let mut visited = vec![false; cols * rows];
    let mut stack = vec![(0usize, 0usize)];
    visited[0] = true;
    let (px, py) = at(0, 0);
    carve_rect(&mut g, px, py, px + 1, py + 1);
    while let Some(&(cx, cy)) = stack.last() {
        let mut options = Vec::new();
        for (dx, dy) in [(1i32, 0i32), (-1, 0), (0, 1), (0, -1)] {
            let nx = cx as i32 + dx;
            let ny = cy as i32 + dy;
            if nx >= 0
                && ny >= 0
                && (nx as usize) < cols
                && (ny as usize) < rows
                && !visited[ny as usize * cols + nx as usize]
            {
                options.push((nx as usize, ny as usize));
            }
        }
        if options.is_empty() {
            stack.pop();
            continue;
        }
        let &(nx, ny) = options.choose(&mut rng).unwrap();
        visited[ny * cols + nx] = true;
        let (ax, ay) = at(cx, cy);
        let (bx, by) = at(nx, ny);
        carve_rect(&mut g, ax.min(bx), ay.min(by), ax.max(bx) + 1, ay.max(by) + 1);
        stack.push((nx, ny));
    }
    g
}

fn check_connected(grid: &OccupancyGrid) -> Result<(), MapGenError> {
    let start = grid
        .iter_cells()
        .find(|(_, s)| *s == CellState::Free)
        .map(|(c, _)| c)
        .ok_or(MapGenError::Disconnected)?;
    let mut seen = vec![false; grid.len()];
    let idx = |c: Cell| c.y as usize * grid.width() + c.x as usize;
    let mut queue = std::collections::VecDeque::new();
    seen[idx(start)] = true;
    queue.push_back(start);
    let mut reached = 0usize;
    while let Some(cur) = queue.pop_front() {
        reached += 1;
        for &(dx, dy) in &NEIGHBORS4 {
            let n = Cell::new(cur.x + dx, cur.y + dy);
            if grid.in_bounds(n) && grid.get(n) == CellState::Free && !seen[idx(n)] {
                seen[idx(n)] = true;
                queue.push_back(n);
            }
        }
    }
    if reached == grid.count(CellState::Free) {
        Ok(())
    } else {
        Err(MapGenError::Disconnected)
    }
}
