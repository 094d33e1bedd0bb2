//! PNG snapshot rendering with a fixed palette:
//! occupied = black, free = white, unknown = gray, carved-free = light blue,
//! NLOS evidence = orange, robot = red, path = green.

use std::collections::BTreeSet;
use std::path::Path;

use image::{Rgb, RgbImage};

use crate::grid::{BinaryGrid, Cell, CellState, GridError, OccupancyGrid, Pose};

pub const COLOR_OCCUPIED: Rgb<u8> = Rgb([0, 0, 0]);
pub const COLOR_FREE: Rgb<u8> = Rgb([255, 255, 255]);
pub const COLOR_UNKNOWN: Rgb<u8> = Rgb([127, 127, 127]);
pub const COLOR_CARVED: Rgb<u8> = Rgb([173, 216, 230]);
pub const COLOR_EVIDENCE: Rgb<u8> = Rgb([255, 165, 0]);
pub const COLOR_ROBOT: Rgb<u8> = Rgb([255, 0, 0]);
pub const COLOR_PATH: Rgb<u8> = Rgb([0, 200, 0]);

/// Optional overlays drawn on top of the base grid, in increasing priority:
/// carved cells, evidence, path, robot.
#[derive(Debug, Default, Clone)]
pub struct Overlays<'a> {
    pub carved: Option<&'a BTreeSet<Cell>>,
    pub evidence: Option<&'a BinaryGrid>,
    pub path: Option<&'a [Cell]>,
    pub robot: Option<Pose>,
}

pub fn render(grid: &OccupancyGrid, overlays: &Overlays) -> RgbImage {
    let mut img = RgbImage::new(grid.width() as u32, grid.height() as u32);
    for (c, s) in grid.iter_cells() {
        let color = match s {
            CellState::Occupied => COLOR_OCCUPIED,
            CellState::Free => COLOR_FREE,
            CellState::Unknown => COLOR_UNKNOWN,
        };
        img.put_pixel(c.x as u32, c.y as u32, color);
    }
    if let Some(carved) = overlays.carved {
        for &c in carved {
            if grid.in_bounds(c) {
                img.put_pixel(c.x as u32, c.y as u32, COLOR_CARVED);
            }
        }
    }
    if let Some(ev) = overlays.evidence {
        for c in ev.iter_set() {
            if grid.in_bounds(c) {
                img.put_pixel(c.x as u32, c.y as u32, COLOR_EVIDENCE);
            }
        }
    }
    if let Some(path) = overlays.path {
        for &c in path {
            if grid.in_bounds(c) {
                img.put_pixel(c.x as u32, c.y as u32, COLOR_PATH);
            }
        }
    }
    if let Some(robot) = overlays.robot {
        let c = robot.cell();
        if grid.in_bounds(c) {
            img.put_pixel(c.x as u32, c.y as u32, COLOR_ROBOT);
        }
    }
    img
}

pub fn render_to_png(
    grid: &OccupancyGrid,
    overlays: &Overlays,
    path: impl AsRef<Path>,
) -> Result<(), GridError> {
    let path = path.as_ref();
    render(grid, overlays).save(path).map_err(|e| GridError::Io {
        path: path.display().to_string(),
        source: std::io::Error::new(std::io::ErrorKind::Other, e),
    })
}

/// Normalize a float map to grayscale for quick inspection.
pub fn render_float_to_png(
    values: &crate::grid::FloatGrid,
    path: impl AsRef<Path>,
) -> Result<(), GridError> {
    let max = values.values().iter().cloned().fold(0.0f64, f64::max);
    let mut img = image::GrayImage::new(values.width() as u32, values.height() as u32);
    for y in 0..values.height() {
        for x in 0..values.width() {
            let v = values.get(Cell::new(x as i32, y as i32));
            let p = if max > 0.0 {
                (v / max * 255.0).round() as u8
            } else {
                0
            };
            img.put_pixel(x as u32, y as u32, image::Luma([p]));
        }
    }
    let path = path.as_ref();
    img.save(path).map_err(|e| GridError::Io {
        path: path.display().to_string(),
        source: std::io::Error::new(std::io::ErrorKind::Other, e),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn palette_and_overlays() {
        let mut g = OccupancyGrid::new(4, 4, 0.1, CellState::Free);
        g.set(Cell::new(0, 0), CellState::Occupied);
        g.set(Cell::new(1, 0), CellState::Unknown);
        let carved: BTreeSet<Cell> = [Cell::new(2, 0)].into_iter().collect();
        let mut ev = BinaryGrid::new(4, 4);
        ev.set(Cell::new(3, 0), true);
        let path = [Cell::new(0, 1)];
        let overlays = Overlays {
            carved: Some(&carved),
            evidence: Some(&ev),
            path: Some(&path),
            robot: Some(Pose::new(1.5, 1.5)),
        };
        let img = render(&g, &overlays);
        assert_eq!(img.get_pixel(0, 0), &COLOR_OCCUPIED);
        assert_eq!(img.get_pixel(1, 0), &COLOR_UNKNOWN);
        assert_eq!(img.get_pixel(2, 0), &COLOR_CARVED);
        assert_eq!(img.get_pixel(3, 0), &COLOR_EVIDENCE);
        assert_eq!(img.get_pixel(0, 1), &COLOR_PATH);
        assert_eq!(img.get_pixel(1, 1), &COLOR_ROBOT);
        assert_eq!(img.get_pixel(2, 2), &COLOR_FREE);
    }
}
