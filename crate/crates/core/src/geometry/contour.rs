//! Outer-contour length by Moore-neighbor tracing.

use std::f64::consts::SQRT_2;

// Clockwise on screen (y grows downward), starting east.
const DIRS: [(isize, isize); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];
const WEST: usize = 4;

/// Length of the outer 8-connected boundary of a region: 1 per axial step and
/// √2 per diagonal step. A single pixel has perimeter 4 by convention.
///
/// Tracing starts at the first pixel in row-major order, entered from the
/// west, and stops when it is back at that pixel about to step to the same
/// neighbor as its first move. A start pixel that is a cut vertex is passed
/// more than once with different next targets.
pub fn region_perimeter(pixels: &[(usize, usize)]) -> f64 {
    if pixels.len() <= 1 {
        return 4.0;
    }
    let min_x = pixels.iter().map(|p| p.0).min().unwrap();
    let min_y = pixels.iter().map(|p| p.1).min().unwrap();
    let max_x = pixels.iter().map(|p| p.0).max().unwrap();
    let max_y = pixels.iter().map(|p| p.1).max().unwrap();
    // One pixel of padding on every side.
    let w = max_x - min_x + 3;
    let h = max_y - min_y + 3;
    let mut grid = vec![false; w * h];
    for &(x, y) in pixels {
        grid[(y - min_y + 1) * w + (x - min_x + 1)] = true;
    }
    let at = |x: isize, y: isize| grid[y as usize * w + x as usize];

    let start = (0..grid.len())
        .find(|&i| grid[i])
        .map(|i| ((i % w) as isize, (i / w) as isize))
        .unwrap();

    // Direction index from the current pixel to its backtrack neighbor.
    let mut current = start;
    let mut back = WEST;
    let mut first_target: Option<(isize, isize)> = None;
    let mut axial = 0usize;
    let mut diagonal = 0usize;
    loop {
        let mut next = None;
        for k in 1..=8 {
            let d = (back + k) % 8;
            let (nx, ny) = (current.0 + DIRS[d].0, current.1 + DIRS[d].1);
            if at(nx, ny) {
                next = Some((d, (nx, ny), (back + k - 1) % 8));
                break;
            }
        }
        let Some((d, target, prev_dir)) = next else {
            // Isolated pixel: no 8-neighbor in the region.
            return 4.0;
        };
        if current == start {
            match first_target {
                None => first_target = Some(target),
                Some(t) if t == target => break,
                Some(_) => {}
            }
        }
        if d % 2 == 0 {
            axial += 1;
        } else {
            diagonal += 1;
        }
        // The new backtrack is the last background cell swept, seen from `target`.
        let bx = current.0 + DIRS[prev_dir].0 - target.0;
        let by = current.1 + DIRS[prev_dir].1 - target.1;
        back = DIRS.iter().position(|&dd| dd == (bx, by)).unwrap();
        current = target;
    }
    axial as f64 + diagonal as f64 * SQRT_2
}
