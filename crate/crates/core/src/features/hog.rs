//! Gradient-orientation cell histograms with 2x2-cell block normalisation.

use std::sync::OnceLock;

use crate::image::Frame;

pub const ORIENTATIONS: usize = 9;
pub const BLOCK_BINS: usize = 4 * ORIENTATIONS;
const NORM_EPS: f64 = 1e-3;

/// Raw per-cell orientation histograms, `cells_y * cells_x * ORIENTATIONS`.
///
/// Unsigned orientation in [0, 180) with bin `b` centred on `20 b` degrees,
/// so a purely horizontal gradient lands in bin 0. Votes are the gradient
/// magnitude, interpolated between the two nearest orientation bins and
/// bilinearly between the four nearest cell centres (clamped at the grid edge).
pub fn cell_histograms(frame: &Frame, cell: usize) -> (usize, usize, Vec<f64>) {
    let (w, h) = (frame.width(), frame.height());
    let cols = w / cell;
    let rows = h / cell;
    let mut hist = vec![0.0; cols * rows * ORIENTATIONS];
    let inv_cell = 1.0 / cell as f64;

    let xs: Vec<(usize, usize, f64)> = (0..cols * cell)
        .map(|x| {
            let fx = (x as f64 + 0.5) * inv_cell - 0.5;
            let cx0 = fx.floor() as isize;
            let ax = fx - cx0 as f64;
            let c0 = cx0.clamp(0, cols as isize - 1) as usize;
            let c1 = (cx0 + 1).clamp(0, cols as isize - 1) as usize;
            (c0, c1, ax)
        })
        .collect();
    let (w, h) = (w as isize, h as isize);
    let xm: Vec<usize> = (0..w).map(|x| mirror_index(x - 1, w)).collect();
    let xp: Vec<usize> = (0..w).map(|x| mirror_index(x + 1, w)).collect();
    let pixels = frame.pixels();
    let table = gradient_table();
    let row = |y: isize| &pixels[mirror_index(y, h) * w as usize..][..w as usize];

    for y in 0..rows * cell {
        let fy = (y as f64 + 0.5) * inv_cell - 0.5;
        let cy0 = fy.floor() as isize;
        let ay = fy - cy0 as f64;
        let r0 = cy0.clamp(0, rows as isize - 1) as usize;
        let r1 = (cy0 + 1).clamp(0, rows as isize - 1) as usize;
        let yi = y as isize;
        let (up, mid, down) = (row(yi - 1), row(yi), row(yi + 1));
        for (x, &(c0, c1, ax)) in xs.iter().enumerate() {
            let gx = mid[xp[x]] as i32 - mid[xm[x]] as i32;
            let gy = down[x] as i32 - up[x] as i32;
            let (mag, pos) = table[((gy + 255) * 511 + gx + 255) as usize];
            if mag == 0.0 {
                continue;
            }
            let b0f = pos.floor();
            let ab = pos - b0f;
            let b0 = (b0f as usize) % ORIENTATIONS;
            let b1 = (b0 + 1) % ORIENTATIONS;
            for (cy, wy) in [(r0, 1.0 - ay), (r1, ay)] {
                if wy == 0.0 {
                    continue;
                }
                for (cx, wx) in [(c0, 1.0 - ax), (c1, ax)] {
                    if wx == 0.0 {
                        continue;
                    }
                    let base = (cy * cols + cx) * ORIENTATIONS;
                    let v = mag * wx * wy;
                    hist[base + b0] += v * (1.0 - ab);
                    hist[base + b1] += v * ab;
                }
            }
        }
    }
    (cols, rows, hist)
}

/// Magnitude and fractional orientation bin of every integer gradient
/// `(gx, gy)` in `[-255, 255]^2`, indexed by `(gy + 255) * 511 + gx + 255`.
fn gradient_table() -> &'static [(f64, f64)] {
    static TABLE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let bin_width = std::f64::consts::PI / ORIENTATIONS as f64;
        let mut t = Vec::with_capacity(511 * 511);
        for gy in -255i32..=255 {
            for gx in -255i32..=255 {
                let (fx, fy) = (gx as f64, gy as f64);
                let mag = (fx * fx + fy * fy).sqrt();
                let mut theta = fy.atan2(fx);
                if theta < 0.0 {
                    theta += std::f64::consts::PI;
                }
                t.push((mag, theta / bin_width));
            }
        }
        t
    })
}

fn mirror_index(i: isize, n: isize) -> usize {
    if n == 1 {
        0
    } else if i < 0 {
        (-i - 1) as usize
    } else if i >= n {
        (2 * n - i - 1) as usize
    } else {
        i as usize
    }
}

/// L2-normalised 2x2 blocks anchored at every cell, stored on the cell grid
/// (`cols * rows * BLOCK_BINS`). The last row and column have no full block
/// and stay zero.
pub fn block_normalise(cols: usize, rows: usize, cells: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; cols * rows * BLOCK_BINS];
    if cols < 2 || rows < 2 {
        return out;
    }
    for by in 0..rows - 1 {
        for bx in 0..cols - 1 {
            let dst = &mut out[(by * cols + bx) * BLOCK_BINS..][..BLOCK_BINS];
            for (k, (cx, cy)) in [(bx, by), (bx + 1, by), (bx, by + 1), (bx + 1, by + 1)]
                .into_iter()
                .enumerate()
            {
                let src = &cells[(cy * cols + cx) * ORIENTATIONS..][..ORIENTATIONS];
                dst[k * ORIENTATIONS..(k + 1) * ORIENTATIONS].copy_from_slice(src);
            }
            let norm = (dst.iter().map(|v| v * v).sum::<f64>() + NORM_EPS * NORM_EPS).sqrt();
            dst.iter_mut().for_each(|v| *v /= norm);
        }
    }
    out
}
