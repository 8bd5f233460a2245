//! Uniform LBP(8,1) codes and 59-bin cell histograms.

use std::sync::OnceLock;

use crate::image::Frame;

pub const LBP_BINS: usize = 59;
const NON_UNIFORM_BIN: u8 = 58;

// Neighbours at radius 1, counter-clockwise from east.
const OFFSETS: [(isize, isize); 8] = [
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

fn transitions(code: u8) -> u32 {
    (code ^ code.rotate_right(1)).count_ones()
}

/// Maps each 8-bit code to its bin: the 58 uniform codes (at most two
/// circular 0/1 transitions) get bins in ascending code order; every other
/// code shares bin 58.
pub fn uniform_table() -> &'static [u8; 256] {
    static TABLE: OnceLock<[u8; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = [NON_UNIFORM_BIN; 256];
        let mut next = 0u8;
        for code in 0..=255u8 {
            if transitions(code) <= 2 {
                table[code as usize] = next;
                next += 1;
            }
        }
        debug_assert_eq!(next, 58);
        table
    })
}

#[inline]
pub fn lbp_code(frame: &Frame, x: usize, y: usize) -> u8 {
    let c = frame.get(x, y);
    let mut code = 0u8;
    for (k, (dx, dy)) in OFFSETS.iter().enumerate() {
        if frame.get_mirrored(x as isize + dx, y as isize + dy) >= c {
            code |= 1 << k;
        }
    }
    code
}

/// Per-cell uniform-LBP histograms, each normalised as `sqrt(h / sum(h))`.
pub fn cell_histograms(frame: &Frame, cell: usize) -> (usize, usize, Vec<f64>) {
    let cols = frame.width() / cell;
    let rows = frame.height() / cell;
    let table = uniform_table();
    let mut hist = vec![0.0; cols * rows * LBP_BINS];
    let (w, h) = (frame.width() as isize, frame.height() as isize);
    let mirror = |i: isize, n: isize| -> usize {
        if n == 1 {
            0
        } else if i < 0 {
            (-i - 1) as usize
        } else if i >= n {
            (2 * n - i - 1) as usize
        } else {
            i as usize
        }
    };
    let xm: Vec<usize> = (0..w).map(|x| mirror(x - 1, w)).collect();
    let xp: Vec<usize> = (0..w).map(|x| mirror(x + 1, w)).collect();
    let pixels = frame.pixels();
    let row = |y: isize| &pixels[mirror(y, h) * w as usize..][..w as usize];
    for y in 0..rows * cell {
        let cy = y / cell;
        let (up, mid, down) = (row(y as isize - 1), row(y as isize), row(y as isize + 1));
        for x in 0..cols * cell {
            let c = mid[x];
            let (l, r) = (xm[x], xp[x]);
            // same neighbour order as OFFSETS
            let ring = [mid[r], up[r], up[x], up[l], mid[l], down[l], down[x], down[r]];
            let mut code = 0u8;
            for (k, &p) in ring.iter().enumerate() {
                code |= u8::from(p >= c) << k;
            }
            let bin = table[code as usize] as usize;
            hist[(cy * cols + x / cell) * LBP_BINS + bin] += 1.0;
        }
    }
    for chunk in hist.chunks_mut(LBP_BINS) {
        let sum: f64 = chunk.iter().sum();
        if sum > 0.0 {
            chunk.iter_mut().for_each(|v| *v = (*v / sum).sqrt());
        }
    }
    (cols, rows, hist)
}
