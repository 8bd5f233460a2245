//! Block-matching optical flow (sum of absolute differences).

use crate::error::{Error, Result};
use crate::image::{BBox, Frame};

/// Per-block displacement field between two frames.
///
/// A block at `(bx, by)` with displacement `(u, v)` means the content found in
/// the current frame at the block was at `block - (u, v)` in the previous frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub cols: usize,
    pub rows: usize,
    pub block_size: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl FlowField {
    pub fn zeros(cols: usize, rows: usize, block_size: usize) -> Self {
        FlowField {
            cols,
            rows,
            block_size,
            u: vec![0.0; cols * rows],
            v: vec![0.0; cols * rows],
        }
    }

    pub fn uniform(cols: usize, rows: usize, block_size: usize, u: f64, v: f64) -> Self {
        FlowField {
            cols,
            rows,
            block_size,
            u: vec![u; cols * rows],
            v: vec![v; cols * rows],
        }
    }

    #[inline]
    pub fn at(&self, bx: usize, by: usize) -> (f64, f64) {
        let i = by * self.cols + bx;
        (self.u[i], self.v[i])
    }

    pub fn set(&mut self, bx: usize, by: usize, u: f64, v: f64) {
        let i = by * self.cols + bx;
        self.u[i] = u;
        self.v[i] = v;
    }
}

pub fn compute_flow(
    prev: &Frame,
    curr: &Frame,
    block_size: usize,
    search_radius: usize,
) -> Result<FlowField> {
    if prev.width() != curr.width() || prev.height() != curr.height() {
        return Err(Error::DimensionMismatch(
            prev.width(),
            prev.height(),
            curr.width(),
            curr.height(),
        ));
    }
    if block_size < 4 || search_radius < 1 {
        return Err(Error::InvalidArgument(format!(
            "block_size {block_size} must be >= 4 and search_radius {search_radius} >= 1"
        )));
    }
    let (w, h) = (curr.width(), curr.height());
    let cols = w / block_size;
    let rows = h / block_size;
    let r = search_radius as isize;
    let bs = block_size as isize;

    // Candidates in tie-break order: magnitude, then du, then dv.
    let mut candidates: Vec<(isize, isize)> = Vec::with_capacity(((2 * r + 1) * (2 * r + 1)) as usize);
    for du in -r..=r {
        for dv in -r..=r {
            candidates.push((du, dv));
        }
    }
    candidates.sort_by_key(|&(du, dv)| (du * du + dv * dv, du, dv));

    let prev_px = prev.pixels();
    let curr_px = curr.pixels();
    let mut field = FlowField::zeros(cols, rows, block_size);
    for by in 0..rows {
        for bx in 0..cols {
            let x0 = (bx * block_size) as isize;
            let y0 = (by * block_size) as isize;
            let mut best = (u32::MAX, 0isize, 0isize);
            for &(du, dv) in &candidates {
                let px = x0 - du;
                let py = y0 - dv;
                if px < 0 || py < 0 || px + bs > w as isize || py + bs > h as isize {
                    continue;
                }
                let mut sad = 0u32;
                for j in 0..block_size {
                    let c = &curr_px[(y0 as usize + j) * w + x0 as usize..][..block_size];
                    let p = &prev_px[(py as usize + j) * w + px as usize..][..block_size];
                    sad += c
                        .iter()
                        .zip(p)
                        .map(|(&a, &b)| (a as i32 - b as i32).unsigned_abs())
                        .sum::<u32>();
                    if sad >= best.0 {
                        break;
                    }
                }
                if sad < best.0 {
                    best = (sad, du, dv);
                }
            }
            field.set(bx, by, best.1 as f64, best.2 as f64);
        }
    }
    Ok(field)
}

/// Mean displacement over blocks whose centres fall inside `window`;
/// `(0, 0)` when no block centre does.
pub fn mean_flow_in_window(flow: &FlowField, window: &BBox) -> (f64, f64) {
    let bs = flow.block_size as f64;
    let (mut su, mut sv, mut n) = (0.0, 0.0, 0usize);
    let to_range = |lo: i32, len: i32, count: usize| {
        // centre of block b is b*bs + bs/2; keep lo <= centre < lo + len
        let first = ((lo as f64 - bs / 2.0) / bs).ceil().max(0.0) as usize;
        let end = (((lo + len) as f64 - bs / 2.0) / bs).ceil().max(0.0) as usize;
        first..end.min(count)
    };
    for by in to_range(window.y, window.h, flow.rows) {
        for bx in to_range(window.x, window.w, flow.cols) {
            let (u, v) = flow.at(bx, by);
            su += u;
            sv += v;
            n += 1;
        }
    }
    if n == 0 {
        (0.0, 0.0)
    } else {
        (su / n as f64, sv / n as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise_frame(seed: u64, w: usize, h: usize) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Frame::from_fn(0, w, h, |_, _| rng.gen()).unwrap()
    }

    fn shifted(f: &Frame, dx: isize, dy: isize) -> Frame {
        Frame::from_fn(1, f.width(), f.height(), |x, y| {
            f.get_mirrored(x as isize - dx, y as isize - dy)
        })
        .unwrap()
    }

    #[test]
    fn identical_frames_give_zero_flow() {
        let f = noise_frame(1, 64, 48);
        let flow = compute_flow(&f, &f, 8, 3).unwrap();
        assert!(flow.u.iter().chain(&flow.v).all(|&x| x == 0.0));
    }

    #[test]
    fn right_shift_recovered_in_interior() {
        let f = noise_frame(2, 80, 64);
        let g = shifted(&f, 3, 0);
        let flow = compute_flow(&f, &g, 8, 4).unwrap();
        for by in 1..flow.rows - 1 {
            for bx in 1..flow.cols - 1 {
                assert_eq!(flow.at(bx, by), (3.0, 0.0), "block {bx},{by}");
            }
        }
    }

    #[test]
    fn uncorrelated_frames_stay_within_radius() {
        let a = noise_frame(3, 48, 48);
        let b = noise_frame(4, 48, 48);
        let flow = compute_flow(&a, &b, 8, 2).unwrap();
        assert!(flow.u.iter().chain(&flow.v).all(|x| x.abs() <= 2.0));
    }

    #[test]
    fn dimension_mismatch() {
        let a = noise_frame(1, 16, 16);
        let b = noise_frame(1, 16, 24);
        assert!(matches!(compute_flow(&a, &b, 8, 1), Err(Error::DimensionMismatch(..))));
    }

    #[test]
    fn constant_frames_tie_break_to_zero() {
        let a = Frame::filled(0, 32, 32, 9).unwrap();
        let flow = compute_flow(&a, &a, 4, 3).unwrap();
        assert!(flow.u.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn mean_flow_cases() {
        let uniform = FlowField::uniform(8, 8, 8, 3.0, 0.0);
        assert_eq!(mean_flow_in_window(&uniform, &BBox::new(8, 8, 32, 32)), (3.0, 0.0));

        let mut half = FlowField::zeros(4, 2, 8);
        for by in 0..2 {
            for bx in 0..4 {
                half.set(bx, by, if bx < 2 { 2.0 } else { 4.0 }, 0.0);
            }
        }
        assert_eq!(mean_flow_in_window(&half, &BBox::new(0, 0, 32, 16)), (3.0, 0.0));
        assert_eq!(mean_flow_in_window(&half, &BBox::new(100, 100, 10, 10)), (0.0, 0.0));
        assert_eq!(mean_flow_in_window(&half, &BBox::new(-50, -50, 10, 10)), (0.0, 0.0));
    }

    #[test]
    fn mean_flow_uses_block_centres() {
        let mut f = FlowField::zeros(2, 1, 8);
        f.set(0, 0, 10.0, 0.0);
        f.set(1, 0, 20.0, 0.0);
        // centres at x=4 and x=12
        assert_eq!(mean_flow_in_window(&f, &BBox::new(0, 0, 5, 8)), (10.0, 0.0));
        assert_eq!(mean_flow_in_window(&f, &BBox::new(5, 0, 8, 8)), (20.0, 0.0));
        assert_eq!(mean_flow_in_window(&f, &BBox::new(5, 0, 7, 8)), (0.0, 0.0));
    }
}
