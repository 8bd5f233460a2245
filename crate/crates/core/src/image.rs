//! Grayscale frames and integer boxes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One 8-bit grayscale frame of a sequence, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub index: usize,
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Frame {
    pub fn new(index: usize, width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "frame dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "frame {width}x{height} needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Frame {
            index,
            width,
            height,
            pixels,
        })
    }

    pub fn filled(index: usize, width: usize, height: usize, value: u8) -> Result<Self> {
        Frame::new(index, width, height, vec![value; width * height])
    }

    pub fn from_fn(
        index: usize,
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Frame::new(index, width, height, pixels)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Pixel lookup with symmetric mirroring outside the frame.
    #[inline]
    pub fn get_mirrored(&self, x: isize, y: isize) -> u8 {
        let x = mirror(x, self.width);
        let y = mirror(y, self.height);
        self.pixels[y * self.width + x]
    }

    /// Bilinear sample at a real-valued position; outside positions are mirrored.
    pub fn sample(&self, fx: f64, fy: f64) -> f64 {
        let x0 = fx.floor();
        let y0 = fy.floor();
        let ax = fx - x0;
        let ay = fy - y0;
        let (x0, y0) = (x0 as isize, y0 as isize);
        let p00 = self.get_mirrored(x0, y0) as f64;
        let p10 = self.get_mirrored(x0 + 1, y0) as f64;
        let p01 = self.get_mirrored(x0, y0 + 1) as f64;
        let p11 = self.get_mirrored(x0 + 1, y0 + 1) as f64;
        let top = p00 + (p10 - p00) * ax;
        let bottom = p01 + (p11 - p01) * ax;
        top + (bottom - top) * ay
    }

    /// Resamples a rectangular region into a new `out_width` x `out_height` frame.
    ///
    /// Output pixel `(i, j)` reads the source at
    /// `origin + ((i + 0.5) / scale_x - 0.5, (j + 0.5) / scale_y - 0.5)`.
    pub fn resample(
        &self,
        origin_x: f64,
        origin_y: f64,
        scale_x: f64,
        scale_y: f64,
        out_width: usize,
        out_height: usize,
    ) -> Result<Frame> {
        // per-column source taps, mirrored once up front
        let cols: Vec<(usize, usize, f64)> = (0..out_width)
            .map(|i| {
                let fx = origin_x + (i as f64 + 0.5) / scale_x - 0.5;
                let x0 = fx.floor();
                let x0i = x0 as isize;
                (mirror(x0i, self.width), mirror(x0i + 1, self.width), fx - x0)
            })
            .collect();
        let mut pixels = Vec::with_capacity(out_width * out_height);
        for j in 0..out_height {
            let fy = origin_y + (j as f64 + 0.5) / scale_y - 0.5;
            let y0 = fy.floor();
            let ay = fy - y0;
            let y0i = y0 as isize;
            let r0 = &self.pixels[mirror(y0i, self.height) * self.width..][..self.width];
            let r1 = &self.pixels[mirror(y0i + 1, self.height) * self.width..][..self.width];
            for &(x0, x1, ax) in &cols {
                let (p00, p10) = (r0[x0] as f64, r0[x1] as f64);
                let (p01, p11) = (r1[x0] as f64, r1[x1] as f64);
                let top = p00 + (p10 - p00) * ax;
                let bottom = p01 + (p11 - p01) * ax;
                pixels.push((top + (bottom - top) * ay).round().clamp(0.0, 255.0) as u8);
            }
        }
        Frame::new(self.index, out_width, out_height, pixels)
    }

    /// Uniformly rescaled copy with dimensions `round(width * scale)`.
    pub fn rescale(&self, scale: f64) -> Result<Frame> {
        let w = scaled_dim(self.width, scale);
        let h = scaled_dim(self.height, scale);
        if (scale - 1.0).abs() < 1e-12 {
            return Ok(self.clone());
        }
        self.resample(0.0, 0.0, scale, scale, w, h)
    }

    /// Mirror-pads every side by the given pixel counts.
    pub fn pad_mirror(&self, pad_x: usize, pad_y: usize) -> Frame {
        let w = self.width + 2 * pad_x;
        let h = self.height + 2 * pad_y;
        let xs: Vec<usize> = (0..w).map(|x| mirror(x as isize - pad_x as isize, self.width)).collect();
        let mut pixels = Vec::with_capacity(w * h);
        for y in 0..h {
            let row = &self.pixels[mirror(y as isize - pad_y as isize, self.height) * self.width..][..self.width];
            pixels.extend(xs.iter().map(|&x| row[x]));
        }
        Frame {
            index: self.index,
            width: w,
            height: h,
            pixels,
        }
    }
}

pub(crate) fn scaled_dim(dim: usize, scale: f64) -> usize {
    ((dim as f64 * scale).round() as usize).max(1)
}

#[inline]
fn mirror(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

/// Axis-aligned integer box: top-left corner plus size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BBox {
    pub x: i32,
    pub y: i32,
    pub w: i32,
    pub h: i32,
}

impl BBox {
    pub fn new(x: i32, y: i32, w: i32, h: i32) -> Self {
        BBox { x, y, w, h }
    }

    pub fn is_valid(&self) -> bool {
        self.w > 0 && self.h > 0
    }

    #[inline]
    pub fn right(&self) -> i32 {
        self.x + self.w
    }

    #[inline]
    pub fn bottom(&self) -> i32 {
        self.y + self.h
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.w as f64 * self.h as f64
    }

    pub fn translated(&self, dx: i32, dy: i32) -> BBox {
        BBox::new(self.x + dx, self.y + dy, self.w, self.h)
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0 || ih <= 0 {
            0.0
        } else {
            iw as f64 * ih as f64
        }
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other);
        if inter == 0.0 {
            return 0.0;
        }
        inter / (self.area() + other.area() - inter)
    }
}

impl std::fmt::Display for BBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{} {}x{})", self.x, self.y, self.w, self.h)
    }
}
