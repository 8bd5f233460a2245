//! Dense per-frame feature channels and fixed-length window descriptors.
//!
//! Each channel is stored on the cell grid with its bins interleaved, so the
//! cells of one window row are contiguous in memory. A window descriptor is
//! the concatenation, channel by channel, of those rows.

pub mod flow;
pub mod hog;
pub mod lbp;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{BBox, Frame};

pub use flow::{compute_flow, mean_flow_in_window, FlowField};

pub const FLOW_BINS: usize = 10;
const FLOW_ORIENTATIONS: usize = 9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub grad_hist: bool,
    pub lbp_hist: bool,
    pub flow_hist: bool,
    pub cell_size: usize,
    pub window_width: usize,
    pub window_height: usize,
    /// Search radius of the block matcher used for `flow_hist`.
    pub flow_search_radius: usize,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            grad_hist: true,
            lbp_hist: true,
            flow_hist: false,
            cell_size: 8,
            window_width: 64,
            window_height: 128,
            flow_search_radius: 4,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_hist || self.lbp_hist || self.flow_hist) {
            return Err(Error::Config("at least one feature channel must be enabled".into()));
        }
        if self.cell_size < 4 {
            return Err(Error::Config(format!("cell_size {} must be >= 4", self.cell_size)));
        }
        if self.window_width % self.cell_size != 0 || self.window_height % self.cell_size != 0 {
            return Err(Error::Config(format!(
                "window {}x{} is not a multiple of cell_size {}",
                self.window_width, self.window_height, self.cell_size
            )));
        }
        if self.grad_hist && (self.window_cells().0 < 2 || self.window_cells().1 < 2) {
            return Err(Error::Config("grad_hist needs a window of at least 2x2 cells".into()));
        }
        if self.flow_hist && self.flow_search_radius < 1 {
            return Err(Error::Config("flow_search_radius must be >= 1".into()));
        }
        Ok(())
    }

    pub fn window_cells(&self) -> (usize, usize) {
        (
            self.window_width / self.cell_size,
            self.window_height / self.cell_size,
        )
    }

    fn kinds(&self) -> Vec<ChannelKind> {
        let mut kinds = Vec::new();
        if self.grad_hist {
            kinds.push(ChannelKind::Grad);
        }
        if self.lbp_hist {
            kinds.push(ChannelKind::Lbp);
        }
        if self.flow_hist {
            kinds.push(ChannelKind::Flow);
        }
        kinds
    }

    /// Closed-form descriptor length for this configuration.
    pub fn descriptor_len(&self) -> usize {
        let (wc, hc) = self.window_cells();
        self.kinds()
            .iter()
            .map(|k| {
                let (sw, sh) = k.span(wc, hc);
                sw * sh * k.bins()
            })
            .sum()
    }

    /// Stable identifier of the descriptor layout.
    pub fn layout_id(&self) -> u64 {
        fnv1a(
            format!(
                "v1|grad={}|lbp={}|flow={}|cell={}|win={}x{}",
                self.grad_hist,
                self.lbp_hist,
                self.flow_hist,
                self.cell_size,
                self.window_width,
                self.window_height
            )
            .as_bytes(),
        )
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    Grad,
    Lbp,
    Flow,
}

impl ChannelKind {
    pub fn bins(&self) -> usize {
        match self {
            ChannelKind::Grad => hog::BLOCK_BINS,
            ChannelKind::Lbp => lbp::LBP_BINS,
            ChannelKind::Flow => FLOW_BINS,
        }
    }

    /// Number of grid entries a `wc x hc`-cell window covers.
    fn span(&self, wc: usize, hc: usize) -> (usize, usize) {
        match self {
            ChannelKind::Grad => (wc - 1, hc - 1),
            _ => (wc, hc),
        }
    }
}

/// One channel on the cell grid: `rows * cols` entries of `bins` values.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPlane {
    pub kind: ChannelKind,
    pub bins: usize,
    pub cols: usize,
    pub rows: usize,
    pub data: Vec<f64>,
}

impl ChannelPlane {
    #[inline]
    pub fn cell(&self, cx: usize, cy: usize) -> &[f64] {
        &self.data[(cy * self.cols + cx) * self.bins..][..self.bins]
    }
}

/// Feature planes of one frame at one pyramid scale.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureChannels {
    pub frame_index: usize,
    pub scale: f64,
    pub cell_size: usize,
    pub planes: Vec<ChannelPlane>,
    config: ChannelConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub values: Vec<f64>,
    pub layout_id: u64,
}

pub fn compute_channels(
    frame: &Frame,
    config: &ChannelConfig,
    flow: Option<&FlowField>,
) -> Result<FeatureChannels> {
    compute_channels_at_scale(frame, config, flow, 1.0)
}

pub fn compute_channels_at_scale(
    frame: &Frame,
    config: &ChannelConfig,
    flow: Option<&FlowField>,
    scale: f64,
) -> Result<FeatureChannels> {
    config.validate()?;
    let cell = config.cell_size;
    if frame.width() < cell || frame.height() < cell {
        return Err(Error::ImageTooSmall {
            width: frame.width(),
            height: frame.height(),
            min_width: cell,
            min_height: cell,
        });
    }
    let mut planes = Vec::new();
    if config.grad_hist {
        let (cols, rows, cells) = hog::cell_histograms(frame, cell);
        planes.push(ChannelPlane {
            kind: ChannelKind::Grad,
            bins: hog::BLOCK_BINS,
            cols,
            rows,
            data: hog::block_normalise(cols, rows, &cells),
        });
    }
    if config.lbp_hist {
        let (cols, rows, data) = lbp::cell_histograms(frame, cell);
        planes.push(ChannelPlane {
            kind: ChannelKind::Lbp,
            bins: lbp::LBP_BINS,
            cols,
            rows,
            data,
        });
    }
    if config.flow_hist {
        let flow = flow.ok_or_else(|| {
            Error::InvalidArgument("flow_hist channel requires a flow field".into())
        })?;
        planes.push(flow_plane(frame.width() / cell, frame.height() / cell, flow));
    }
    Ok(FeatureChannels {
        frame_index: frame.index,
        scale,
        cell_size: cell,
        planes,
        config: config.clone(),
    })
}

/// 9 signed orientation bins (40 degrees each, magnitude-weighted and
/// interpolated) plus one magnitude bin per cell, scaled by `1/sqrt(1+|v|^2)`.
fn flow_plane(cols: usize, rows: usize, flow: &FlowField) -> ChannelPlane {
    let mut data = vec![0.0; cols * rows * FLOW_BINS];
    let bin_width = 2.0 * std::f64::consts::PI / FLOW_ORIENTATIONS as f64;
    for cy in 0..rows.min(flow.rows) {
        for cx in 0..cols.min(flow.cols) {
            let (u, v) = flow.at(cx, cy);
            let mag = (u * u + v * v).sqrt();
            if mag == 0.0 {
                continue;
            }
            let dst = &mut data[(cy * cols + cx) * FLOW_BINS..][..FLOW_BINS];
            let mut theta = v.atan2(u);
            if theta < 0.0 {
                theta += 2.0 * std::f64::consts::PI;
            }
            let pos = theta / bin_width;
            let b0 = pos.floor();
            let a = pos - b0;
            let b0 = b0 as usize % FLOW_ORIENTATIONS;
            dst[b0] += mag * (1.0 - a);
            dst[(b0 + 1) % FLOW_ORIENTATIONS] += mag * a;
            dst[FLOW_ORIENTATIONS] = mag;
            let norm = (dst.iter().map(|x| x * x).sum::<f64>() + 1.0).sqrt();
            dst.iter_mut().for_each(|x| *x /= norm);
        }
    }
    ChannelPlane {
        kind: ChannelKind::Flow,
        bins: FLOW_BINS,
        cols,
        rows,
        data,
    }
}

impl FeatureChannels {
    pub fn config(&self) -> &ChannelConfig {
        &self.config
    }

    pub fn layout_id(&self) -> u64 {
        self.config.layout_id()
    }

    pub fn descriptor_len(&self) -> usize {
        self.config.descriptor_len()
    }

    /// Cell-grid size shared by every plane.
    pub fn grid(&self) -> (usize, usize) {
        self.planes
            .first()
            .map(|p| (p.cols, p.rows))
            .unwrap_or((0, 0))
    }

    /// Whether a window anchored at cell `(cx, cy)` fits inside the planes.
    pub fn window_fits(&self, cx: usize, cy: usize) -> bool {
        let (wc, hc) = self.config.window_cells();
        let (cols, rows) = self.grid();
        cx + wc <= cols && cy + hc <= rows
    }

    fn window_cell(&self, window: &BBox) -> Result<(usize, usize)> {
        let cell = self.cell_size as i32;
        let aligned = window.x >= 0
            && window.y >= 0
            && window.x % cell == 0
            && window.y % cell == 0
            && window.w as usize == self.config.window_width
            && window.h as usize == self.config.window_height;
        let (cx, cy) = ((window.x / cell.max(1)) as usize, (window.y / cell.max(1)) as usize);
        if !aligned || !self.window_fits(cx, cy) {
            return Err(Error::BadWindow(window.to_string()));
        }
        Ok((cx, cy))
    }

    pub fn extract_descriptor(&self, window: &BBox) -> Result<Descriptor> {
        let (cx, cy) = self.window_cell(window)?;
        let mut values = vec![0.0; self.descriptor_len()];
        self.write_descriptor_at(cx, cy, &mut values);
        Ok(Descriptor {
            values,
            layout_id: self.layout_id(),
        })
    }

    /// Fills `out` with the descriptor of the window anchored at cell
    /// `(cx, cy)`. The caller guarantees the window fits.
    pub fn write_descriptor_at(&self, cx: usize, cy: usize, out: &mut [f64]) {
        let (wc, hc) = self.config.window_cells();
        let mut pos = 0;
        for plane in &self.planes {
            let (sw, sh) = plane.kind.span(wc, hc);
            let row_len = sw * plane.bins;
            for r in 0..sh {
                let start = ((cy + r) * plane.cols + cx) * plane.bins;
                out[pos..pos + row_len].copy_from_slice(&plane.data[start..start + row_len]);
                pos += row_len;
            }
        }
        debug_assert_eq!(pos, out.len());
    }

    /// `weights . descriptor(cx, cy)` without materialising the descriptor.
    pub fn dot_at(&self, weights: &[f64], cx: usize, cy: usize) -> f64 {
        let (wc, hc) = self.config.window_cells();
        let mut pos = 0;
        let mut acc = 0.0;
        for plane in &self.planes {
            let (sw, sh) = plane.kind.span(wc, hc);
            let row_len = sw * plane.bins;
            for r in 0..sh {
                let start = ((cy + r) * plane.cols + cx) * plane.bins;
                acc += dot(&weights[pos..pos + row_len], &plane.data[start..start + row_len]);
                pos += row_len;
            }
        }
        acc
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators let the compiler vectorise
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in 4 * chunks..a.len() {
        s += a[j] * b[j];
    }
    s
}
