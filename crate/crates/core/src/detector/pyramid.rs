//! Image pyramid and the mapping between grid positions and image boxes.

use crate::error::{Error, Result};
use crate::features::{compute_channels_at_scale, compute_flow, ChannelConfig, FeatureChannels, FlowField};
use crate::image::{scaled_dim, BBox, Frame};

use super::DetectorConfig;

#[derive(Debug, Clone)]
pub struct Pyramid {
    pub levels: Vec<(f64, Frame)>,
    pub scale_factor: f64,
}

/// Geometric pyramid with factor `2^(-1/scales_per_octave)`, from scale 1
/// down to the smallest level that still holds one window (and no smaller
/// than `min_scale`).
pub fn build_pyramid(frame: &Frame, channels: &ChannelConfig, cfg: &DetectorConfig) -> Result<Pyramid> {
    let scales = level_scales(frame.width(), frame.height(), channels, cfg)?;
    let levels = scales
        .into_iter()
        .map(|s| Ok((s, frame.rescale(s)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Pyramid {
        levels,
        scale_factor: 2f64.powf(-1.0 / cfg.scales_per_octave as f64),
    })
}

pub fn level_scales(width: usize, height: usize, channels: &ChannelConfig, cfg: &DetectorConfig) -> Result<Vec<f64>> {
    let (ww, wh) = (channels.window_width, channels.window_height);
    if width < ww || height < wh {
        return Err(Error::ImageTooSmall {
            width,
            height,
            min_width: ww,
            min_height: wh,
        });
    }
    let mut scales = Vec::new();
    for k in 0.. {
        let s = 2f64.powf(-(k as f64) / cfg.scales_per_octave as f64);
        if scaled_dim(width, s) < ww || scaled_dim(height, s) < wh || s < cfg.min_scale - 1e-12 {
            break;
        }
        if cfg.max_levels > 0 && scales.len() == cfg.max_levels {
            break;
        }
        scales.push(s);
    }
    Ok(scales)
}

/// Placement of the scan grid on one pyramid level.
///
/// The level image is mirror-padded by `pad_x`/`pad_y` (half a window,
/// rounded up to whole cells) and then cropped to a whole number of cells.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelGeometry {
    pub level: usize,
    pub scale: f64,
    pub width: usize,
    pub height: usize,
    pub pad_x: usize,
    pub pad_y: usize,
    pub padded_width: usize,
    pub padded_height: usize,
    pub stride: usize,
    pub cols: usize,
    pub rows: usize,
    pub window_width: usize,
    pub window_height: usize,
}

impl LevelGeometry {
    /// Window at grid node `(gx, gy)` in original image coordinates.
    pub fn to_bbox(&self, gx: usize, gy: usize) -> BBox {
        let x = (gx * self.stride) as f64 - self.pad_x as f64;
        let y = (gy * self.stride) as f64 - self.pad_y as f64;
        BBox::new(
            (x / self.scale).round() as i32,
            (y / self.scale).round() as i32,
            (self.window_width as f64 / self.scale).round() as i32,
            (self.window_height as f64 / self.scale).round() as i32,
        )
    }

    /// Real-valued grid coordinates of an image-space box's top-left corner.
    pub fn grid_coords(&self, b: &BBox) -> (f64, f64) {
        (
            (b.x as f64 * self.scale + self.pad_x as f64) / self.stride as f64,
            (b.y as f64 * self.scale + self.pad_y as f64) / self.stride as f64,
        )
    }

    pub fn window_count(&self) -> usize {
        self.cols * self.rows
    }

    /// Cell offset of grid node `(gx, gy)` within the level's channels.
    #[inline]
    pub fn cell_of(&self, gx: usize, gy: usize, cell: usize) -> (usize, usize) {
        (gx * self.stride / cell, gy * self.stride / cell)
    }
}

/// Level geometry for every pyramid level of frames of one size.
#[derive(Debug, Clone, PartialEq)]
pub struct PyramidGeometry {
    pub frame_width: usize,
    pub frame_height: usize,
    pub levels: Vec<LevelGeometry>,
}

pub fn half_window_pad(window: usize, cell: usize) -> usize {
    window.div_ceil(2).div_ceil(cell) * cell
}

impl PyramidGeometry {
    pub fn new(width: usize, height: usize, channels: &ChannelConfig, cfg: &DetectorConfig) -> Result<Self> {
        channels.validate()?;
        cfg.validate(channels)?;
        let cell = channels.cell_size;
        let (ww, wh) = (channels.window_width, channels.window_height);
        let pad_x = half_window_pad(ww, cell);
        let pad_y = half_window_pad(wh, cell);
        let levels = level_scales(width, height, channels, cfg)?
            .into_iter()
            .enumerate()
            .map(|(level, scale)| {
                let lw = scaled_dim(width, scale);
                let lh = scaled_dim(height, scale);
                let pw = (lw + 2 * pad_x) / cell * cell;
                let ph = (lh + 2 * pad_y) / cell * cell;
                LevelGeometry {
                    level,
                    scale,
                    width: lw,
                    height: lh,
                    pad_x,
                    pad_y,
                    padded_width: pw,
                    padded_height: ph,
                    stride: cfg.stride,
                    cols: (pw - ww) / cfg.stride + 1,
                    rows: (ph - wh) / cfg.stride + 1,
                    window_width: ww,
                    window_height: wh,
                }
            })
            .collect();
        Ok(PyramidGeometry {
            frame_width: width,
            frame_height: height,
            levels,
        })
    }

    pub fn total_windows(&self) -> usize {
        self.levels.iter().map(|l| l.window_count()).sum()
    }

    /// Padded level images of one frame.
    pub fn level_images(&self, frame: &Frame) -> Result<Vec<Frame>> {
        if frame.width() != self.frame_width || frame.height() != self.frame_height {
            return Err(Error::DimensionMismatch(
                frame.width(),
                frame.height(),
                self.frame_width,
                self.frame_height,
            ));
        }
        self.levels
            .iter()
            .map(|g| {
                let scaled = frame.rescale(g.scale)?;
                let padded = scaled.pad_mirror(g.pad_x, g.pad_y);
                if padded.width() == g.padded_width && padded.height() == g.padded_height {
                    Ok(padded)
                } else {
                    padded.resample(0.0, 0.0, 1.0, 1.0, g.padded_width, g.padded_height)
                }
            })
            .collect()
    }
}

/// Feature channels for every level of one frame.
#[derive(Debug, Clone)]
pub struct FrameFeatures {
    pub frame_index: usize,
    pub levels: Vec<FeatureChannels>,
}

/// Computes per-level channels frame by frame, keeping the previous frame's
/// level images when the flow channel needs them.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    pub channels: ChannelConfig,
    pub geometry: PyramidGeometry,
    prev: Option<(usize, Vec<Frame>)>,
}

impl FeatureExtractor {
    pub fn new(channels: ChannelConfig, geometry: PyramidGeometry) -> Self {
        FeatureExtractor {
            channels,
            geometry,
            prev: None,
        }
    }

    /// Features of `frame`. `prev_frame` is only used for the flow channel,
    /// and only when the cached previous levels do not already belong to it.
    pub fn extract(&mut self, frame: &Frame, prev_frame: Option<&Frame>) -> Result<FrameFeatures> {
        let levels = self.geometry.level_images(frame)?;
        let prev_levels = if self.channels.flow_hist {
            match (&self.prev, prev_frame) {
                (Some((idx, lv)), Some(p)) if *idx == p.index => Some(lv.clone()),
                (_, Some(p)) => Some(self.geometry.level_images(p)?),
                (_, None) => None,
            }
        } else {
            None
        };
        let cell = self.channels.cell_size;
        let mut out = Vec::with_capacity(levels.len());
        for (i, (img, g)) in levels.iter().zip(&self.geometry.levels).enumerate() {
            let flow = if self.channels.flow_hist {
                Some(match &prev_levels {
                    Some(p) => compute_flow(&p[i], img, cell, self.channels.flow_search_radius)?,
                    None => FlowField::zeros(img.width() / cell, img.height() / cell, cell),
                })
            } else {
                None
            };
            out.push(compute_channels_at_scale(img, &self.channels, flow.as_ref(), g.scale)?);
        }
        if self.channels.flow_hist {
            self.prev = Some((frame.index, levels));
        }
        Ok(FrameFeatures {
            frame_index: frame.index,
            levels: out,
        })
    }
}

/// Descriptor of an arbitrary image box, resampled so the box exactly fills
/// the model window (used for annotated positives and random negatives).
pub fn patch_descriptor(
    frame: &Frame,
    prev_frame: Option<&Frame>,
    bbox: &BBox,
    channels: &ChannelConfig,
) -> Result<Vec<f64>> {
    let cell = channels.cell_size;
    let (ww, wh) = (channels.window_width, channels.window_height);
    let pad_x = half_window_pad(ww, cell);
    let pad_y = half_window_pad(wh, cell);
    let sx = ww as f64 / bbox.w as f64;
    let sy = wh as f64 / bbox.h as f64;
    let ox = bbox.x as f64 - pad_x as f64 / sx;
    let oy = bbox.y as f64 - pad_y as f64 / sy;
    let (pw, ph) = (ww + 2 * pad_x, wh + 2 * pad_y);
    let patch = frame.resample(ox, oy, sx, sy, pw, ph)?;
    let flow = if channels.flow_hist {
        Some(match prev_frame {
            Some(p) => {
                let prev_patch = p.resample(ox, oy, sx, sy, pw, ph)?;
                compute_flow(&prev_patch, &patch, cell, channels.flow_search_radius)?
            }
            None => FlowField::zeros(pw / cell, ph / cell, cell),
        })
    } else {
        None
    };
    let ch = compute_channels_at_scale(&patch, channels, flow.as_ref(), sy)?;
    let mut out = vec![0.0; channels.descriptor_len()];
    ch.write_descriptor_at(pad_x / cell, pad_y / cell, &mut out);
    Ok(out)
}
