//! Spatiotemporal neighbourhoods: window tracks across frames and the
//! base-classifier scores read around them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::detector::{LevelGeometry, ScoreMapStore};
use crate::error::{Error, Result};
use crate::features::{mean_flow_in_window, FlowField};
use crate::image::BBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalStyle {
    Past,
    Future,
    Centered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeMode {
    Projection,
    OpticalFlow,
}

/// How `nx`/`ny` count displacements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reading {
    /// `nx` displacements on each side: `2*nx+1` columns.
    #[default]
    PerSide,
    /// `nx` is the full (odd) column count.
    Grid,
}

/// Neighbourhood geometry: `2*nx+1` by `2*ny+1` spatial displacements of
/// `step` pixels (in the candidate's pyramid level) over `t` frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeighborhoodSpec {
    pub nx: usize,
    pub ny: usize,
    pub step_x: usize,
    pub step_y: usize,
    pub t: usize,
    pub temporal_style: TemporalStyle,
    pub volume_mode: VolumeMode,
    pub reading: Reading,
}

impl Default for NeighborhoodSpec {
    fn default() -> Self {
        NeighborhoodSpec {
            nx: 3,
            ny: 3,
            step_x: 8,
            step_y: 8,
            t: 5,
            temporal_style: TemporalStyle::Past,
            volume_mode: VolumeMode::Projection,
            reading: Reading::PerSide,
        }
    }
}

impl NeighborhoodSpec {
    pub fn validate(&self) -> Result<()> {
        if self.t == 0 {
            return Err(Error::Config("neighbourhood T must be >= 1".into()));
        }
        if self.temporal_style == TemporalStyle::Centered && self.t % 2 == 0 {
            return Err(Error::Config(format!("centered neighbourhood needs odd T, got {}", self.t)));
        }
        if self.reading == Reading::Grid && (self.nx % 2 == 0 || self.ny % 2 == 0) {
            return Err(Error::Config(format!(
                "grid reading needs odd nx and ny, got {}x{}",
                self.nx, self.ny
            )));
        }
        if self.step_x == 0 || self.step_y == 0 {
            return Err(Error::Config("neighbourhood step must be positive".into()));
        }
        Ok(())
    }

    /// Displacements on each side of the window, horizontally and vertically.
    pub fn radii(&self) -> (usize, usize) {
        match self.reading {
            Reading::PerSide => (self.nx, self.ny),
            Reading::Grid => (self.nx / 2, self.ny / 2),
        }
    }

    /// Number of neighbour scores per sample: `(2nx+1)(2ny+1)T` for the
    /// per-side reading.
    pub fn score_count(&self) -> usize {
        let (rx, ry) = self.radii();
        (2 * rx + 1) * (2 * ry + 1) * self.t
    }

    /// Frame offsets relative to the anchor frame, oldest first, and the
    /// position of the anchor in that list.
    pub fn frame_offsets(&self) -> (Vec<isize>, usize) {
        let t = self.t as isize;
        match self.temporal_style {
            TemporalStyle::Past => ((-(t - 1)..=0).collect(), self.t - 1),
            TemporalStyle::Future => ((0..t).collect(), 0),
            TemporalStyle::Centered => {
                let h = (t - 1) / 2;
                ((-h..=h).collect(), h as usize)
            }
        }
    }

    /// Frames after the anchor that must be scored before it can be.
    pub fn lookahead(&self) -> usize {
        let (offsets, _) = self.frame_offsets();
        offsets.last().copied().unwrap_or(0).max(0) as usize
    }

    /// Augmented-vector layout: the base layout extended with this geometry.
    pub fn layout_id(&self, base_layout: u64) -> u64 {
        crate::features::fnv1a(
            format!(
                "ssl|{base_layout:016x}|{}|{}|{}|{}|{}|{:?}|{:?}",
                self.nx, self.ny, self.step_x, self.step_y, self.t, self.temporal_style, self.reading
            )
            .as_bytes(),
        )
    }
}

/// Flow fields keyed by frame: entry `f` holds the flow from frame `f-1` to `f`.
pub trait FlowSource {
    fn flow_into(&self, frame: usize) -> Option<&FlowField>;
}

impl FlowSource for BTreeMap<usize, FlowField> {
    fn flow_into(&self, frame: usize) -> Option<&FlowField> {
        self.get(&frame)
    }
}

/// Source with no flow at all: every translation is zero.
pub struct NoFlow;

impl FlowSource for NoFlow {
    fn flow_into(&self, _frame: usize) -> Option<&FlowField> {
        None
    }
}

/// One window per neighbourhood frame, oldest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowTrack {
    pub frames: Vec<usize>,
    pub windows: Vec<BBox>,
    pub anchor: usize,
    pub mode: VolumeMode,
}

fn translate_by_flow(flow: Option<&FlowField>, window: &BBox, sign: f64) -> BBox {
    match flow {
        Some(f) => {
            let (u, v) = mean_flow_in_window(f, window);
            window.translated((sign * u).round() as i32, (sign * v).round() as i32)
        }
        None => *window,
    }
}

/// Builds the window track anchored at `window` in `frame_index`. Frames
/// outside `[0, seq_len)` are clamped to the boundary frame and repeat its
/// window.
pub fn build_track(
    window: BBox,
    frame_index: usize,
    spec: &NeighborhoodSpec,
    flows: &dyn FlowSource,
    seq_len: usize,
) -> WindowTrack {
    let (offsets, anchor) = spec.frame_offsets();
    let last = seq_len.saturating_sub(1) as isize;
    let frames: Vec<usize> = offsets
        .iter()
        .map(|&o| (frame_index as isize + o).clamp(0, last.max(frame_index as isize)) as usize)
        .collect();
    let mut windows = vec![window; offsets.len()];
    if spec.volume_mode == VolumeMode::OpticalFlow {
        // backwards: W_{f-1} = W_f - t(W_f)
        for k in (0..anchor).rev() {
            windows[k] = if frames[k] == frames[k + 1] {
                windows[k + 1]
            } else {
                translate_by_flow(flows.flow_into(frames[k + 1]), &windows[k + 1], -1.0)
            };
        }
        // forwards: W_{f+1} = W_f + t(W_f)
        for k in anchor + 1..offsets.len() {
            windows[k] = if frames[k] == frames[k - 1] {
                windows[k - 1]
            } else {
                translate_by_flow(flows.flow_into(frames[k]), &windows[k - 1], 1.0)
            };
        }
    }
    WindowTrack {
        frames,
        windows,
        anchor,
        mode: spec.volume_mode,
    }
}

/// Where a candidate sits in the scan grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridAnchor {
    pub level: usize,
    pub gx: usize,
    pub gy: usize,
}

/// Reads the base scores around every window of `track`, frame-major
/// (oldest first) and row-major over the `(dy, dx)` displacements. Each
/// window's offset from the anchor window is converted to the anchor's
/// level and rounded to the nearest grid node; nodes outside the grid read
/// `out_of_grid`.
pub fn gather_neighbor_scores(
    track: &WindowTrack,
    anchor: &GridAnchor,
    spec: &NeighborhoodSpec,
    store: &ScoreMapStore,
    geometry: &LevelGeometry,
    out_of_grid: f64,
    out: &mut Vec<f64>,
) -> Result<()> {
    let origin = track.windows[track.anchor];
    let stride = geometry.stride as f64;
    let (rx, ry) = spec.radii();
    let (nx, ny) = (rx as i64, ry as i64);
    for (frame, window) in track.frames.iter().zip(&track.windows) {
        let map = store.get(*frame, anchor.level)?;
        let base_x = anchor.gx as f64 * stride + (window.x - origin.x) as f64 * geometry.scale;
        let base_y = anchor.gy as f64 * stride + (window.y - origin.y) as f64 * geometry.scale;
        for j in -ny..=ny {
            let gy = ((base_y + (j * spec.step_y as i64) as f64) / stride).round() as i64;
            for i in -nx..=nx {
                let gx = ((base_x + (i * spec.step_x as i64) as f64) / stride).round() as i64;
                out.push(map.get(gx, gy).unwrap_or(out_of_grid));
            }
        }
    }
    Ok(())
}

/// `[base descriptor || neighbour scores]`.
pub fn augment(base: &[f64], neighbor_scores: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(base.len() + neighbor_scores.len());
    v.extend_from_slice(base);
    v.extend_from_slice(neighbor_scores);
    v
}
