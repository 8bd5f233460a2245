//! Two-stage sliding-window detection: a permissive base-classifier scan
//! that caches its score maps, followed by stacked re-scoring of the
//! surviving candidates and non-maximum suppression.

mod nms;
mod pipeline;
mod pyramid;
mod scoremap;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::ChannelConfig;
use crate::image::BBox;
use crate::linear_svm::LinearModel;
use crate::ssl::{augment, build_track, gather_neighbor_scores, FlowSource, GridAnchor, NeighborhoodSpec};

pub use nms::nms;
pub use pipeline::{detect_sequence, reference_single_stage, DetectionRun, PipelineStats};
pub use pyramid::{
    build_pyramid, half_window_pad, level_scales, patch_descriptor, FeatureExtractor, FrameFeatures,
    LevelGeometry, Pyramid, PyramidGeometry,
};
pub use scoremap::{ScoreMap, ScoreMapStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub scales_per_octave: usize,
    /// Smallest pyramid scale to scan (0 scans down to the window size).
    pub min_scale: f64,
    /// Maximum number of pyramid levels (0 for no limit).
    pub max_levels: usize,
    /// Grid step in level pixels; a multiple of the cell size.
    pub stride: usize,
    /// Stage-1 candidates are windows with base score at or above this.
    pub stage1_threshold: f64,
    /// Stage-2 keeps candidates whose stacked score is at or above this.
    pub stage2_threshold: f64,
    pub nms_iou: f64,
    pub ssl_disabled: bool,
    /// Score used for neighbours that fall off the grid; defaults to the
    /// stage-1 threshold.
    pub out_of_grid_score: Option<f64>,
    /// Block matcher settings for flow-compensated neighbourhoods.
    pub flow_block_size: usize,
    pub flow_search_radius: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            scales_per_octave: 8,
            min_scale: 0.0,
            max_levels: 0,
            stride: 8,
            stage1_threshold: -1.0,
            stage2_threshold: 0.0,
            nms_iou: 0.5,
            ssl_disabled: false,
            out_of_grid_score: None,
            flow_block_size: 8,
            flow_search_radius: 4,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self, channels: &ChannelConfig) -> Result<()> {
        if self.scales_per_octave == 0 {
            return Err(Error::Config("scales_per_octave must be >= 1".into()));
        }
        if self.stride == 0 || self.stride % channels.cell_size != 0 {
            return Err(Error::Config(format!(
                "stride {} must be a positive multiple of cell_size {}",
                self.stride, channels.cell_size
            )));
        }
        if !(self.nms_iou > 0.0 && self.nms_iou <= 1.0) {
            return Err(Error::Config(format!("nms_iou {} must be in (0, 1]", self.nms_iou)));
        }
        if self.flow_block_size < 4 || self.flow_search_radius < 1 {
            return Err(Error::Config("flow_block_size must be >= 4 and flow_search_radius >= 1".into()));
        }
        Ok(())
    }

    pub fn out_of_grid(&self) -> f64 {
        self.out_of_grid_score.unwrap_or(self.stage1_threshold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Stage1,
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub frame_index: usize,
    pub bbox: BBox,
    pub score: f64,
    pub stage: Stage,
}

/// A stage-1 window that passed the permissive threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub frame_index: usize,
    pub anchor: GridAnchor,
    pub bbox: BBox,
    pub score: f64,
}

impl Candidate {
    pub fn to_detection(&self, stage: Stage) -> Detection {
        Detection {
            frame_index: self.frame_index,
            bbox: self.bbox,
            score: self.score,
            stage,
        }
    }
}

/// Scores every grid node of every level with the base classifier.
pub fn score_frame(features: &FrameFeatures, model: &LinearModel, geometry: &PyramidGeometry) -> Result<Vec<ScoreMap>> {
    let mut maps = Vec::with_capacity(geometry.levels.len());
    for (ch, g) in features.levels.iter().zip(&geometry.levels) {
        model.check_layout(ch.layout_id())?;
        let mut map = ScoreMap::new(features.frame_index, g.level, g.cols, g.rows);
        for gy in 0..g.rows {
            for gx in 0..g.cols {
                let (cx, cy) = g.cell_of(gx, gy, ch.cell_size);
                map.data[gy * g.cols + gx] = ch.dot_at(&model.weights, cx, cy) + model.bias;
            }
        }
        maps.push(map);
    }
    Ok(maps)
}

/// Stage-1 candidates from freshly computed score maps.
pub fn threshold_candidates(maps: &[ScoreMap], geometry: &PyramidGeometry, threshold: f64) -> Vec<Candidate> {
    let mut out = Vec::new();
    for (map, g) in maps.iter().zip(&geometry.levels) {
        for gy in 0..map.rows {
            for gx in 0..map.cols {
                let score = map.at(gx, gy);
                if score >= threshold {
                    out.push(Candidate {
                        frame_index: map.frame_index,
                        anchor: GridAnchor { level: g.level, gx, gy },
                        bbox: g.to_bbox(gx, gy),
                        score,
                    });
                }
            }
        }
    }
    out
}

/// Scans one frame: fills the store with its score maps and returns the
/// windows at or above the stage-1 threshold (no suppression).
pub fn stage1_scan(
    features: &FrameFeatures,
    c_b: &LinearModel,
    geometry: &PyramidGeometry,
    cfg: &DetectorConfig,
    store: &mut ScoreMapStore,
) -> Result<Vec<Candidate>> {
    let maps = score_frame(features, c_b, geometry)?;
    let candidates = threshold_candidates(&maps, geometry, cfg.stage1_threshold);
    store.insert(features.frame_index, maps);
    Ok(candidates)
}

/// Base descriptor of a candidate, read from its frame's features.
pub fn candidate_descriptor(features: &FrameFeatures, geometry: &PyramidGeometry, c: &Candidate) -> Vec<f64> {
    let ch = &features.levels[c.anchor.level];
    let g = &geometry.levels[c.anchor.level];
    let (cx, cy) = g.cell_of(c.anchor.gx, c.anchor.gy, ch.cell_size);
    let mut out = vec![0.0; ch.descriptor_len()];
    ch.write_descriptor_at(cx, cy, &mut out);
    out
}

/// Augmented vector `[descriptor || neighbour scores]` of one candidate.
#[allow(clippy::too_many_arguments)]
pub fn augmented_vector(
    candidate: &Candidate,
    descriptor: &[f64],
    spec: &NeighborhoodSpec,
    store: &ScoreMapStore,
    flows: &dyn FlowSource,
    geometry: &PyramidGeometry,
    out_of_grid: f64,
    seq_len: usize,
) -> Result<Vec<f64>> {
    let track = build_track(candidate.bbox, candidate.frame_index, spec, flows, seq_len);
    let mut scores = Vec::with_capacity(spec.score_count());
    gather_neighbor_scores(
        &track,
        &candidate.anchor,
        spec,
        store,
        &geometry.levels[candidate.anchor.level],
        out_of_grid,
        &mut scores,
    )?;
    Ok(augment(descriptor, &scores))
}

/// Re-scores candidates with the stacked classifier and keeps those at or
/// above the stage-2 threshold. Boxes are never moved.
#[allow(clippy::too_many_arguments)]
pub fn stage2_ssl(
    candidates: &[Candidate],
    descriptors: &[Vec<f64>],
    c_ssl: &LinearModel,
    spec: &NeighborhoodSpec,
    store: &ScoreMapStore,
    flows: &dyn FlowSource,
    geometry: &PyramidGeometry,
    cfg: &DetectorConfig,
    seq_len: usize,
) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for (c, d) in candidates.iter().zip(descriptors) {
        let v = augmented_vector(c, d, spec, store, flows, geometry, cfg.out_of_grid(), seq_len)?;
        let score = c_ssl.score_values(&v);
        if score >= cfg.stage2_threshold {
            out.push(Detection {
                frame_index: c.frame_index,
                bbox: c.bbox,
                score,
                stage: Stage::Final,
            });
        }
    }
    Ok(out)
}

pub const DETECTION_HEADER: &str = "frame_index,x,y,w,h,score";

pub fn format_detections(detections: &[Detection]) -> String {
    let mut s = String::from(DETECTION_HEADER);
    s.push('\n');
    for d in detections {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            d.frame_index, d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h, d.score
        );
    }
    s
}

pub fn parse_detections(text: &str) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line == DETECTION_HEADER) {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = |reason: &str| Error::Csv {
            line: i + 1,
            reason: reason.to_string(),
        };
        if f.len() != 6 {
            return Err(bad(&format!("expected 6 fields, got {}", f.len())));
        }
        let int = |s: &str| s.parse::<i32>().map_err(|_| bad("bad integer"));
        let score: f64 = f[5].parse().map_err(|_| bad("bad score"))?;
        if !score.is_finite() {
            return Err(bad("non-finite score"));
        }
        out.push(Detection {
            frame_index: f[0].parse().map_err(|_| bad("bad frame_index"))?,
            bbox: BBox::new(int(f[1])?, int(f[2])?, int(f[3])?, int(f[4])?),
            score,
            stage: Stage::Final,
        });
    }
    Ok(out)
}

pub fn write_detections(path: &Path, detections: &[Detection]) -> Result<()> {
    std::fs::write(path, format_detections(detections)).map_err(|e| Error::io(path, e))
}

pub fn read_detections(path: &Path) -> Result<Vec<Detection>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_detections(&text)
}
