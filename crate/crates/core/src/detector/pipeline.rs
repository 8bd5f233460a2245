use std::collections::{BTreeMap, VecDeque};

use crate::error::{Error, Result};
use crate::features::{compute_flow, FlowField};
use crate::linear_svm::{score, LinearModel};
use crate::sequence_io::ImageSequence;
use crate::ssl::{NeighborhoodSpec, VolumeMode};

use super::{
    candidate_descriptor, nms, stage1_scan, stage2_ssl, Candidate, Detection, DetectorConfig,
    FeatureExtractor, PyramidGeometry, ScoreMapStore, Stage,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PipelineStats {
    pub frames: usize,
    /// Windows scored by the base classifier.
    pub scored_windows: usize,
    /// Windows passed on to stage 2.
    pub stage1_candidates: usize,
    /// Detections surviving stage 2 before suppression.
    pub stage2_kept: usize,
    /// Largest number of frames the score-map store ever held.
    pub max_store_frames: usize,
}

#[derive(Debug, Clone)]
pub struct DetectionRun {
    pub detections: Vec<Detection>,
    pub stats: PipelineStats,
}

struct Pending {
    frame_index: usize,
    candidates: Vec<Candidate>,
    descriptors: Vec<Vec<f64>>,
}

/// Runs the full pipeline over a sequence in temporal order.
///
/// Without a stacked model (or with `cfg.ssl_disabled`) this is the
/// single-stage baseline: stage-1 candidates go straight to suppression.
pub fn detect_sequence(
    seq: &ImageSequence,
    c_b: &LinearModel,
    c_ssl: Option<&LinearModel>,
    cfg: &DetectorConfig,
) -> Result<DetectionRun> {
    let first = seq.frames.first().ok_or(Error::EmptySequence)?;
    let channels = c_b.channels()?.clone();
    let geometry = PyramidGeometry::new(first.width(), first.height(), &channels, cfg)?;
    c_b.check_layout(channels.layout_id())?;

    let ssl = match c_ssl {
        Some(m) if !cfg.ssl_disabled => {
            let spec: NeighborhoodSpec = m
                .meta
                .neighborhood
                .ok_or_else(|| Error::ModelFormat("stacked model carries no neighbourhood".into()))?;
            spec.validate()?;
            m.check_layout(spec.layout_id(c_b.layout_id))?;
            Some((m, spec))
        }
        _ => None,
    };

    let t = ssl.map(|(_, s)| s.t).unwrap_or(1);
    let lookahead = ssl.map(|(_, s)| s.lookahead()).unwrap_or(0);
    let needs_flow = ssl.is_some_and(|(_, s)| s.volume_mode == VolumeMode::OpticalFlow);
    let mut store = ScoreMapStore::with_capacity(t);
    let mut flows: BTreeMap<usize, FlowField> = BTreeMap::new();
    let mut extractor = FeatureExtractor::new(channels, geometry.clone());
    let mut pending: VecDeque<Pending> = VecDeque::new();
    let mut stats = PipelineStats::default();
    let mut detections = Vec::new();
    let last = seq.len() - 1;

    for (i, frame) in seq.frames.iter().enumerate() {
        let prev = i.checked_sub(1).map(|p| &seq.frames[p]);
        let features = extractor.extract(frame, prev)?;
        if needs_flow {
            if let Some(p) = prev {
                flows.insert(i, compute_flow(p, frame, cfg.flow_block_size, cfg.flow_search_radius)?);
            }
            while flows.len() > t {
                flows.pop_first();
            }
        }
        let candidates = stage1_scan(&features, c_b, &geometry, cfg, &mut store)?;
        stats.frames += 1;
        stats.scored_windows += geometry.total_windows();
        stats.stage1_candidates += candidates.len();
        stats.max_store_frames = stats.max_store_frames.max(store.frames_held());

        match ssl {
            None => {
                let dets: Vec<Detection> = candidates.iter().map(|c| c.to_detection(Stage::Stage1)).collect();
                detections.extend(nms(&dets, cfg.nms_iou));
            }
            Some((c_ssl, spec)) => {
                let descriptors = candidates
                    .iter()
                    .map(|c| candidate_descriptor(&features, &geometry, c))
                    .collect();
                pending.push_back(Pending {
                    frame_index: i,
                    candidates,
                    descriptors,
                });
                while let Some(p) = pending.front() {
                    if p.frame_index + lookahead > i && i != last {
                        break;
                    }
                    let p = pending.pop_front().unwrap();
                    let kept = stage2_ssl(
                        &p.candidates,
                        &p.descriptors,
                        c_ssl,
                        &spec,
                        &store,
                        &flows,
                        &geometry,
                        cfg,
                        seq.len(),
                    )?;
                    stats.stage2_kept += kept.len();
                    detections.extend(nms(&kept, cfg.nms_iou));
                }
            }
        }
    }
    Ok(DetectionRun { detections, stats })
}

/// Straightforward single-stage detector: materialises every window
/// descriptor, scores it, thresholds and suppresses. Used to cross-check
/// the baseline path of [`detect_sequence`].
pub fn reference_single_stage(seq: &ImageSequence, c_b: &LinearModel, cfg: &DetectorConfig) -> Result<Vec<Detection>> {
    let first = seq.frames.first().ok_or(Error::EmptySequence)?;
    let channels = c_b.channels()?.clone();
    let geometry = PyramidGeometry::new(first.width(), first.height(), &channels, cfg)?;
    let mut out = Vec::new();
    for (i, frame) in seq.frames.iter().enumerate() {
        let prev = i.checked_sub(1).map(|p| &seq.frames[p]);
        let mut extractor = FeatureExtractor::new(channels.clone(), geometry.clone());
        let features = extractor.extract(frame, prev)?;
        let mut dets = Vec::new();
        for (ch, g) in features.levels.iter().zip(&geometry.levels) {
            for gy in 0..g.rows {
                for gx in 0..g.cols {
                    let window = crate::image::BBox::new(
                        (gx * g.stride) as i32,
                        (gy * g.stride) as i32,
                        g.window_width as i32,
                        g.window_height as i32,
                    );
                    let d = ch.extract_descriptor(&window)?;
                    let s = score(c_b, &d)?;
                    if s >= cfg.stage1_threshold {
                        dets.push(Detection {
                            frame_index: i,
                            bbox: g.to_bbox(gx, gy),
                            score: s,
                            stage: Stage::Stage1,
                        });
                    }
                }
            }
        }
        out.extend(nms(&dets, cfg.nms_iou));
    }
    Ok(out)
}
