//! Hard-negative bootstrapping for the base classifier.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::detector::{patch_descriptor, score_frame, DetectorConfig, FeatureExtractor, PyramidGeometry};
use crate::error::{Error, Result};
use crate::features::ChannelConfig;
use crate::image::BBox;
use crate::sequence_io::{Annotation, ImageSequence, Label};

use super::{train, LinearModel, ModelKind, ModelMeta, SvmConfig, TrainSet};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoundReport {
    pub round: usize,
    pub positives: usize,
    pub negatives: usize,
    /// Hard negatives added in this round (0 for the initial round).
    pub mined: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BootstrapReport {
    pub rounds: Vec<RoundReport>,
}

/// Total order on mined windows: higher score first, then earlier frame,
/// level, row and column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct MinedKey {
    pub score: f64,
    pub frame: usize,
    pub level: usize,
    pub gy: usize,
    pub gx: usize,
}

impl Eq for MinedKey {}

impl Ord for MinedKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then(other.frame.cmp(&self.frame))
            .then(other.level.cmp(&self.level))
            .then(other.gy.cmp(&self.gy))
            .then(other.gx.cmp(&self.gx))
    }
}

impl PartialOrd for MinedKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Keeps the `cap` best items seen so far.
pub(crate) struct TopK<T> {
    cap: usize,
    heap: BinaryHeap<Reverse<(MinedKey, Slot<T>)>>,
}

pub(crate) struct Slot<T>(pub T);

impl<T> PartialEq for Slot<T> {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}
impl<T> Eq for Slot<T> {}
impl<T> PartialOrd for Slot<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Slot<T> {
    fn cmp(&self, _: &Self) -> Ordering {
        Ordering::Equal
    }
}

impl<T> TopK<T> {
    pub fn new(cap: usize) -> Self {
        TopK {
            cap,
            heap: BinaryHeap::new(),
        }
    }

    /// Whether an item with this key would currently be kept.
    pub fn admits(&self, key: &MinedKey) -> bool {
        if self.cap == 0 {
            return false;
        }
        if self.heap.len() < self.cap {
            return true;
        }
        self.heap.peek().is_some_and(|Reverse((worst, _))| key > worst)
    }

    pub fn push(&mut self, key: MinedKey, item: T) {
        if !self.admits(&key) {
            return;
        }
        self.heap.push(Reverse((key, Slot(item))));
        if self.heap.len() > self.cap {
            self.heap.pop();
        }
    }

    /// Items best first.
    pub fn into_sorted(self) -> Vec<(MinedKey, T)> {
        let mut v: Vec<(MinedKey, T)> = self.heap.into_iter().map(|Reverse((k, Slot(t)))| (k, t)).collect();
        v.sort_by(|a, b| b.0.cmp(&a.0));
        v
    }
}

pub(crate) fn overlaps_any(b: &BBox, annotations: &[Annotation], max_iou: f64) -> bool {
    annotations.iter().any(|a| a.bbox.iou(b) >= max_iou)
}

pub(crate) fn is_positive(a: &Annotation) -> bool {
    a.label == Label::Pedestrian && !a.occluded
}

/// Frames of `frames` that carry labels under `svm.label_every`.
pub fn labelled_frames(frames: &[usize], svm: &SvmConfig) -> Vec<usize> {
    frames.iter().copied().filter(|f| f % svm.label_every == 0).collect()
}

/// Trains the base classifier on every frame of the sequence.
pub fn bootstrap_train(
    seq: &ImageSequence,
    channels: &ChannelConfig,
    det: &DetectorConfig,
    svm: &SvmConfig,
) -> Result<(LinearModel, BootstrapReport)> {
    let frames: Vec<usize> = (0..seq.len()).collect();
    bootstrap_train_on(seq, &frames, channels, det, svm)
}

/// Trains a base classifier from the labelled frames among `frames`:
/// annotated boxes and the scanned windows overlapping them as positives,
/// random windows as negatives, then `svm.bootstrap_rounds`
/// rounds that add the highest-scoring false positives and retrain from
/// scratch.
pub fn bootstrap_train_on(
    seq: &ImageSequence,
    frames: &[usize],
    channels: &ChannelConfig,
    det: &DetectorConfig,
    svm: &SvmConfig,
) -> Result<(LinearModel, BootstrapReport)> {
    svm.validate()?;
    channels.validate()?;
    let first = seq.frames.first().ok_or(Error::EmptySequence)?;
    let geometry = PyramidGeometry::new(first.width(), first.height(), channels, det)?;
    let by_frame = seq.annotations_by_frame();
    let frames = labelled_frames(frames, svm);
    let layout = channels.layout_id();
    let mut set = TrainSet::new(layout);

    let mut extractor = FeatureExtractor::new(channels.clone(), geometry.clone());
    for &f in &frames {
        let prev = f.checked_sub(1).map(|p| &seq.frames[p]);
        let gts: Vec<BBox> = by_frame[f].iter().filter(|a| is_positive(a)).map(|a| a.bbox).collect();
        if gts.is_empty() {
            continue;
        }
        for b in &gts {
            let d = patch_descriptor(&seq.frames[f], prev, b, channels)?;
            set.push(d, 1, Some((f, *b)));
        }
        let features = extractor.extract(&seq.frames[f], prev)?;
        for g in &geometry.levels {
            let ch = &features.levels[g.level];
            for gy in 0..g.rows {
                for gx in 0..g.cols {
                    let b = g.to_bbox(gx, gy);
                    if gts.iter().any(|t| t.iou(&b) >= svm.pos_min_iou) {
                        let (cx, cy) = g.cell_of(gx, gy, ch.cell_size);
                        let mut values = vec![0.0; ch.descriptor_len()];
                        ch.write_descriptor_at(cx, cy, &mut values);
                        set.push(values, 1, Some((f, b)));
                    }
                }
            }
        }
    }
    if set.is_empty() {
        return Err(Error::NoPositives);
    }
    let positives = set.len();

    let mut rng = ChaCha8Rng::seed_from_u64(svm.seed ^ 0x6e65_6761_7469_7665);
    for &f in &frames {
        let prev = f.checked_sub(1).map(|p| &seq.frames[p]);
        let mut taken = 0;
        let mut attempts = 0;
        while taken < svm.neg_per_frame && attempts < 50 * svm.neg_per_frame.max(1) {
            attempts += 1;
            let g = &geometry.levels[rng.gen_range(0..geometry.levels.len())];
            let b = g.to_bbox(rng.gen_range(0..g.cols), rng.gen_range(0..g.rows));
            if overlaps_any(&b, &by_frame[f], svm.neg_max_iou) {
                continue;
            }
            set.push(patch_descriptor(&seq.frames[f], prev, &b, channels)?, -1, Some((f, b)));
            taken += 1;
        }
    }

    let meta = ModelMeta {
        channels: Some(channels.clone()),
        neighborhood: None,
    };
    let finish = |mut m: LinearModel| {
        m.kind = ModelKind::Base;
        m.meta = meta.clone();
        m
    };
    let mut model = finish(train(&set, svm)?);
    let mut report = BootstrapReport {
        rounds: vec![RoundReport {
            round: 0,
            positives,
            negatives: set.len() - positives,
            mined: 0,
        }],
    };

    for round in 1..=svm.bootstrap_rounds {
        if svm.max_mined == 0 {
            break;
        }
        let mined = mine_hard_negatives(seq, &frames, &model, &geometry, channels, svm)?;
        if mined.is_empty() {
            log::warn!("bootstrap round {round}: no hard negatives above {}", svm.mining_threshold);
            break;
        }
        let n = mined.len();
        for (key, values) in mined {
            let b = geometry.levels[key.level].to_bbox(key.gx, key.gy);
            set.push(values, -1, Some((key.frame, b)));
        }
        model = finish(train(&set, svm)?);
        report.rounds.push(RoundReport {
            round,
            positives,
            negatives: set.len() - positives,
            mined: n,
        });
    }
    Ok((model, report))
}

/// Scans `frames` and returns up to `svm.max_mined` windows scoring above
/// the mining threshold that do not overlap any annotation, best first.
pub(crate) fn mine_hard_negatives(
    seq: &ImageSequence,
    frames: &[usize],
    model: &LinearModel,
    geometry: &PyramidGeometry,
    channels: &ChannelConfig,
    svm: &SvmConfig,
) -> Result<Vec<(MinedKey, Vec<f64>)>> {
    let by_frame = seq.annotations_by_frame();
    let mut top: TopK<Vec<f64>> = TopK::new(svm.max_mined);
    let mut extractor = FeatureExtractor::new(channels.clone(), geometry.clone());
    for &f in frames {
        let prev = f.checked_sub(1).map(|p| &seq.frames[p]);
        let features = extractor.extract(&seq.frames[f], prev)?;
        let maps = score_frame(&features, model, geometry)?;
        for (map, g) in maps.iter().zip(&geometry.levels) {
            for gy in 0..g.rows {
                for gx in 0..g.cols {
                    let score = map.at(gx, gy);
                    if !(score > svm.mining_threshold) {
                        continue;
                    }
                    let key = MinedKey {
                        score,
                        frame: f,
                        level: g.level,
                        gy,
                        gx,
                    };
                    if !top.admits(&key) || overlaps_any(&g.to_bbox(gx, gy), &by_frame[f], svm.neg_max_iou) {
                        continue;
                    }
                    let ch = &features.levels[g.level];
                    let (cx, cy) = g.cell_of(gx, gy, ch.cell_size);
                    let mut values = vec![0.0; ch.descriptor_len()];
                    ch.write_descriptor_at(cx, cy, &mut values);
                    top.push(key, values);
                }
            }
        }
    }
    Ok(top.into_sorted())
}

/// Number of scanned windows scoring at or above `threshold` that overlap no
/// annotation at `max_iou` or more.
pub fn count_false_positives(
    seq: &ImageSequence,
    frames: &[usize],
    model: &LinearModel,
    det: &DetectorConfig,
    threshold: f64,
    max_iou: f64,
) -> Result<usize> {
    let channels = model.channels()?.clone();
    let first = seq.frames.first().ok_or(Error::EmptySequence)?;
    let geometry = PyramidGeometry::new(first.width(), first.height(), &channels, det)?;
    let by_frame = seq.annotations_by_frame();
    let mut extractor = FeatureExtractor::new(channels, geometry.clone());
    let mut count = 0;
    for &f in frames {
        let prev = f.checked_sub(1).map(|p| &seq.frames[p]);
        let features = extractor.extract(&seq.frames[f], prev)?;
        let maps = score_frame(&features, model, &geometry)?;
        for (map, g) in maps.iter().zip(&geometry.levels) {
            for gy in 0..g.rows {
                for gx in 0..g.cols {
                    if map.at(gx, gy) >= threshold && !overlaps_any(&g.to_bbox(gx, gy), &by_frame[f], max_iou) {
                        count += 1;
                    }
                }
            }
        }
    }
    Ok(count)
}
