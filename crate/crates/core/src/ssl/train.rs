use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detector::{
    candidate_descriptor, score_frame, threshold_candidates, Candidate, DetectorConfig, FeatureExtractor,
    FrameFeatures, PyramidGeometry, ScoreMapStore,
};
use crate::error::{Error, Result};
use crate::features::{compute_flow, dot, ChannelConfig, FlowField};
use crate::image::BBox;
use crate::linear_svm::{
    bootstrap_train_on, is_positive, labelled_frames, overlaps_any, train, BootstrapReport, LinearModel, MinedKey,
    ModelKind, ModelMeta, RoundReport, SvmConfig, TopK, TrainSet,
};
use crate::sequence_io::{Annotation, ImageSequence};

use super::{build_track, gather_neighbor_scores, make_fold_plan, FlowSource, GridAnchor, NeighborhoodSpec, VolumeMode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SslConfig {
    /// Number of folds used to produce held-out base scores.
    pub folds: usize,
    /// The best grid window of each annotation is also a positive if its
    /// overlap reaches this.
    pub best_min_iou: f64,
}

impl Default for SslConfig {
    fn default() -> Self {
        SslConfig {
            folds: 1,
            best_min_iou: 0.5,
        }
    }
}

impl SslConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds == 0 {
            return Err(Error::Config("folds must be >= 1".into()));
        }
        if !(self.best_min_iou > 0.0 && self.best_min_iou <= 1.0) {
            return Err(Error::Config("best_min_iou must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// One stacked training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSample {
    pub frame_index: usize,
    pub bbox: BBox,
    pub base_descriptor: Vec<f64>,
    pub neighbor_scores: Vec<f64>,
    pub label: i8,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SslReport {
    pub base: BootstrapReport,
    pub ssl: BootstrapReport,
    /// Frames of each fold, as scored by that fold's auxiliary classifier.
    pub fold_sizes: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SslModels {
    pub base: LinearModel,
    pub ssl: LinearModel,
    pub report: SslReport,
}

/// Trains the stage-1 base classifier on the whole sequence and the stacked
/// classifier on top of it.
pub fn train_ssl(
    seq: &ImageSequence,
    channels: &ChannelConfig,
    det: &DetectorConfig,
    svm: &SvmConfig,
    spec: &NeighborhoodSpec,
    cfg: &SslConfig,
) -> Result<SslModels> {
    let (base, base_report) = bootstrap_train_on(seq, &(0..seq.len()).collect::<Vec<_>>(), channels, det, svm)?;
    let (ssl, mut report) = train_ssl_from_base(seq, &base, det, svm, spec, cfg)?;
    report.base = base_report;
    Ok(SslModels { base, ssl, report })
}

/// Trains the stacked classifier for an already trained base classifier.
/// With one fold the base classifier itself provides the neighbourhood
/// scores; otherwise each fold is scored by a classifier trained on the
/// remaining folds.
pub fn train_ssl_from_base(
    seq: &ImageSequence,
    base: &LinearModel,
    det: &DetectorConfig,
    svm: &SvmConfig,
    spec: &NeighborhoodSpec,
    cfg: &SslConfig,
) -> Result<(LinearModel, SslReport)> {
    cfg.validate()?;
    spec.validate()?;
    svm.validate()?;
    let channels = base.channels()?.clone();
    base.check_layout(channels.layout_id())?;
    let first = seq.frames.first().ok_or(Error::EmptySequence)?;
    let geometry = PyramidGeometry::new(first.width(), first.height(), &channels, det)?;
    let plan = make_fold_plan(seq.len(), cfg.folds)?;

    let mut store = ScoreMapStore::unbounded();
    let mut fold_sizes = Vec::with_capacity(plan.k);
    for k in 0..plan.k {
        let frames = plan.frames_in(k);
        fold_sizes.push(frames.len());
        let aux_owned;
        let aux = if plan.k == 1 {
            base
        } else {
            aux_owned = bootstrap_train_on(seq, &plan.training_frames_for(k), &channels, det, svm)?.0;
            &aux_owned
        };
        let mut extractor = FeatureExtractor::new(channels.clone(), geometry.clone());
        for &f in &frames {
            let prev = f.checked_sub(1).map(|p| &seq.frames[p]);
            let features = extractor.extract(&seq.frames[f], prev)?;
            store.insert(f, score_frame(&features, aux, &geometry)?);
        }
    }

    let mut flows: BTreeMap<usize, FlowField> = BTreeMap::new();
    if spec.volume_mode == VolumeMode::OpticalFlow {
        for f in 1..seq.len() {
            flows.insert(
                f,
                compute_flow(&seq.frames[f - 1], &seq.frames[f], det.flow_block_size, det.flow_search_radius)?,
            );
        }
    }

    let ctx = Context {
        seq,
        channels: &channels,
        geometry: &geometry,
        store: &store,
        flows: &flows,
        spec,
        det,
        svm,
        frames: labelled_frames(&(0..seq.len()).collect::<Vec<_>>(), svm),
        by_frame: seq.annotations_by_frame(),
    };

    let samples = ctx.initial_samples(cfg)?;
    let layout = spec.layout_id(base.layout_id);
    let mut set = TrainSet::new(layout);
    for s in samples {
        let mut v = s.base_descriptor;
        v.extend_from_slice(&s.neighbor_scores);
        set.push(v, s.label, Some((s.frame_index, s.bbox)));
    }
    let positives = set.count(1);
    if positives == 0 {
        return Err(Error::NoPositives);
    }
    let meta = ModelMeta {
        channels: Some(channels.clone()),
        neighborhood: Some(*spec),
    };
    let finish = |mut m: LinearModel| {
        m.kind = ModelKind::Ssl;
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
        let mined = ctx.mine(&model)?;
        if mined.is_empty() {
            log::warn!("stacked bootstrap round {round}: nothing mined");
            break;
        }
        let n = mined.len();
        for (key, v) in mined {
            let b = geometry.levels[key.level].to_bbox(key.gx, key.gy);
            set.push(v, -1, Some((key.frame, b)));
        }
        model = finish(train(&set, svm)?);
        report.rounds.push(RoundReport {
            round,
            positives,
            negatives: set.len() - positives,
            mined: n,
        });
    }
    Ok((
        model,
        SslReport {
            base: BootstrapReport::default(),
            ssl: report,
            fold_sizes,
        },
    ))
}

struct Context<'a> {
    seq: &'a ImageSequence,
    channels: &'a ChannelConfig,
    geometry: &'a PyramidGeometry,
    store: &'a ScoreMapStore,
    flows: &'a BTreeMap<usize, FlowField>,
    spec: &'a NeighborhoodSpec,
    det: &'a DetectorConfig,
    svm: &'a SvmConfig,
    frames: Vec<usize>,
    by_frame: Vec<Vec<Annotation>>,
}

impl Context<'_> {
    fn features(&self, extractor: &mut FeatureExtractor, f: usize) -> Result<FrameFeatures> {
        let prev = f.checked_sub(1).map(|p| &self.seq.frames[p]);
        extractor.extract(&self.seq.frames[f], prev)
    }

    fn neighbor_scores(&self, c: &Candidate) -> Result<Vec<f64>> {
        let track = build_track(c.bbox, c.frame_index, self.spec, self.flows as &dyn FlowSource, self.seq.len());
        let mut out = Vec::with_capacity(self.spec.score_count());
        gather_neighbor_scores(
            &track,
            &c.anchor,
            self.spec,
            self.store,
            &self.geometry.levels[c.anchor.level],
            self.det.out_of_grid(),
            &mut out,
        )?;
        Ok(out)
    }

    fn candidates(&self, f: usize) -> Result<Vec<Candidate>> {
        let maps: Vec<_> = (0..self.geometry.levels.len())
            .map(|l| self.store.get(f, l).cloned())
            .collect::<Result<_>>()?;
        Ok(threshold_candidates(&maps, self.geometry, self.det.stage1_threshold))
    }

    fn sample(&self, features: &FrameFeatures, c: &Candidate, label: i8) -> Result<AugmentedSample> {
        Ok(AugmentedSample {
            frame_index: c.frame_index,
            bbox: c.bbox,
            base_descriptor: candidate_descriptor(features, self.geometry, c),
            neighbor_scores: self.neighbor_scores(c)?,
            label,
        })
    }

    /// Positives from grid windows around every usable annotation plus
    /// randomly drawn stage-1 candidates as negatives.
    fn initial_samples(&self, cfg: &SslConfig) -> Result<Vec<AugmentedSample>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.svm.seed ^ 0x7373_6c5f_6e65_67);
        let mut extractor = FeatureExtractor::new(self.channels.clone(), self.geometry.clone());
        let mut out = Vec::new();
        for &f in &self.frames {
            let features = self.features(&mut extractor, f)?;
            let gts: Vec<&Annotation> = self.by_frame[f].iter().filter(|a| is_positive(a)).collect();
            let mut best: Vec<Option<(f64, Candidate)>> = vec![None; gts.len()];
            for g in &self.geometry.levels {
                for gy in 0..g.rows {
                    for gx in 0..g.cols {
                        let bbox = g.to_bbox(gx, gy);
                        let c = Candidate {
                            frame_index: f,
                            anchor: GridAnchor { level: g.level, gx, gy },
                            bbox,
                            score: self.store.get(f, g.level)?.at(gx, gy),
                        };
                        let mut positive = false;
                        for (i, a) in gts.iter().enumerate() {
                            let iou = a.bbox.iou(&bbox);
                            positive |= iou >= self.svm.pos_min_iou;
                            if best[i].as_ref().is_none_or(|(b, _)| iou > *b) {
                                best[i] = Some((iou, c));
                            }
                        }
                        if positive {
                            out.push(self.sample(&features, &c, 1)?);
                        }
                    }
                }
            }
            for (iou, c) in best.into_iter().flatten() {
                if iou >= cfg.best_min_iou && iou < self.svm.pos_min_iou {
                    out.push(self.sample(&features, &c, 1)?);
                }
            }

            let mut pool: Vec<Candidate> = self
                .candidates(f)?
                .into_iter()
                .filter(|c| !overlaps_any(&c.bbox, &self.by_frame[f], self.svm.neg_max_iou))
                .collect();
            pool.shuffle(&mut rng);
            pool.truncate(self.svm.neg_per_frame);
            // too few candidates: top up with random grid windows
            let mut attempts = 0;
            while pool.len() < self.svm.neg_per_frame && attempts < 50 * self.svm.neg_per_frame {
                attempts += 1;
                let g = &self.geometry.levels[rng.gen_range(0..self.geometry.levels.len())];
                let (gx, gy) = (rng.gen_range(0..g.cols), rng.gen_range(0..g.rows));
                let c = Candidate {
                    frame_index: f,
                    anchor: GridAnchor { level: g.level, gx, gy },
                    bbox: g.to_bbox(gx, gy),
                    score: self.store.get(f, g.level)?.at(gx, gy),
                };
                if !overlaps_any(&c.bbox, &self.by_frame[f], self.svm.neg_max_iou) && !pool.contains(&c) {
                    pool.push(c);
                }
            }
            for c in &pool {
                out.push(self.sample(&features, c, -1)?);
            }
        }
        Ok(out)
    }

    /// Highest-scoring stage-1 candidates under `model` that overlap no
    /// annotation.
    fn mine(&self, model: &LinearModel) -> Result<Vec<(MinedKey, Vec<f64>)>> {
        let d = self.channels.descriptor_len();
        let (w_desc, w_nb) = model.weights.split_at(d);
        let mut top: TopK<Vec<f64>> = TopK::new(self.svm.max_mined);
        let mut extractor = FeatureExtractor::new(self.channels.clone(), self.geometry.clone());
        for &f in &self.frames {
            let features = self.features(&mut extractor, f)?;
            for c in self.candidates(f)? {
                if overlaps_any(&c.bbox, &self.by_frame[f], self.svm.neg_max_iou) {
                    continue;
                }
                let ch = &features.levels[c.anchor.level];
                let (cx, cy) = self.geometry.levels[c.anchor.level].cell_of(c.anchor.gx, c.anchor.gy, ch.cell_size);
                let nb = self.neighbor_scores(&c)?;
                let score = ch.dot_at(w_desc, cx, cy) + dot(w_nb, &nb) + model.bias;
                if !(score > self.svm.mining_threshold) {
                    continue;
                }
                let key = MinedKey {
                    score,
                    frame: f,
                    level: c.anchor.level,
                    gy: c.anchor.gy,
                    gx: c.anchor.gx,
                };
                if top.admits(&key) {
                    let mut v = candidate_descriptor(&features, self.geometry, &c);
                    v.extend_from_slice(&nb);
                    top.push(key, v);
                }
            }
        }
        Ok(top.into_sorted())
    }
}
