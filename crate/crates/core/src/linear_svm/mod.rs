//! Linear max-margin classifiers trained with a Pegasos-style stochastic
//! subgradient solver, plus hard-negative bootstrapping.

mod bootstrap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{dot, ChannelConfig, Descriptor};
use crate::image::BBox;
use crate::ssl::NeighborhoodSpec;

pub use bootstrap::{
    bootstrap_train, bootstrap_train_on, count_false_positives, labelled_frames, BootstrapReport, RoundReport,
};
pub(crate) use bootstrap::{is_positive, overlaps_any, MinedKey, TopK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Base,
    Ssl,
}

/// Layout information stored alongside the weights so a model can only be
/// applied to descriptors built the same way.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub channels: Option<ChannelConfig>,
    pub neighborhood: Option<NeighborhoodSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub layout_id: u64,
    pub kind: ModelKind,
    pub meta: ModelMeta,
}

impl LinearModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// `w . values + bias`, with no layout check.
    #[inline]
    pub fn score_values(&self, values: &[f64]) -> f64 {
        dot(&self.weights, values) + self.bias
    }

    pub fn check_layout(&self, layout_id: u64) -> Result<()> {
        if layout_id != self.layout_id {
            return Err(Error::LayoutMismatch {
                expected: self.layout_id,
                found: layout_id,
            });
        }
        Ok(())
    }

    pub fn channels(&self) -> Result<&ChannelConfig> {
        self.meta
            .channels
            .as_ref()
            .ok_or_else(|| Error::ModelFormat("model carries no channel configuration".into()))
    }
}

pub fn score(model: &LinearModel, d: &Descriptor) -> Result<f64> {
    model.check_layout(d.layout_id)?;
    if d.values.len() != model.weights.len() {
        return Err(Error::InvalidArgument(format!(
            "descriptor has {} values, model {}",
            d.values.len(),
            model.weights.len()
        )));
    }
    Ok(model.score_values(&d.values))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Random negatives per labelled frame in the initial round.
    pub neg_per_frame: usize,
    /// Cap on hard negatives harvested per bootstrap round.
    pub max_mined: usize,
    /// Only windows scoring strictly above this are harvested.
    pub mining_threshold: f64,
    pub bootstrap_rounds: usize,
    /// Value of the constant feature that carries the bias.
    pub bias_scale: f64,
    /// Scanned windows overlapping an annotation at least this much are
    /// used as extra positives.
    pub pos_min_iou: f64,
    /// Negatives may not overlap a labelled object with IoU at or above this.
    pub neg_max_iou: f64,
    /// Only frames whose index is a multiple of this contribute samples.
    pub label_every: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            lambda: 1e-4,
            epochs: 30,
            seed: 0,
            neg_per_frame: 60,
            max_mined: 10000,
            mining_threshold: -1.0,
            bootstrap_rounds: 3,
            bias_scale: 1.0,
            pos_min_iou: 0.6,
            neg_max_iou: 0.3,
            label_every: 1,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.label_every == 0 {
            return Err(Error::Config("label_every must be >= 1".into()));
        }
        if !(self.pos_min_iou > 0.0 && self.pos_min_iou <= 1.0 && self.neg_max_iou > 0.0 && self.neg_max_iou <= 1.0) {
            return Err(Error::Config("pos_min_iou and neg_max_iou must be in (0, 1]".into()));
        }
        if !(self.bias_scale > 0.0) {
            return Err(Error::Config("bias_scale must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub values: Vec<f64>,
    /// +1 or -1.
    pub label: i8,
    pub provenance: Option<(usize, BBox)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSet {
    pub layout_id: u64,
    pub samples: Vec<Sample>,
}

impl TrainSet {
    pub fn new(layout_id: u64) -> Self {
        TrainSet {
            layout_id,
            samples: Vec::new(),
        }
    }

    pub fn from_points(points: &[(Vec<f64>, i8)]) -> Self {
        TrainSet {
            layout_id: 0,
            samples: points
                .iter()
                .map(|(v, y)| Sample {
                    values: v.clone(),
                    label: *y,
                    provenance: None,
                })
                .collect(),
        }
    }

    pub fn push(&mut self, values: Vec<f64>, label: i8, provenance: Option<(usize, BBox)>) {
        self.samples.push(Sample {
            values,
            label,
            provenance,
        });
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn count(&self, label: i8) -> usize {
        self.samples.iter().filter(|s| s.label == label).count()
    }

    fn validate(&self) -> Result<usize> {
        let dim = self
            .samples
            .first()
            .map(|s| s.values.len())
            .ok_or_else(|| Error::DegenerateTrainSet("no samples".into()))?;
        if dim == 0 {
            return Err(Error::DegenerateTrainSet("zero-length descriptors".into()));
        }
        let (mut pos, mut neg) = (0, 0);
        for (i, s) in self.samples.iter().enumerate() {
            if s.values.len() != dim {
                return Err(Error::DegenerateTrainSet(format!(
                    "sample {i} has {} values, expected {dim}",
                    s.values.len()
                )));
            }
            match s.label {
                1 => pos += 1,
                -1 => neg += 1,
                l => return Err(Error::DegenerateTrainSet(format!("label {l} is not +-1"))),
            }
            if s.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("descriptor of sample {i}")));
            }
        }
        if pos == 0 || neg == 0 {
            return Err(Error::DegenerateTrainSet(format!(
                "need both classes, got {pos} positive and {neg} negative"
            )));
        }
        Ok(dim)
    }
}

/// `lambda/2 |(w, b/bias_scale)|^2 + mean hinge`, the quantity the solver
/// minimises. The bias is carried by a constant feature, so it is
/// regularised like any other weight.
pub fn objective(set: &TrainSet, weights: &[f64], bias: f64, cfg: &SvmConfig) -> f64 {
    let wb = bias / cfg.bias_scale;
    let reg = 0.5 * cfg.lambda * (weights.iter().map(|w| w * w).sum::<f64>() + wb * wb);
    let hinge: f64 = set
        .samples
        .iter()
        .map(|s| {
            let m = s.label as f64 * (dot(weights, &s.values) + bias);
            (1.0 - m).max(0.0)
        })
        .sum();
    reg + hinge / set.len() as f64
}

/// A subgradient of [`objective`] at `(weights, bias)`. Samples exactly on
/// the margin contribute nothing.
pub fn subgradient(set: &TrainSet, weights: &[f64], bias: f64, cfg: &SvmConfig) -> (Vec<f64>, f64) {
    let n = set.len() as f64;
    let mut gw: Vec<f64> = weights.iter().map(|w| cfg.lambda * w).collect();
    let mut gb = cfg.lambda * bias / (cfg.bias_scale * cfg.bias_scale);
    for s in &set.samples {
        let y = s.label as f64;
        if y * (dot(weights, &s.values) + bias) < 1.0 {
            for (g, x) in gw.iter_mut().zip(&s.values) {
                *g -= y * x / n;
            }
            gb -= y / n;
        }
    }
    (gw, gb)
}

/// Per-epoch trace of the solver, for diagnostics and tests.
#[derive(Debug, Clone, Default)]
pub struct TrainTrace {
    pub objective_per_epoch: Vec<f64>,
}

pub fn train(set: &TrainSet, cfg: &SvmConfig) -> Result<LinearModel> {
    train_traced(set, cfg, None)
}

pub fn train_traced(
    set: &TrainSet,
    cfg: &SvmConfig,
    mut trace: Option<&mut TrainTrace>,
) -> Result<LinearModel> {
    cfg.validate()?;
    let dim = set.validate()?;
    let n = set.len();
    let lambda = cfg.lambda;
    let bscale = cfg.bias_scale;
    let radius2 = 1.0 / lambda;

    // w = scale * v, with v[dim] the bias weight on the constant feature
    let mut v = vec![0.0; dim + 1];
    let mut scale = 1.0f64;
    let mut v_norm2 = 0.0f64;
    let norms: Vec<f64> = set
        .samples
        .iter()
        .map(|s| s.values.iter().map(|x| x * x).sum::<f64>() + bscale * bscale)
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut t: u64 = 0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let s = &set.samples[i];
            let y = s.label as f64;
            let vx = dot(&v[..dim], &s.values) + v[dim] * bscale;
            let margin = y * scale * vx;

            let shrink = 1.0 - eta * lambda;
            if shrink <= 0.0 {
                v.iter_mut().for_each(|x| *x = 0.0);
                v_norm2 = 0.0;
                scale = 1.0;
            } else {
                scale *= shrink;
            }
            if margin < 1.0 {
                let a = eta * y / scale;
                let vx_now = if shrink <= 0.0 { 0.0 } else { vx };
                for (vj, xj) in v[..dim].iter_mut().zip(&s.values) {
                    *vj += a * xj;
                }
                v[dim] += a * bscale;
                v_norm2 += 2.0 * a * vx_now + a * a * norms[i];
            }
            // project onto the ball of radius 1/sqrt(lambda)
            let w_norm2 = scale * scale * v_norm2;
            if w_norm2 > radius2 {
                scale *= (radius2 / w_norm2).sqrt();
            }
            if scale < 1e-9 {
                v.iter_mut().for_each(|x| *x *= scale);
                v_norm2 *= scale * scale;
                scale = 1.0;
            }
        }
        if let Some(trace) = trace.as_deref_mut() {
            let w: Vec<f64> = v[..dim].iter().map(|x| x * scale).collect();
            trace
                .objective_per_epoch
                .push(objective(set, &w, v[dim] * scale * bscale, cfg));
        }
    }

    let weights: Vec<f64> = v[..dim].iter().map(|x| x * scale).collect();
    let bias = v[dim] * scale * bscale;
    if weights.iter().any(|w| !w.is_finite()) || !bias.is_finite() {
        return Err(Error::NonFinite("trained weights".into()));
    }
    Ok(LinearModel {
        weights,
        bias,
        layout_id: set.layout_id,
        kind: ModelKind::Base,
        meta: ModelMeta::default(),
    })
}
