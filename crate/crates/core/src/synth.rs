//! Seeded synthetic sequences: textured pedestrian-like silhouettes that
//! move smoothly over a cluttered background, plus short-lived look-alike
//! distractors that never move.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{BBox, Frame};
use crate::sequence_io::{Annotation, ImageSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Texture {
    BarPattern,
    Checker,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    /// Targets present at any time.
    pub n_targets: usize,
    pub min_height: usize,
    pub max_height: usize,
    /// Target width over height.
    pub aspect: f64,
    /// Horizontal speed range in pixels per frame.
    pub min_speed: f64,
    pub max_speed: f64,
    /// Largest vertical speed in pixels per frame.
    pub max_vertical_speed: f64,
    /// Per-frame uniform position jitter amplitude in pixels.
    pub jitter: f64,
    /// Frames a target lives before respawning elsewhere (inclusive range).
    pub min_lifetime: usize,
    pub max_lifetime: usize,
    pub texture: Texture,
    /// Grey-level amplitude of the target texture.
    pub contrast: f64,
    /// Standard deviation of per-frame pixel noise.
    pub noise_sigma: f64,
    /// Static background rectangles and their grey-level amplitude.
    pub clutter: usize,
    pub clutter_contrast: f64,
    /// Distractors present at any time.
    pub distractors: usize,
    /// Frames a distractor stays in place before vanishing.
    pub distractor_lifetime: usize,
    /// Distractor width over height range.
    pub distractor_min_aspect: f64,
    pub distractor_max_aspect: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            frames: 100,
            width: 320,
            height: 240,
            fps: 30.0,
            n_targets: 3,
            min_height: 48,
            max_height: 120,
            aspect: 0.5,
            min_speed: 2.0,
            max_speed: 4.0,
            max_vertical_speed: 0.5,
            jitter: 0.5,
            min_lifetime: 60,
            max_lifetime: 180,
            texture: Texture::Checker,
            contrast: 40.0,
            noise_sigma: 12.0,
            clutter: 30,
            clutter_contrast: 25.0,
            distractors: 2,
            distractor_lifetime: 1,
            distractor_min_aspect: 0.35,
            distractor_max_aspect: 0.8,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.frames == 0 || self.width == 0 || self.height == 0 {
            return bad("frames, width and height must be positive".into());
        }
        if !(self.fps > 0.0) {
            return bad(format!("fps {} must be positive", self.fps));
        }
        if self.min_height == 0 || self.min_height > self.max_height {
            return bad("need 0 < min_height <= max_height".into());
        }
        if !(self.aspect > 0.0) || !(self.distractor_min_aspect > 0.0) || self.distractor_min_aspect > self.distractor_max_aspect {
            return bad("aspect ratios must be positive and ordered".into());
        }
        if !(self.min_speed >= 0.0 && self.min_speed <= self.max_speed && self.max_vertical_speed >= 0.0 && self.jitter >= 0.0)
        {
            return bad("speeds and jitter must be non-negative and ordered".into());
        }
        if self.min_lifetime == 0 || self.min_lifetime > self.max_lifetime || self.distractor_lifetime == 0 {
            return bad("lifetimes must be positive and ordered".into());
        }
        if !(self.noise_sigma >= 0.0 && self.contrast >= 0.0 && self.clutter_contrast >= 0.0) {
            return bad("noise and contrast must be non-negative".into());
        }
        let tw = target_width(self.max_height, self.aspect);
        let dw = target_width(self.max_height, self.distractor_max_aspect);
        if self.max_height > self.height || tw.max(dw) > self.width {
            return Err(Error::InvalidArgument(format!(
                "targets up to {}x{} do not fit a {}x{} frame",
                tw.max(dw),
                self.max_height,
                self.width,
                self.height
            )));
        }
        Ok(())
    }
}

fn target_width(h: usize, aspect: f64) -> usize {
    ((h as f64 * aspect).round() as usize).max(1)
}

#[derive(Debug, Clone)]
struct Target {
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    w: usize,
    h: usize,
    look: Look,
    frames_left: usize,
}

/// Texture phase and whether the body is brighter (+1) or darker (-1)
/// than the background.
#[derive(Debug, Clone, Copy)]
struct Look {
    phase: f64,
    polarity: f64,
}

#[derive(Debug, Clone)]
struct Patch {
    bbox: BBox,
    look: Look,
    frames_left: usize,
}

struct Scene<'a> {
    cfg: &'a SynthConfig,
    rng: ChaCha8Rng,
    targets: Vec<Option<Target>>,
    distractors: Vec<Option<Patch>>,
}

fn texture_value(tex: Texture, lx: f64, ly: f64, h: f64, phase: f64) -> f64 {
    let period = (h / 6.0).max(4.0);
    let stripe = |t: f64| if (t / period + phase).rem_euclid(1.0) < 0.5 { 1.0 } else { -1.0 };
    match tex {
        Texture::BarPattern => stripe(ly),
        Texture::Checker => stripe(ly) * stripe(lx),
    }
}

fn separated(a: &BBox, b: &BBox, margin: i32) -> bool {
    a.right() + margin <= b.x || b.right() + margin <= a.x || a.bottom() + margin <= b.y || b.bottom() + margin <= a.y
}

impl Target {
    fn bbox(&self) -> BBox {
        BBox::new(self.x.round() as i32, self.y.round() as i32, self.w as i32, self.h as i32)
    }
}

impl<'a> Scene<'a> {
    fn new(cfg: &'a SynthConfig) -> Self {
        Scene {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            targets: vec![None; cfg.n_targets],
            distractors: vec![None; cfg.distractors],
        }
    }

    fn look(&mut self) -> Look {
        Look {
            phase: self.rng.gen_range(0.0..1.0),
            polarity: if self.rng.gen_bool(0.5) { 1.0 } else { -1.0 },
        }
    }

    fn live_boxes(&self, skip: Option<usize>) -> Vec<BBox> {
        self.targets
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != skip)
            .filter_map(|(_, t)| t.as_ref().map(Target::bbox))
            .collect()
    }

    fn spawn_target(&mut self, slot: usize) -> Option<Target> {
        let c = self.cfg;
        let others = self.live_boxes(Some(slot));
        for _ in 0..50 {
            let h = self.rng.gen_range(c.min_height..=c.max_height);
            let w = target_width(h, c.aspect);
            let x = self.rng.gen_range(0..=c.width - w) as f64;
            let y = self.rng.gen_range(0..=c.height - h) as f64;
            let speed = self.rng.gen_range(c.min_speed..=c.max_speed);
            let vx = if self.rng.gen_bool(0.5) { speed } else { -speed };
            let vy = if c.max_vertical_speed > 0.0 {
                self.rng.gen_range(-c.max_vertical_speed..=c.max_vertical_speed)
            } else {
                0.0
            };
            let t = Target {
                x,
                y,
                vx,
                vy,
                w,
                h,
                look: self.look(),
                frames_left: self.rng.gen_range(c.min_lifetime..=c.max_lifetime),
            };
            if others.iter().all(|o| separated(o, &t.bbox(), 2)) {
                return Some(t);
            }
        }
        None
    }

    fn step_targets(&mut self) {
        let c = self.cfg;
        for i in 0..self.targets.len() {
            let alive = match &mut self.targets[i] {
                Some(t) if t.frames_left > 1 => {
                    t.frames_left -= 1;
                    true
                }
                _ => false,
            };
            if !alive {
                self.targets[i] = self.spawn_target(i);
                continue;
            }
            let others = self.live_boxes(Some(i));
            let jx = if c.jitter > 0.0 { self.rng.gen_range(-c.jitter..=c.jitter) } else { 0.0 };
            let jy = if c.jitter > 0.0 { self.rng.gen_range(-c.jitter..=c.jitter) } else { 0.0 };
            let t = self.targets[i].as_mut().unwrap();
            let max_x = (c.width - t.w) as f64;
            let max_y = (c.height - t.h) as f64;
            let mut nx = t.x + t.vx + jx;
            let mut ny = t.y + t.vy + jy;
            if nx < 0.0 || nx > max_x {
                t.vx = -t.vx;
                nx = nx.clamp(0.0, max_x);
            }
            if ny < 0.0 || ny > max_y {
                t.vy = -t.vy;
                ny = ny.clamp(0.0, max_y);
            }
            let moved = Target { x: nx, y: ny, ..t.clone() };
            if others.iter().all(|o| separated(o, &moved.bbox(), 2)) {
                t.x = nx;
                t.y = ny;
            } else {
                t.vx = -t.vx;
                t.vy = -t.vy;
            }
        }
    }

    fn step_distractors(&mut self) {
        let c = self.cfg;
        let targets = self.live_boxes(None);
        for i in 0..self.distractors.len() {
            if let Some(d) = &mut self.distractors[i] {
                if d.frames_left > 1 {
                    d.frames_left -= 1;
                    continue;
                }
            }
            self.distractors[i] = None;
            for _ in 0..50 {
                let h = self.rng.gen_range(c.min_height..=c.max_height);
                let aspect = self.rng.gen_range(c.distractor_min_aspect..=c.distractor_max_aspect);
                let w = target_width(h, aspect);
                if w > c.width {
                    continue;
                }
                let b = BBox::new(
                    self.rng.gen_range(0..=c.width - w) as i32,
                    self.rng.gen_range(0..=c.height - h) as i32,
                    w as i32,
                    h as i32,
                );
                if targets.iter().all(|t| separated(t, &b, 2)) {
                    self.distractors[i] = Some(Patch {
                        bbox: b,
                        look: self.look(),
                        frames_left: c.distractor_lifetime,
                    });
                    break;
                }
            }
        }
    }
}

fn render_background(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (w, h) = (cfg.width, cfg.height);
    let mut bg = vec![128.0; w * h];
    for _ in 0..cfg.clutter {
        let rw = rng.gen_range(4..=w.clamp(4, 80));
        let rh = rng.gen_range(4..=h.clamp(4, 80));
        let x0 = rng.gen_range(0..w);
        let y0 = rng.gen_range(0..h);
        let level = rng.gen_range(-cfg.clutter_contrast..=cfg.clutter_contrast);
        for y in y0..(y0 + rh).min(h) {
            for x in x0..(x0 + rw).min(w) {
                bg[y * w + x] += level;
            }
        }
    }
    bg
}

/// Whether local pixel `(lx, ly)` of a `w`x`h` box belongs to the
/// silhouette: a centred head, a full-width torso and two legs. The
/// silhouette touches all four box edges.
fn in_silhouette(lx: i32, ly: i32, w: i32, h: i32) -> bool {
    let head_end = (h as f64 * 0.18).round() as i32;
    let legs_start = (h as f64 * 0.6).round() as i32;
    if ly < head_end {
        let hw = ((w as f64 * 0.4).round() as i32).max(1);
        let x0 = (w - hw) / 2;
        lx >= x0 && lx < x0 + hw
    } else if ly < legs_start {
        true
    } else {
        let leg = ((w as f64 * 0.35).round() as i32).max(1);
        lx < leg || lx >= w - leg
    }
}

fn paint(canvas: &mut [f64], width: usize, b: &BBox, cfg: &SynthConfig, look: &Look) {
    for y in b.y.max(0)..b.bottom() {
        for x in b.x.max(0)..b.right() {
            let (lx, ly) = (x - b.x, y - b.y);
            if !in_silhouette(lx, ly, b.w, b.h) {
                continue;
            }
            let v = texture_value(cfg.texture, lx as f64, ly as f64, b.h as f64, look.phase);
            canvas[y as usize * width + x as usize] = 128.0 + cfg.contrast * (look.polarity + 0.5 * v);
        }
    }
}

/// Renders the sequence described by `cfg`. The same config always yields
/// bit-identical frames and annotations.
pub fn generate(cfg: &SynthConfig) -> Result<ImageSequence> {
    cfg.validate()?;
    let mut scene = Scene::new(cfg);
    let mut bg_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let background = render_background(cfg, &mut bg_rng);
    let noise = if cfg.noise_sigma > 0.0 {
        Some(Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::Config(e.to_string()))?)
    } else {
        None
    };
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x6a09_e667_f3bc_c909));

    for slot in 0..cfg.n_targets {
        scene.targets[slot] = scene.spawn_target(slot);
    }
    let mut frames = Vec::with_capacity(cfg.frames);
    let mut annotations = Vec::new();
    for f in 0..cfg.frames {
        if f > 0 {
            scene.step_targets();
        }
        scene.step_distractors();
        let mut canvas = background.clone();
        for d in scene.distractors.iter().flatten() {
            paint(&mut canvas, cfg.width, &d.bbox, cfg, &d.look);
        }
        for t in scene.targets.iter().flatten() {
            let b = t.bbox();
            paint(&mut canvas, cfg.width, &b, cfg, &t.look);
            annotations.push(Annotation::pedestrian(f, b));
        }
        let mut i = 0;
        let frame = Frame::from_fn(f, cfg.width, cfg.height, |_, _| {
            let n = noise.as_ref().map_or(0.0, |d| d.sample(&mut noise_rng));
            let v = canvas[i] + n;
            i += 1;
            v.round().clamp(0.0, 255.0) as u8
        })?;
        frames.push(frame);
    }
    ImageSequence::new(frames, annotations, cfg.fps)
}

/// A training and a test sequence cut from one rendered sequence,
/// separated by `gap` unused frames.
pub fn generate_splits(
    cfg: &SynthConfig,
    train_frames: usize,
    gap: usize,
    test_frames: usize,
) -> Result<(ImageSequence, ImageSequence)> {
    if train_frames == 0 || test_frames == 0 {
        return Err(Error::InvalidArgument("splits need at least one frame each".into()));
    }
    let full = generate(&SynthConfig {
        frames: train_frames + gap + test_frames,
        ..cfg.clone()
    })?;
    let train = full.slice(0, train_frames)?;
    let test = full.slice(train_frames + gap, train_frames + gap + test_frames)?;
    Ok((train, test))
}
