//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Criteria 1-4 and 10 share one synthetic benchmark: three seeds, 600
//! training and 300 test frames at 320x240 and 30 fps.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ssldet::config::RunConfig;
use ssldet::detector::{augmented_vector, detect_sequence, nms, Candidate, Detection, PyramidGeometry, ScoreMap, ScoreMapStore, Stage};
use ssldet::evaluation::{curve, evaluate, CurvePoint, EvalConfig, Subset};
use ssldet::features::{compute_flow, FlowField};
use ssldet::image::{BBox, Frame};
use ssldet::linear_svm::{bootstrap_train, objective, subgradient, train, LinearModel, SvmConfig, TrainSet};
use ssldet::sequence_io::{subsample_fps, Annotation, ImageSequence, Label};
use ssldet::ssl::{train_ssl_from_base, GridAnchor, NeighborhoodSpec, Reading, TemporalStyle, VolumeMode};
use ssldet::Error;

const SEEDS: [u64; 3] = [0, 1, 2];
const SUBSETS: [Subset; 3] = [Subset::Reasonable, Subset::Near, Subset::Medium];
const RUNTIME_BUDGET: Duration = Duration::from_secs(20 * 60);

type Verdict = Result<String, String>;

fn report(results: &mut Vec<bool>, id: usize, name: &str, v: Verdict) {
    let (ok, detail) = match v {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    println!("criterion {id:>2} {:<4} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    results.push(ok);
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- 5

fn det(frame_index: usize, bbox: BBox, score: f64) -> Detection {
    Detection {
        frame_index,
        bbox,
        score,
        stage: Stage::Final,
    }
}

fn rand_box(rng: &mut ChaCha8Rng) -> BBox {
    // coarse coordinates so overlaps and exact ties are common
    let h = 10 * rng.gen_range(3..9);
    BBox::new(5 * rng.gen_range(0..12), 5 * rng.gen_range(0..6), h / 2, h)
}

/// Exhaustive evaluator: for every candidate threshold, keep detections at
/// or above it, match each frame from scratch and count.
fn brute_force_curve(dets: &[Detection], anns: &[Annotation], n_frames: usize, cfg: &EvalConfig) -> Vec<CurvePoint> {
    let (lo, hi) = cfg.subset.height_band();
    let keep_det = |b: &BBox| {
        let h = b.h as f64;
        h >= lo * (1.0 - cfg.height_margin) && h <= hi * (1.0 + cfg.height_margin)
    };
    let is_gt = |a: &Annotation| a.label == Label::Pedestrian && !a.occluded && a.bbox.h as f64 >= lo && (a.bbox.h as f64) < hi;
    let n_gt = anns.iter().filter(|a| is_gt(a)).count();
    let mut thresholds: Vec<f64> = dets.iter().filter(|d| keep_det(&d.bbox)).map(|d| d.score).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut out = Vec::new();
    for &t in &thresholds {
        let (mut tp, mut fp) = (0, 0);
        for f in 0..n_frames {
            let mut fd: Vec<&Detection> = dets
                .iter()
                .filter(|d| d.frame_index == f && d.score >= t && keep_det(&d.bbox))
                .collect();
            fd.sort_by(|a, b| {
                b.score
                    .total_cmp(&a.score)
                    .then((a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h).cmp(&(b.bbox.x, b.bbox.y, b.bbox.w, b.bbox.h)))
            });
            let gts: Vec<BBox> = anns.iter().filter(|a| a.frame_index == f && is_gt(a)).map(|a| a.bbox).collect();
            let ign: Vec<BBox> = anns.iter().filter(|a| a.frame_index == f && !is_gt(a)).map(|a| a.bbox).collect();
            let mut used = vec![false; gts.len()];
            for d in fd {
                let mut best: Option<usize> = None;
                for g in 0..gts.len() {
                    let o = d.bbox.iou(&gts[g]);
                    if !used[g] && o >= cfg.iou_match && best.map_or(true, |b| o > d.bbox.iou(&gts[b])) {
                        best = Some(g);
                    }
                }
                match best {
                    Some(g) => {
                        used[g] = true;
                        tp += 1;
                    }
                    None if ign.iter().any(|r| d.bbox.iou(r) >= cfg.iou_match) => {}
                    None => fp += 1,
                }
            }
        }
        out.push(CurvePoint {
            threshold: t,
            fppi: fp as f64 / n_frames as f64,
            miss_rate: (n_gt - tp) as f64 / n_gt as f64,
            tp,
            fp,
        });
    }
    out
}

fn criterion_5() -> Verdict {
    let cfg = EvalConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut scenes = 0;
    let mut points = 0;
    while scenes < 200 {
        let n_frames = rng.gen_range(1..=4);
        let mut dets = Vec::new();
        let mut anns = Vec::new();
        for f in 0..n_frames {
            for _ in 0..rng.gen_range(0..=5) {
                let score = rng.gen_range(0..6) as f64 * 0.25 - 0.5;
                dets.push(det(f, rand_box(&mut rng), score));
            }
            for _ in 0..rng.gen_range(0..=3) {
                let mut a = Annotation::pedestrian(f, rand_box(&mut rng));
                a.occluded = rng.gen_bool(0.1);
                anns.push(a);
            }
            if rng.gen_bool(0.2) {
                anns.push(Annotation {
                    label: Label::Ignore,
                    ..Annotation::pedestrian(f, rand_box(&mut rng))
                });
            }
        }
        let frames: Vec<usize> = (0..n_frames).collect();
        let got = curve(&dets, &anns, &frames, &cfg);
        let has_gt = anns
            .iter()
            .any(|a| a.label == Label::Pedestrian && !a.occluded && cfg.subset.contains_height(a.bbox.h));
        if !has_gt {
            if !matches!(got, Err(Error::EmptyGroundTruth)) {
                return Err(format!("scene {scenes}: expected EmptyGroundTruth, got {got:?}"));
            }
            continue;
        }
        let got = got.map_err(|e| format!("scene {scenes}: {e}"))?;
        let want = brute_force_curve(&dets, &anns, n_frames, &cfg);
        // the curve lists thresholds where a counted detection enters; as a
        // step function it must agree with the sweep at every threshold
        for w in &want {
            let at = got.iter().rev().find(|g| g.threshold >= w.threshold);
            let (tp, fp) = at.map_or((0, 0), |g| (g.tp, g.fp));
            if (tp, fp) != (w.tp, w.fp) {
                return Err(format!("scene {scenes}: at {} curve has tp {tp} fp {fp}, brute force {w:?}", w.threshold));
            }
        }
        for g in &got {
            let w = want
                .iter()
                .find(|w| w.threshold == g.threshold)
                .ok_or_else(|| format!("scene {scenes}: curve threshold {} is not a detection score", g.threshold))?;
            let same = g.tp == w.tp
                && g.fp == w.fp
                && (g.fppi - w.fppi).abs() <= 1e-12
                && (g.miss_rate - w.miss_rate).abs() <= 1e-12;
            if !same {
                return Err(format!("scene {scenes}: {g:?} vs brute force {w:?}"));
            }
        }
        points += got.len();
        scenes += 1;
    }
    Ok(format!("{scenes} scenes, {points} curve points identical to exhaustive evaluation"))
}

// ---------------------------------------------------------------- 6

/// Textbook formulation: take the best remaining box, drop everything that
/// overlaps it at the threshold or more, repeat.
fn reference_nms(dets: &[Detection], thr: f64) -> Vec<Detection> {
    let mut rest = dets.to_vec();
    let mut kept = Vec::new();
    while !rest.is_empty() {
        let mut best = 0;
        for i in 1..rest.len() {
            let (a, b) = (&rest[i], &rest[best]);
            let better = a.score > b.score
                || (a.score == b.score && (a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h) < (b.bbox.x, b.bbox.y, b.bbox.w, b.bbox.h));
            if better {
                best = i;
            }
        }
        let top = rest.swap_remove(best);
        rest.retain(|d| d.bbox.iou(&top.bbox) < thr);
        kept.push(top);
    }
    kept
}

fn criterion_6() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..1000 {
        let n = rng.gen_range(0..=20);
        let thr = [0.3, 0.5, 0.7][case % 3];
        let dets: Vec<Detection> = (0..n)
            .map(|_| {
                let b = BBox::new(rng.gen_range(0..40), rng.gen_range(0..40), rng.gen_range(4..30), rng.gen_range(4..30));
                det(0, b, rng.gen_range(0..8) as f64 / 4.0)
            })
            .collect();
        let got = nms(&dets, thr);
        let want = reference_nms(&dets, thr);
        if got != want {
            return Err(format!("case {case}: {} kept vs {} by the reference", got.len(), want.len()));
        }
        if nms(&got, thr) != got {
            return Err(format!("case {case}: not idempotent"));
        }
        for (i, a) in got.iter().enumerate() {
            for b in &got[i + 1..] {
                if a.bbox.iou(&b.bbox) >= thr {
                    return Err(format!("case {case}: kept boxes overlap at {}", a.bbox.iou(&b.bbox)));
                }
            }
        }
    }
    Ok("1000 random sets match the reference; idempotent; kept boxes pairwise below threshold".into())
}

// ---------------------------------------------------------------- 7

fn separable_set(rng: &mut ChaCha8Rng, n: usize) -> TrainSet {
    let dir: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let (nx, ny) = (dir.cos(), dir.sin());
    let offset: f64 = rng.gen_range(-0.5..0.5);
    let mut pts = Vec::with_capacity(n);
    while pts.len() < n {
        let p = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let s = p[0] * nx + p[1] * ny - offset;
        if s.abs() < 0.1 {
            continue;
        }
        // make sure both classes appear
        let label = if pts.len() == 0 { 1 } else if pts.len() == 1 { -1 } else if s > 0.0 { 1 } else { -1 };
        let p = if (label as f64) * s < 0.0 { [p[0] - 2.0 * s * nx, p[1] - 2.0 * s * ny] } else { p };
        pts.push((p.to_vec(), label));
    }
    TrainSet::from_points(&pts)
}

fn criterion_7() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = SvmConfig {
        lambda: 1e-4,
        epochs: 500,
        ..Default::default()
    };
    let sets = 20;
    for k in 0..sets {
        let set = separable_set(&mut rng, 60);
        let m = train(&set, &cfg).map_err(|e| e.to_string())?;
        let wrong = set
            .samples
            .iter()
            .filter(|s| (s.label as f64) * m.score_values(&s.values) <= 0.0)
            .count();
        if wrong > 0 {
            return Err(format!("set {k}: {wrong} of {} training points misclassified", set.len()));
        }
    }

    // finite differences of the objective against the subgradient, away
    // from the hinge kinks
    let set = {
        let mut pts = Vec::new();
        for _ in 0..40 {
            let v: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            pts.push((v, if rng.gen_bool(0.5) { 1 } else { -1 }));
        }
        TrainSet::from_points(&pts)
    };
    let fd_cfg = SvmConfig {
        lambda: 0.05,
        bias_scale: 1.5,
        ..Default::default()
    };
    let h = 1e-6;
    let mut checked = 0;
    let mut worst = 0.0f64;
    while checked < 100 {
        let w: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let b: f64 = rng.gen_range(-1.0..1.0);
        let near_kink = set.samples.iter().any(|s| {
            let m = s.label as f64 * (s.values.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() + b);
            (m - 1.0).abs() < 1e-3
        });
        if near_kink {
            continue;
        }
        let (gw, gb) = subgradient(&set, &w, b, &fd_cfg);
        let mut grad = gw.clone();
        grad.push(gb);
        for j in 0..=5 {
            let bump = |d: f64| {
                let mut w2 = w.clone();
                let mut b2 = b;
                if j < 5 {
                    w2[j] += d;
                } else {
                    b2 += d;
                }
                objective(&set, &w2, b2, &fd_cfg)
            };
            let fd = (bump(h) - bump(-h)) / (2.0 * h);
            let rel = (fd - grad[j]).abs() / grad[j].abs().max(fd.abs()).max(1e-8);
            worst = worst.max(rel);
            if rel > 1e-4 {
                return Err(format!("point {checked}, coordinate {j}: analytic {} vs numeric {fd}", grad[j]));
            }
        }
        checked += 1;
    }

    let set = separable_set(&mut rng, 200);
    let a = train(&set, &SvmConfig { seed: 99, ..cfg }).map_err(|e| e.to_string())?;
    let b = train(&set, &SvmConfig { seed: 99, ..cfg }).map_err(|e| e.to_string())?;
    let bits = |m: &LinearModel| {
        let mut v: Vec<u64> = m.weights.iter().map(|w| w.to_bits()).collect();
        v.push(m.bias.to_bits());
        v
    };
    if bits(&a) != bits(&b) {
        return Err("same seed gave different weights".into());
    }
    Ok(format!(
        "{sets} separable sets fully fit; 100 subgradients agree (worst rel. error {worst:.1e}); reruns bit-identical"
    ))
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let run = RunConfig::default();
    let geometry = PyramidGeometry::new(160, 120, &run.channels, &run.detector).map_err(|e| e.to_string())?;
    let base_len = run.channels.descriptor_len();
    let seq_len = 12;
    let mut store = ScoreMapStore::unbounded();
    for f in 0..seq_len {
        let maps = geometry
            .levels
            .iter()
            .map(|g| {
                let mut m = ScoreMap::new(f, g.level, g.cols, g.rows);
                m.data.iter_mut().for_each(|v| *v = rng.gen_range(-2.0..2.0));
                m
            })
            .collect();
        store.insert(f, maps);
    }
    let mut flows = BTreeMap::new();
    for f in 1..seq_len {
        flows.insert(f, FlowField::uniform(20, 15, 8, rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)));
    }
    for k in 0..50 {
        let styles = [TemporalStyle::Past, TemporalStyle::Future, TemporalStyle::Centered];
        let temporal_style = *styles.choose(&mut rng).unwrap();
        let mut t = rng.gen_range(1..=7);
        if temporal_style == TemporalStyle::Centered && t % 2 == 0 {
            t += 1;
        }
        let spec = NeighborhoodSpec {
            nx: rng.gen_range(0..=4),
            ny: rng.gen_range(0..=4),
            step_x: rng.gen_range(1..=16),
            step_y: rng.gen_range(1..=16),
            t,
            temporal_style,
            volume_mode: if rng.gen_bool(0.5) { VolumeMode::Projection } else { VolumeMode::OpticalFlow },
            reading: Reading::PerSide,
        };
        let level = rng.gen_range(0..geometry.levels.len());
        let g = &geometry.levels[level];
        let (gx, gy) = (rng.gen_range(0..g.cols), rng.gen_range(0..g.rows));
        let frame_index = rng.gen_range(0..seq_len);
        let cand = Candidate {
            frame_index,
            anchor: GridAnchor { level, gx, gy },
            bbox: g.to_bbox(gx, gy),
            score: 0.0,
        };
        let descriptor = vec![0.5; base_len];
        let v = augmented_vector(&cand, &descriptor, &spec, &store, &flows, &geometry, -1.0, seq_len)
            .map_err(|e| format!("spec {k}: {e}"))?;
        let expected = base_len + (2 * spec.nx + 1) * (2 * spec.ny + 1) * spec.t;
        if v.len() != expected {
            return Err(format!("spec {k} {spec:?}: length {} vs {expected}", v.len()));
        }
    }
    Ok(format!("50 random neighbourhoods; length = {base_len} + (2nx+1)(2ny+1)T every time"))
}

// ---------------------------------------------------------------- 9

fn texture(rng: &mut ChaCha8Rng, kind: usize, w: usize, h: usize) -> Frame {
    let noise: Vec<u8> = (0..w * h).map(|_| rng.gen()).collect();
    match kind % 3 {
        0 => Frame::new(0, w, h, noise).unwrap(),
        1 => {
            // 3x3 box blur of the noise
            Frame::from_fn(0, w, h, |x, y| {
                let mut s = 0u32;
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let xx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                        let yy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                        s += noise[yy * w + xx] as u32;
                    }
                }
                (s / 9) as u8
            })
            .unwrap()
        }
        _ => {
            // blobs of random size and level
            let blobs: Vec<(usize, usize, usize, u8)> = (0..60)
                .map(|_| (rng.gen_range(0..w), rng.gen_range(0..h), rng.gen_range(2..9), rng.gen()))
                .collect();
            Frame::from_fn(0, w, h, |x, y| {
                let mut v = noise[y * w + x] / 4;
                for &(bx, by, r, l) in &blobs {
                    if x.abs_diff(bx) <= r && y.abs_diff(by) <= r {
                        v = v.wrapping_add(l / 2);
                    }
                }
                v
            })
            .unwrap()
        }
    }
}

fn criterion_9() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (w, h, block, radius) = (96, 80, 8usize, 4usize);
    let margin = block + radius;
    let mut blocks = 0;
    for k in 0..20 {
        let prev = texture(&mut rng, k, w, h);
        for dy in -3isize..=3 {
            for dx in -3isize..=3 {
                let curr = Frame::from_fn(1, w, h, |x, y| prev.get_mirrored(x as isize - dx, y as isize - dy)).unwrap();
                let flow = compute_flow(&prev, &curr, block, radius).map_err(|e| e.to_string())?;
                for by in 0..flow.rows {
                    for bx in 0..flow.cols {
                        let (x0, y0) = (bx * block, by * block);
                        if x0 < margin || y0 < margin || x0 + block + margin > w || y0 + block + margin > h {
                            continue;
                        }
                        let (u, v) = flow.at(bx, by);
                        if (u, v) != (dx as f64, dy as f64) {
                            return Err(format!("texture {k}, shift ({dx},{dy}): block ({bx},{by}) reports ({u},{v})"));
                        }
                        blocks += 1;
                    }
                }
            }
        }
    }
    Ok(format!("20 textures x 49 shifts; {blocks} interior blocks exact"))
}

// ---------------------------------------------------------------- benchmark

#[derive(Default)]
struct SeedResult {
    base: [f64; 3],
    proj: [f64; 3],
    flow: [f64; 3],
    /// Reasonable-subset gain at 10 and 3 fps.
    gain_10: f64,
    gain_3: f64,
    stage1: usize,
    scored: usize,
    elapsed: Duration,
}

fn lamrs(dets: &[Detection], seq: &ImageSequence, eval: &EvalConfig) -> Result<[f64; 3], Error> {
    let mut out = [0.0; 3];
    for (o, s) in out.iter_mut().zip(SUBSETS) {
        *o = evaluate(dets, &seq.annotations, seq.len(), &EvalConfig { subset: s, ..*eval })?.lamr;
    }
    Ok(out)
}

/// Base and projection-SSL gain on the reasonable subset at a lower rate.
fn fps_gain(train: &ImageSequence, test: &ImageSequence, fps: f64, cfg: &RunConfig) -> Result<f64, Error> {
    let train = subsample_fps(train, fps)?;
    let test = subsample_fps(test, fps)?;
    let (base, _) = bootstrap_train(&train, &cfg.channels, &cfg.detector, &cfg.svm)?;
    let (ssl, _) = train_ssl_from_base(&train, &base, &cfg.detector, &cfg.svm, &cfg.neighborhood, &cfg.ssl)?;
    let b = detect_sequence(&test, &base, None, &cfg.detector)?;
    let s = detect_sequence(&test, &base, Some(&ssl), &cfg.detector)?;
    let ec = EvalConfig {
        subset: Subset::Reasonable,
        ..cfg.eval
    };
    let lb = evaluate(&b.detections, &test.annotations, test.len(), &ec)?.lamr;
    let ls = evaluate(&s.detections, &test.annotations, test.len(), &ec)?.lamr;
    Ok(lb - ls)
}

fn run_seed(seed: u64) -> Result<SeedResult, Error> {
    let mut cfg = RunConfig::default();
    cfg.synth.seed = seed;
    cfg.svm.seed = seed;
    let sp = cfg.splits.clone();
    assert!(sp.train_frames >= 600 && sp.test_frames >= 300);
    assert_eq!((cfg.synth.width, cfg.synth.height, cfg.synth.fps), (320, 240, 30.0));

    let start = Instant::now();
    let (train, test) = ssldet::synth::generate_splits(&cfg.synth, sp.train_frames, sp.gap, sp.test_frames)?;
    let (base, _) = bootstrap_train(&train, &cfg.channels, &cfg.detector, &cfg.svm)?;
    let proj_spec = NeighborhoodSpec {
        volume_mode: VolumeMode::Projection,
        ..cfg.neighborhood
    };
    let (proj, _) = train_ssl_from_base(&train, &base, &cfg.detector, &cfg.svm, &proj_spec, &cfg.ssl)?;
    let b = detect_sequence(&test, &base, None, &cfg.detector)?;
    let p = detect_sequence(&test, &base, Some(&proj), &cfg.detector)?;
    let elapsed = start.elapsed();

    let flow_spec = NeighborhoodSpec {
        volume_mode: VolumeMode::OpticalFlow,
        ..cfg.neighborhood
    };
    let (flow, _) = train_ssl_from_base(&train, &base, &cfg.detector, &cfg.svm, &flow_spec, &cfg.ssl)?;
    let f = detect_sequence(&test, &base, Some(&flow), &cfg.detector)?;

    let r = SeedResult {
        base: lamrs(&b.detections, &test, &cfg.eval)?,
        proj: lamrs(&p.detections, &test, &cfg.eval)?,
        flow: lamrs(&f.detections, &test, &cfg.eval)?,
        gain_10: fps_gain(&train, &test, 10.0, &cfg)?,
        gain_3: fps_gain(&train, &test, 3.0, &cfg)?,
        stage1: p.stats.stage1_candidates,
        scored: p.stats.scored_windows,
        elapsed,
    };
    println!(
        "  seed {seed}: LAMR reasonable/near/medium base {:.2}/{:.2}/{:.2} ssl {:.2}/{:.2}/{:.2} ssl-flow {:.2}/{:.2}/{:.2}; \
         gain 10fps {:.2} 3fps {:.2}; stage-2 input {} of {}; base+ssl train and test {:.0?}",
        r.base[0], r.base[1], r.base[2], r.proj[0], r.proj[1], r.proj[2], r.flow[0], r.flow[1], r.flow[2],
        r.gain_10, r.gain_3, r.stage1, r.scored, r.elapsed
    );
    Ok(r)
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn benchmark_criteria(results: &mut Vec<bool>) {
    let mut runs = Vec::new();
    for seed in SEEDS {
        match run_seed(seed) {
            Ok(r) => runs.push(r),
            Err(e) => {
                for (id, name) in [(1, "ssl improvement"), (2, "frame-rate trend"), (3, "near vs medium"), (4, "flow vs projection"), (10, "pipeline ratio")] {
                    report(results, id, name, Err(format!("benchmark seed {seed} failed: {e}")));
                }
                return;
            }
        }
    }

    let gains: Vec<f64> = runs.iter().map(|r| r.base[0] - r.proj[0]).collect();
    let every = gains.iter().all(|&g| g > 0.0);
    let mean_gain = mean(gains.iter().copied());
    let slowest = runs.iter().map(|r| r.elapsed).max().unwrap();
    report(
        results,
        1,
        "ssl improvement",
        check(
            every && mean_gain >= 3.0 && slowest < RUNTIME_BUDGET,
            format!(
                "reasonable gains {:?}, mean {mean_gain:.2} (need every > 0, mean >= 3); slowest seed {slowest:.0?} (budget 20 min)",
                gains.iter().map(|g| format!("{g:.2}")).collect::<Vec<_>>()
            ),
        ),
    );

    let g30 = mean_gain;
    let g10 = mean(runs.iter().map(|r| r.gain_10));
    let g3 = mean(runs.iter().map(|r| r.gain_3));
    report(
        results,
        2,
        "frame-rate trend",
        check(
            g30 >= g10 && g10 >= g3,
            format!("mean reasonable gain 30fps {g30:.2}, 10fps {g10:.2}, 3fps {g3:.2} (need non-increasing)"),
        ),
    );

    let near = mean(runs.iter().map(|r| r.base[1] - r.proj[1]));
    let medium = mean(runs.iter().map(|r| r.base[2] - r.proj[2]));
    report(
        results,
        3,
        "near vs medium",
        check(near >= medium, format!("mean gain near {near:.2}, medium {medium:.2} (need near >= medium)")),
    );

    let p = mean(runs.iter().map(|r| r.proj[0]));
    let f = mean(runs.iter().map(|r| r.flow[0]));
    report(
        results,
        4,
        "flow vs projection",
        check(
            f <= p + 0.5,
            format!("mean reasonable LAMR flow {f:.2}, projection {p:.2} (need flow <= projection + 0.5)"),
        ),
    );

    let worst = runs
        .iter()
        .map(|r| r.stage1 as f64 / r.scored as f64)
        .fold(0.0, f64::max);
    report(
        results,
        10,
        "pipeline ratio",
        check(
            worst <= 0.05,
            format!("stage-2 input at most {:.2}% of scored windows (need <= 5%)", 100.0 * worst),
        ),
    );
}

fn main() {
    let mut results = Vec::new();
    let t = Instant::now();
    report(&mut results, 5, "evaluation oracle", criterion_5());
    report(&mut results, 6, "nms oracle", criterion_6());
    report(&mut results, 7, "svm correctness", criterion_7());
    report(&mut results, 8, "augmentation length", criterion_8());
    report(&mut results, 9, "flow recovery", criterion_9());
    benchmark_criteria(&mut results);
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("acceptance: {} of {} criteria passed in {:.0?}", results.len() - failed, results.len(), t.elapsed());
    if failed > 0 {
        std::process::exit(1);
    }
}
