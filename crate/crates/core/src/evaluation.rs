//! Miss rate versus false positives per image: greedy IoU matching with
//! ignore regions, threshold sweep, log-average miss rate and plots.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detector::Detection;
use crate::error::{Error, Result};
use crate::image::BBox;
use crate::sequence_io::{Annotation, Label};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Near,
    Medium,
    Reasonable,
}

impl Subset {
    /// Inclusive lower and exclusive upper ground-truth height bound.
    pub fn height_band(&self) -> (f64, f64) {
        match self {
            Subset::Near => (75.0, f64::INFINITY),
            Subset::Medium => (50.0, 75.0),
            Subset::Reasonable => (50.0, f64::INFINITY),
        }
    }

    pub fn contains_height(&self, h: i32) -> bool {
        let (lo, hi) = self.height_band();
        let h = h as f64;
        h >= lo && h < hi
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Subset::Near => "near",
            Subset::Medium => "medium",
            Subset::Reasonable => "reasonable",
        }
    }
}

impl std::str::FromStr for Subset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "near" => Ok(Subset::Near),
            "medium" => Ok(Subset::Medium),
            "reasonable" => Ok(Subset::Reasonable),
            other => Err(Error::InvalidArgument(format!(
                "unknown subset {other:?} (expected near, medium or reasonable)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub iou_match: f64,
    pub subset: Subset,
    pub fppi_min: f64,
    pub fppi_max: f64,
    /// Number of log-spaced FPPI values averaged by the log-average miss rate.
    pub fppi_samples: usize,
    /// Detections shorter than `(1 - m)` times the band's lower bound or
    /// taller than `(1 + m)` times its upper bound are dropped before matching.
    pub height_margin: f64,
    /// Only every `frame_step`-th frame is evaluated.
    pub frame_step: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            iou_match: 0.5,
            subset: Subset::Reasonable,
            fppi_min: 1e-2,
            fppi_max: 1.0,
            fppi_samples: 9,
            height_margin: 0.25,
            frame_step: 1,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_match > 0.0 && self.iou_match < 1.0) {
            return Err(Error::Config(format!("iou_match {} must be in (0, 1)", self.iou_match)));
        }
        if !(self.fppi_min > 0.0 && self.fppi_min < self.fppi_max) {
            return Err(Error::Config("need 0 < fppi_min < fppi_max".into()));
        }
        if self.fppi_samples == 0 || self.frame_step == 0 {
            return Err(Error::Config("fppi_samples and frame_step must be >= 1".into()));
        }
        if !(self.height_margin >= 0.0 && self.height_margin < 1.0) {
            return Err(Error::Config("height_margin must be in [0, 1)".into()));
        }
        Ok(())
    }

    fn keeps_detection(&self, b: &BBox) -> bool {
        let (lo, hi) = self.subset.height_band();
        let h = b.h as f64;
        h >= lo * (1.0 - self.height_margin) && h <= hi * (1.0 + self.height_margin)
    }
}

/// Ground truth of a subset: boxes that must be found and boxes whose
/// detections are neither rewarded nor penalised.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SubsetSplit {
    pub ground_truth: Vec<Annotation>,
    pub ignore: Vec<Annotation>,
}

/// Non-occluded pedestrians within the subset's height band are ground
/// truth; everything else becomes an ignore region.
pub fn select_subset(annotations: &[Annotation], subset: Subset) -> SubsetSplit {
    let mut out = SubsetSplit::default();
    for a in annotations {
        if a.label == Label::Pedestrian && !a.occluded && subset.contains_height(a.bbox.h) {
            out.ground_truth.push(*a);
        } else {
            out.ignore.push(*a);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    TruePositive,
    FalsePositive,
    Ignored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatch {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// `(score, outcome)` for every detection, best score first.
    pub outcomes: Vec<(f64, Outcome)>,
}

fn score_order(a: &BBox, sa: f64, b: &BBox, sb: f64) -> Ordering {
    sb.total_cmp(&sa)
        .then(a.x.cmp(&b.x))
        .then(a.y.cmp(&b.y))
        .then(a.w.cmp(&b.w))
        .then(a.h.cmp(&b.h))
}

/// Greedy matching of one frame. Detections are visited best score first;
/// each takes the free ground-truth box it overlaps most (IoU at least
/// `iou`, ties to the earlier box). Unmatched detections overlapping an
/// ignore region at `iou` or more are discarded.
pub fn match_frame(dets: &[(BBox, f64)], gts: &[BBox], ignores: &[BBox], iou: f64) -> FrameMatch {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| score_order(&dets[i].0, dets[i].1, &dets[j].0, dets[j].1));
    let mut taken = vec![false; gts.len()];
    let mut outcomes = Vec::with_capacity(dets.len());
    let (mut tp, mut fp) = (0, 0);
    for i in order {
        let (b, s) = dets[i];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let o = b.iou(gt);
            if o >= iou && best.is_none_or(|(_, bo)| o > bo) {
                best = Some((g, o));
            }
        }
        let outcome = if let Some((g, _)) = best {
            taken[g] = true;
            tp += 1;
            Outcome::TruePositive
        } else if ignores.iter().any(|r| b.iou(r) >= iou) {
            Outcome::Ignored
        } else {
            fp += 1;
            Outcome::FalsePositive
        };
        outcomes.push((s, outcome));
    }
    FrameMatch {
        tp,
        fp,
        fn_: gts.len() - tp,
        outcomes,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub fppi: f64,
    pub miss_rate: f64,
    pub tp: usize,
    pub fp: usize,
}

/// Frames evaluated under `cfg.frame_step` for a sequence of `len` frames.
pub fn evaluated_frames(len: usize, cfg: &EvalConfig) -> Vec<usize> {
    (0..len).step_by(cfg.frame_step.max(1)).collect()
}

/// Miss rate against FPPI over `frames`, one point per distinct detection
/// score in descending order.
pub fn curve(detections: &[Detection], annotations: &[Annotation], frames: &[usize], cfg: &EvalConfig) -> Result<Vec<CurvePoint>> {
    cfg.validate()?;
    if frames.is_empty() {
        return Err(Error::InvalidArgument("no frames to evaluate".into()));
    }
    let mut frames = frames.to_vec();
    frames.sort_unstable();
    frames.dedup();
    let max_frame = frames[frames.len() - 1];
    let mut dets_by: Vec<Vec<(BBox, f64)>> = vec![Vec::new(); max_frame + 1];
    for d in detections {
        if d.frame_index <= max_frame && cfg.keeps_detection(&d.bbox) {
            dets_by[d.frame_index].push((d.bbox, d.score));
        }
    }
    let mut ann_by: Vec<Vec<Annotation>> = vec![Vec::new(); max_frame + 1];
    for a in annotations {
        if a.frame_index <= max_frame {
            ann_by[a.frame_index].push(*a);
        }
    }

    let mut n_gt = 0;
    let mut scored: Vec<(f64, bool)> = Vec::new();
    for &f in &frames {
        let split = select_subset(&ann_by[f], cfg.subset);
        let gts: Vec<BBox> = split.ground_truth.iter().map(|a| a.bbox).collect();
        let ign: Vec<BBox> = split.ignore.iter().map(|a| a.bbox).collect();
        n_gt += gts.len();
        let m = match_frame(&dets_by[f], &gts, &ign, cfg.iou_match);
        for (s, o) in m.outcomes {
            match o {
                Outcome::TruePositive => scored.push((s, true)),
                Outcome::FalsePositive => scored.push((s, false)),
                Outcome::Ignored => {}
            }
        }
    }
    if n_gt == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let n_frames = frames.len() as f64;
    let mut points: Vec<CurvePoint> = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (i, &(s, hit)) in scored.iter().enumerate() {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        if i + 1 == scored.len() || scored[i + 1].0 != s {
            points.push(CurvePoint {
                threshold: s,
                fppi: fp as f64 / n_frames,
                miss_rate: (n_gt - tp) as f64 / n_gt as f64,
                tp,
                fp,
            });
        }
    }
    Ok(points)
}

/// The FPPI values at which the log-average samples the curve.
pub fn fppi_samples(cfg: &EvalConfig) -> Vec<f64> {
    let n = cfg.fppi_samples;
    if n == 1 {
        return vec![cfg.fppi_min];
    }
    let (lo, hi) = (cfg.fppi_min.log10(), cfg.fppi_max.log10());
    let mut v: Vec<f64> = (0..n)
        .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (n - 1) as f64))
        .collect();
    v[0] = cfg.fppi_min;
    v[n - 1] = cfg.fppi_max;
    v
}

/// Log-average miss rate in percent: 100 times the mean miss rate at the
/// sampled FPPI values. Each sample takes the lowest-threshold point whose
/// FPPI does not exceed it, falling back to the highest-threshold point.
/// An empty curve misses everything.
pub fn log_average_miss_rate(points: &[CurvePoint], cfg: &EvalConfig) -> f64 {
    if points.is_empty() {
        return 100.0;
    }
    let samples = fppi_samples(cfg);
    let total: f64 = samples
        .iter()
        .map(|&s| {
            points
                .iter()
                .rev()
                .find(|p| p.fppi <= s)
                .unwrap_or(&points[0])
                .miss_rate
        })
        .sum();
    100.0 * total / samples.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub points: Vec<CurvePoint>,
    pub lamr: f64,
    pub ground_truth: usize,
    pub frames: usize,
}

/// Curve and log-average miss rate of detections over a sequence of `len`
/// frames.
pub fn evaluate(detections: &[Detection], annotations: &[Annotation], len: usize, cfg: &EvalConfig) -> Result<Evaluation> {
    let frames = evaluated_frames(len, cfg);
    let points = curve(detections, annotations, &frames, cfg)?;
    let lamr = log_average_miss_rate(&points, cfg);
    let ground_truth = frames
        .iter()
        .map(|&f| {
            select_subset(
                &annotations.iter().filter(|a| a.frame_index == f).copied().collect::<Vec<_>>(),
                cfg.subset,
            )
            .ground_truth
            .len()
        })
        .sum();
    Ok(Evaluation {
        points,
        lamr,
        ground_truth,
        frames: frames.len(),
    })
}

pub const CURVE_HEADER: &str = "threshold,fppi,miss_rate";

pub fn format_curve(points: &[CurvePoint]) -> String {
    let mut s = String::from(CURVE_HEADER);
    s.push('\n');
    for p in points {
        let _ = writeln!(s, "{},{},{}", p.threshold, p.fppi, p.miss_rate);
    }
    s
}

/// Parses `curve.csv`. Count fields are not stored and read back as zero.
pub fn parse_curve(text: &str) -> Result<Vec<CurvePoint>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line == CURVE_HEADER) {
            continue;
        }
        let bad = |reason: &str| Error::Csv {
            line: i + 1,
            reason: reason.into(),
        };
        let f: Vec<f64> = line
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad("bad number"))?;
        if f.len() != 3 {
            return Err(bad(&format!("expected 3 fields, got {}", f.len())));
        }
        out.push(CurvePoint {
            threshold: f[0],
            fppi: f[1],
            miss_rate: f[2],
            tp: 0,
            fp: 0,
        });
    }
    Ok(out)
}

pub fn write_curve(path: &Path, points: &[CurvePoint]) -> Result<()> {
    std::fs::write(path, format_curve(points)).map_err(|e| Error::io(path, e))
}

pub fn read_curve(path: &Path) -> Result<Vec<CurvePoint>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_curve(&text)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// SVG of named miss-rate curves on a log FPPI axis spanning 1e-3 to 1e1.
pub fn plot_svg(curves: &[(String, Vec<CurvePoint>)], cfg: &EvalConfig) -> String {
    let (w, h) = (560.0, 420.0);
    let (left, right, top, bottom) = (60.0, 20.0, 20.0, 50.0);
    let (x_lo, x_hi) = (-3.0f64, 1.0f64);
    let px = |fppi: f64| left + (fppi.max(1e-3).log10() - x_lo) / (x_hi - x_lo) * (w - left - right);
    let py = |mr: f64| top + (1.0 - mr) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for e in -3..=1 {
        let x = px(10f64.powi(e));
        let _ = writeln!(
            s,
            "<line x1=\"{x:.1}\" y1=\"{top}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"#ddd\"/>\n<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\">1e{e}</text>",
            h - bottom,
            h - bottom + 16.0
        );
    }
    for k in 0..=5 {
        let mr = k as f64 / 5.0;
        let y = py(mr);
        let _ = writeln!(
            s,
            "<line x1=\"{left}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#ddd\"/>\n<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{mr:.1}</text>",
            w - right,
            left - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">false positives per image</text>"#,
        (left + w - right) / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">miss rate</text>"#,
        h / 2.0,
        h / 2.0
    );
    for (i, (name, points)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = points
            .iter()
            .map(|p| format!("{:.1},{:.1}", px(p.fppi), py(p.miss_rate)))
            .collect();
        if !path.is_empty() {
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                path.join(" ")
            );
        }
        let lamr = log_average_miss_rate(points, cfg);
        let y = top + 16.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{y:.1}" text-anchor="end" fill="{color}">{:.2}% {}</text>"#,
            w - right - 8.0,
            lamr,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::Stage;

    fn ann(f: usize, x: i32, h: i32) -> Annotation {
        Annotation::pedestrian(f, BBox::new(x, 0, h / 2, h))
    }

    fn det(f: usize, b: BBox, score: f64) -> Detection {
        Detection {
            frame_index: f,
            bbox: b,
            score,
            stage: Stage::Final,
        }
    }

    #[test]
    fn subsets_by_height() {
        let a = vec![ann(0, 0, 40), ann(0, 100, 60), ann(0, 200, 80)];
        let h = |s: Subset| -> Vec<i32> { select_subset(&a, s).ground_truth.iter().map(|a| a.bbox.h).collect() };
        assert_eq!(h(Subset::Near), vec![80]);
        assert_eq!(h(Subset::Medium), vec![60]);
        assert_eq!(h(Subset::Reasonable), vec![60, 80]);
        assert_eq!(select_subset(&a, Subset::Near).ignore.len(), 2);
    }

    #[test]
    fn height_75_is_near() {
        let a = vec![ann(0, 0, 75)];
        assert_eq!(select_subset(&a, Subset::Near).ground_truth.len(), 1);
        assert_eq!(select_subset(&a, Subset::Medium).ground_truth.len(), 0);
    }

    #[test]
    fn occluded_become_ignore() {
        let mut a = vec![ann(0, 0, 100), ann(0, 100, 60)];
        for x in &mut a {
            x.occluded = true;
        }
        let s = select_subset(&a, Subset::Reasonable);
        assert!(s.ground_truth.is_empty());
        assert_eq!(s.ignore.len(), 2);
    }

    #[test]
    fn match_examples() {
        let g = BBox::new(10, 10, 40, 80);
        let m = match_frame(&[(g, 1.0)], &[g], &[], 0.5);
        assert_eq!((m.tp, m.fp, m.fn_), (1, 0, 0));
        let m = match_frame(&[(g, 1.0), (g, 0.5)], &[g], &[], 0.5);
        assert_eq!((m.tp, m.fp, m.fn_), (1, 1, 0));
        let m = match_frame(&[(g, 1.0)], &[], &[g], 0.5);
        assert_eq!((m.tp, m.fp, m.fn_), (0, 0, 0));
        assert_eq!(m.outcomes[0].1, Outcome::Ignored);
    }

    #[test]
    fn match_prefers_higher_iou_gt() {
        let d = BBox::new(0, 0, 40, 80);
        let near = BBox::new(2, 0, 40, 80);
        let far = BBox::new(10, 0, 40, 80);
        let m = match_frame(&[(d, 1.0), (far, 0.5)], &[far, near], &[], 0.5);
        assert_eq!((m.tp, m.fp), (2, 0));
    }

    #[test]
    fn perfect_detector_zero_lamr() {
        let cfg = EvalConfig::default();
        let anns: Vec<Annotation> = (0..4).map(|f| ann(f, 10, 100)).collect();
        let dets: Vec<Detection> = anns.iter().map(|a| det(a.frame_index, a.bbox, 1.0)).collect();
        let e = evaluate(&dets, &anns, 4, &cfg).unwrap();
        assert_eq!(e.lamr, 0.0);
        assert_eq!(e.points.len(), 1);
    }

    #[test]
    fn empty_detections_full_miss() {
        let cfg = EvalConfig::default();
        let anns = vec![ann(0, 10, 100)];
        let e = evaluate(&[], &anns, 1, &cfg).unwrap();
        assert_eq!(e.lamr, 100.0);
    }

    #[test]
    fn empty_ground_truth_is_error() {
        let cfg = EvalConfig::default();
        let anns = vec![ann(0, 10, 20)];
        assert!(matches!(evaluate(&[], &anns, 1, &cfg), Err(Error::EmptyGroundTruth)));
    }

    #[test]
    fn hand_computed_curve() {
        // Frame 0: one GT, hit at 0.9, false alarm at 0.8.
        // Frame 1: one GT, hit at 0.3. Frame 2: false alarm at 0.5.
        let cfg = EvalConfig::default();
        let g0 = BBox::new(0, 0, 50, 100);
        let g1 = BBox::new(100, 0, 50, 100);
        let anns = vec![Annotation::pedestrian(0, g0), Annotation::pedestrian(1, g1)];
        let dets = vec![
            det(0, g0, 0.9),
            det(0, BBox::new(200, 0, 50, 100), 0.8),
            det(1, g1, 0.3),
            det(2, BBox::new(0, 0, 50, 100), 0.5),
        ];
        let pts = curve(&dets, &anns, &[0, 1, 2], &cfg).unwrap();
        let got: Vec<(f64, usize, usize)> = pts.iter().map(|p| (p.threshold, p.tp, p.fp)).collect();
        assert_eq!(got, vec![(0.9, 1, 0), (0.8, 1, 1), (0.5, 1, 2), (0.3, 2, 2)]);
        assert_eq!(pts[3].miss_rate, 0.0);
        assert!((pts[3].fppi - 2.0 / 3.0).abs() < 1e-15);
        // samples <= 1/3 read miss 0.5; the sample at 1.0 reads miss 0.
        let samples = fppi_samples(&cfg);
        let expected = samples
            .iter()
            .map(|&s| if s >= 2.0 / 3.0 { 0.0 } else { 0.5 })
            .sum::<f64>()
            / 9.0
            * 100.0;
        assert!((log_average_miss_rate(&pts, &cfg) - expected).abs() < 1e-12);
    }

    #[test]
    fn fppi_samples_are_log_spaced() {
        let s = fppi_samples(&EvalConfig::default());
        assert_eq!(s.len(), 9);
        assert_eq!(s[0], 0.01);
        assert_eq!(s[8], 1.0);
        assert!((s[4] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn height_margin_drops_tiny_detections() {
        let cfg = EvalConfig {
            subset: Subset::Near,
            ..Default::default()
        };
        let g = BBox::new(0, 0, 50, 100);
        let anns = vec![Annotation::pedestrian(0, g)];
        let dets = vec![det(0, g, 1.0), det(0, BBox::new(200, 0, 10, 20), 2.0)];
        let pts = curve(&dets, &anns, &[0], &cfg).unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].fp, 0);
    }

    #[test]
    fn curve_csv_roundtrip() {
        let pts = vec![
            CurvePoint {
                threshold: 1.5,
                fppi: 0.0,
                miss_rate: 0.25,
                tp: 0,
                fp: 0,
            },
            CurvePoint {
                threshold: -0.125,
                fppi: 0.5,
                miss_rate: 0.0,
                tp: 0,
                fp: 0,
            },
        ];
        assert_eq!(parse_curve(&format_curve(&pts)).unwrap(), pts);
    }

    #[test]
    fn svg_has_curves() {
        let pts = vec![CurvePoint {
            threshold: 1.0,
            fppi: 0.1,
            miss_rate: 0.3,
            tp: 1,
            fp: 1,
        }];
        let svg = plot_svg(&[("base <a>".into(), pts)], &EvalConfig::default());
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("polyline"));
        assert!(svg.contains("base &lt;a&gt;"));
    }
}
