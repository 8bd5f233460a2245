//! On-disk sequences (binary PGM frames plus `annotations.csv`), frame-rate
//! subsampling, and the `.sslmodel` weight file format.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{BBox, Frame};
use crate::linear_svm::{LinearModel, ModelKind, ModelMeta};

pub const ANNOTATION_HEADER: &str = "frame_index,x,y,w,h,label,occluded";
pub const MODEL_MAGIC: &[u8; 8] = b"SSLMDL01";
const MODEL_MAGIC_PREFIX: &[u8; 6] = b"SSLMDL";
const FPS_FILE: &str = "fps.txt";
const DEFAULT_FPS: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Pedestrian,
    Ignore,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Pedestrian => "pedestrian",
            Label::Ignore => "ignore",
        }
    }
}

impl std::str::FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "pedestrian" => Ok(Label::Pedestrian),
            "ignore" => Ok(Label::Ignore),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub frame_index: usize,
    pub bbox: BBox,
    pub label: Label,
    pub occluded: bool,
}

impl Annotation {
    pub fn pedestrian(frame_index: usize, bbox: BBox) -> Self {
        Annotation {
            frame_index,
            bbox,
            label: Label::Pedestrian,
            occluded: false,
        }
    }
}

/// Ordered frames with their ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSequence {
    pub frames: Vec<Frame>,
    pub annotations: Vec<Annotation>,
    pub fps: f64,
}

impl ImageSequence {
    /// Builds a sequence, checking that frame indices run 0, 1, 2, ... and
    /// that every annotation refers to an existing frame.
    pub fn new(frames: Vec<Frame>, annotations: Vec<Annotation>, fps: f64) -> Result<Self> {
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::InvalidArgument(format!("fps must be positive, got {fps}")));
        }
        for (expected, frame) in frames.iter().enumerate() {
            if frame.index != expected {
                return Err(Error::NonContiguous {
                    expected,
                    found: frame.index,
                });
            }
        }
        if let Some(a) = annotations.iter().find(|a| a.frame_index >= frames.len()) {
            return Err(Error::InvalidArgument(format!(
                "annotation on frame {} but sequence has {} frames",
                a.frame_index,
                frames.len()
            )));
        }
        if let Some(a) = annotations.iter().find(|a| !a.bbox.is_valid()) {
            return Err(Error::InvalidArgument(format!("annotation with empty box {}", a.bbox)));
        }
        Ok(ImageSequence {
            frames,
            annotations,
            fps,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn annotations_for(&self, frame_index: usize) -> impl Iterator<Item = &Annotation> {
        self.annotations
            .iter()
            .filter(move |a| a.frame_index == frame_index)
    }

    /// Annotations grouped per frame.
    pub fn annotations_by_frame(&self) -> Vec<Vec<Annotation>> {
        let mut out = vec![Vec::new(); self.frames.len()];
        for a in &self.annotations {
            out[a.frame_index].push(*a);
        }
        out
    }

    /// Contiguous sub-range of frames, re-indexed from zero.
    pub fn slice(&self, start: usize, end: usize) -> Result<ImageSequence> {
        if start >= end || end > self.frames.len() {
            return Err(Error::InvalidArgument(format!(
                "bad frame range {start}..{end} for {} frames",
                self.frames.len()
            )));
        }
        let frames = self.frames[start..end]
            .iter()
            .map(|f| {
                let mut f = f.clone();
                f.index -= start;
                f
            })
            .collect();
        let annotations = self
            .annotations
            .iter()
            .filter(|a| a.frame_index >= start && a.frame_index < end)
            .map(|a| Annotation {
                frame_index: a.frame_index - start,
                ..*a
            })
            .collect();
        ImageSequence::new(frames, annotations, self.fps)
    }
}

/// Keeps every `round(fps / target_fps)`-th frame and re-indexes the result.
pub fn subsample_fps(seq: &ImageSequence, target_fps: f64) -> Result<ImageSequence> {
    if !(target_fps > 0.0) || target_fps > seq.fps + 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "target fps {target_fps} must be in (0, {}]",
            seq.fps
        )));
    }
    let stride = ((seq.fps / target_fps).round() as usize).max(1);
    let frames = seq
        .frames
        .iter()
        .filter(|f| f.index % stride == 0)
        .map(|f| {
            let mut f = f.clone();
            f.index /= stride;
            f
        })
        .collect();
    let annotations = seq
        .annotations
        .iter()
        .filter(|a| a.frame_index % stride == 0)
        .map(|a| Annotation {
            frame_index: a.frame_index / stride,
            ..*a
        })
        .collect();
    ImageSequence::new(frames, annotations, target_fps)
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.pgm")
}

fn parse_frame_file_name(name: &str) -> Option<usize> {
    let digits = name.strip_prefix("frame_")?.strip_suffix(".pgm")?;
    if digits.len() < 6 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

pub fn load_sequence(dir: &Path) -> Result<ImageSequence> {
    if !dir.is_dir() {
        return Err(Error::MissingDirectory(dir.to_path_buf()));
    }
    let mut indexed = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        if let Some(idx) = name.to_str().and_then(parse_frame_file_name) {
            indexed.push((idx, entry.path()));
        }
    }
    indexed.sort();
    let mut frames = Vec::with_capacity(indexed.len());
    for (expected, (idx, path)) in indexed.iter().enumerate() {
        if *idx != expected {
            return Err(Error::NonContiguous {
                expected,
                found: *idx,
            });
        }
        frames.push(read_pgm(path, *idx)?);
    }
    let csv_path = dir.join("annotations.csv");
    let text = fs::read_to_string(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let annotations = parse_annotations(&text)?;
    let fps_path = dir.join(FPS_FILE);
    let fps = if fps_path.exists() {
        let s = fs::read_to_string(&fps_path).map_err(|e| Error::io(&fps_path, e))?;
        s.trim()
            .parse::<f64>()
            .map_err(|e| Error::InvalidArgument(format!("{}: {e}", fps_path.display())))?
    } else {
        DEFAULT_FPS
    };
    ImageSequence::new(frames, annotations, fps)
}

pub fn save_sequence(seq: &ImageSequence, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for f in &seq.frames {
        write_pgm(&dir.join(frame_file_name(f.index)), f)?;
    }
    let csv_path = dir.join("annotations.csv");
    fs::write(&csv_path, format_annotations(&seq.annotations)).map_err(|e| Error::io(&csv_path, e))?;
    let fps_path = dir.join(FPS_FILE);
    fs::write(&fps_path, format!("{}\n", seq.fps)).map_err(|e| Error::io(&fps_path, e))?;
    Ok(())
}

pub fn parse_annotations(text: &str) -> Result<Vec<Annotation>> {
    let mut out = Vec::new();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == ANNOTATION_HEADER => {}
        Some((_, header)) if header.trim().is_empty() => {}
        None => return Ok(out),
        Some((_, header)) => {
            return Err(Error::Csv {
                line: 1,
                reason: format!("expected header {ANNOTATION_HEADER:?}, got {header:?}"),
            })
        }
    }
    for (i, line) in lines {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 7 {
            return Err(Error::Csv {
                line: line_no,
                reason: format!("expected 7 fields, got {}", fields.len()),
            });
        }
        let bad = |what: &str| Error::Csv {
            line: line_no,
            reason: format!("bad {what}"),
        };
        let int = |s: &str, what: &str| s.parse::<i32>().map_err(|_| bad(what));
        let frame_index = fields[0].parse::<usize>().map_err(|_| bad("frame_index"))?;
        let bbox = BBox::new(
            int(fields[1], "x")?,
            int(fields[2], "y")?,
            int(fields[3], "w")?,
            int(fields[4], "h")?,
        );
        if !bbox.is_valid() {
            return Err(bad("box size"));
        }
        let label = fields[5].parse::<Label>().map_err(|_| bad("label"))?;
        let occluded = match fields[6] {
            "0" | "false" => false,
            "1" | "true" => true,
            _ => return Err(bad("occluded flag")),
        };
        out.push(Annotation {
            frame_index,
            bbox,
            label,
            occluded,
        });
    }
    Ok(out)
}

pub fn format_annotations(annotations: &[Annotation]) -> String {
    let mut s = String::from(ANNOTATION_HEADER);
    s.push('\n');
    for a in annotations {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            a.frame_index,
            a.bbox.x,
            a.bbox.y,
            a.bbox.w,
            a.bbox.h,
            a.label.as_str(),
            a.occluded as u8
        ));
    }
    s
}

pub fn read_pgm(path: &Path, index: usize) -> Result<Frame> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes, index).map_err(|reason| Error::Pgm {
        path: path.to_path_buf(),
        reason,
    })
}

pub fn write_pgm(path: &Path, frame: &Frame) -> Result<()> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend_from_slice(frame.pixels());
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn decode_pgm(bytes: &[u8], index: usize) -> std::result::Result<Frame, String> {
    let mut pos = 0;
    let mut token = || -> std::result::Result<String, String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err("not a binary PGM (P5)".into());
    }
    let num = |s: String, what: &str| s.parse::<usize>().map_err(|_| format!("bad {what}"));
    let width = num(token()?, "width")?;
    let height = num(token()?, "height")?;
    let maxval = num(token()?, "maxval")?;
    if maxval != 255 {
        return Err(format!("maxval {maxval} is not 255"));
    }
    // exactly one whitespace byte separates the header from the raster
    let start = pos + 1;
    let need = width * height;
    if bytes.len() < start + need {
        return Err("truncated raster".into());
    }
    Frame::new(index, width, height, bytes[start..start + need].to_vec()).map_err(|e| e.to_string())
}

pub fn encode_model(model: &LinearModel) -> Result<Vec<u8>> {
    let meta = serde_json::to_vec(&model.meta).map_err(|e| Error::ModelFormat(e.to_string()))?;
    let mut out = Vec::with_capacity(40 + meta.len() + 8 * model.weights.len());
    out.extend_from_slice(MODEL_MAGIC);
    out.push(match model.kind {
        ModelKind::Base => 0,
        ModelKind::Ssl => 1,
    });
    out.extend_from_slice(&model.layout_id.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&(model.weights.len() as u64).to_le_bytes());
    for w in &model.weights {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out.extend_from_slice(&model.bias.to_le_bytes());
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<LinearModel> {
    struct Reader<'a> {
        bytes: &'a [u8],
        pos: usize,
    }
    impl<'a> Reader<'a> {
        fn take(&mut self, n: usize) -> Result<&'a [u8]> {
            if self.pos + n > self.bytes.len() {
                return Err(Error::ModelFormat("truncated file".into()));
            }
            let s = &self.bytes[self.pos..self.pos + n];
            self.pos += n;
            Ok(s)
        }
        fn u64(&mut self) -> Result<u64> {
            Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
        }
        fn f64(&mut self) -> Result<f64> {
            Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
        }
    }

    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(8)?;
    if &magic[..6] != MODEL_MAGIC_PREFIX {
        return Err(Error::ModelFormat("bad magic bytes".into()));
    }
    if magic != MODEL_MAGIC {
        return Err(Error::ModelVersion {
            found: String::from_utf8_lossy(magic).into_owned(),
            expected: String::from_utf8_lossy(MODEL_MAGIC).into_owned(),
        });
    }
    let kind = match r.take(1)?[0] {
        0 => ModelKind::Base,
        1 => ModelKind::Ssl,
        k => return Err(Error::ModelFormat(format!("unknown model kind {k}"))),
    };
    let layout_id = r.u64()?;
    let meta_len = u32::from_le_bytes(r.take(4)?.try_into().unwrap()) as usize;
    let meta: ModelMeta =
        serde_json::from_slice(r.take(meta_len)?).map_err(|e| Error::ModelFormat(e.to_string()))?;
    let n = r.u64()? as usize;
    if n > bytes.len() / 8 {
        return Err(Error::ModelFormat("truncated file".into()));
    }
    let weights = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let bias = r.f64()?;
    if r.pos != bytes.len() {
        return Err(Error::ModelFormat("trailing bytes".into()));
    }
    Ok(LinearModel {
        weights,
        bias,
        layout_id,
        kind,
        meta,
    })
}

pub fn save_model(model: &LinearModel, path: &Path) -> Result<()> {
    let bytes = encode_model(model)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<LinearModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_sequence(n: usize) -> ImageSequence {
        let frames = (0..n)
            .map(|i| Frame::from_fn(i, 5, 4, |x, y| (x * 7 + y * 13 + i) as u8).unwrap())
            .collect();
        ImageSequence::new(frames, vec![], 30.0).unwrap()
    }

    fn model(weights: Vec<f64>, bias: f64) -> LinearModel {
        LinearModel {
            weights,
            bias,
            layout_id: 42,
            kind: ModelKind::Base,
            meta: ModelMeta::default(),
        }
    }

    #[test]
    fn load_roundtrip_three_frames_two_annotations() {
        let dir = tempfile::tempdir().unwrap();
        let mut seq = tiny_sequence(3);
        seq.annotations = vec![
            Annotation::pedestrian(0, BBox::new(1, 1, 2, 3)),
            Annotation {
                frame_index: 2,
                bbox: BBox::new(-1, 0, 4, 4),
                label: Label::Ignore,
                occluded: true,
            },
        ];
        save_sequence(&seq, dir.path()).unwrap();
        let back = load_sequence(dir.path()).unwrap();
        assert_eq!(back, seq);
    }

    #[test]
    fn empty_annotations_file() {
        let dir = tempfile::tempdir().unwrap();
        save_sequence(&tiny_sequence(2), dir.path()).unwrap();
        fs::write(dir.path().join("annotations.csv"), "").unwrap();
        let back = load_sequence(dir.path()).unwrap();
        assert_eq!(back.annotations.len(), 0);
        assert_eq!(back.len(), 2);
    }

    #[test]
    fn gap_in_frames_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_sequence(&tiny_sequence(4), dir.path()).unwrap();
        fs::remove_file(dir.path().join(frame_file_name(2))).unwrap();
        let err = load_sequence(dir.path()).unwrap_err();
        assert!(matches!(err, Error::NonContiguous { expected: 2, found: 3 }));
        assert!(err.to_string().contains("non-contiguous"));
    }

    #[test]
    fn missing_directory() {
        let err = load_sequence(Path::new("/nonexistent/ssldet")).unwrap_err();
        assert!(matches!(err, Error::MissingDirectory(_)));
    }

    #[test]
    fn pgm_maxval_must_be_255() {
        let mut bytes = b"P5\n2 1\n65535\n".to_vec();
        bytes.extend_from_slice(&[0, 0, 0, 0]);
        assert!(decode_pgm(&bytes, 0).unwrap_err().contains("maxval"));
        let ok = decode_pgm(b"P5 # comment\n2 1\n255\n\x01\x02", 0).unwrap();
        assert_eq!(ok.pixels(), &[1, 2]);
    }

    #[test]
    fn csv_field_count_mismatch() {
        let text = format!("{ANNOTATION_HEADER}\n0,1,2,3,4,pedestrian\n");
        assert!(matches!(parse_annotations(&text), Err(Error::Csv { line: 2, .. })));
    }

    #[test]
    fn subsample_stride_three() {
        let seq = tiny_sequence(9);
        let sub = subsample_fps(&seq, 10.0).unwrap();
        assert_eq!(sub.len(), 3);
        assert_eq!(sub.fps, 10.0);
        assert_eq!(sub.frames[1].pixels(), seq.frames[3].pixels());
        assert_eq!(sub.frames[2].pixels(), seq.frames[6].pixels());
    }

    #[test]
    fn subsample_identity_and_reindexing() {
        let mut seq = tiny_sequence(25);
        seq.annotations = vec![
            Annotation::pedestrian(20, BBox::new(0, 0, 2, 2)),
            Annotation::pedestrian(21, BBox::new(0, 0, 2, 2)),
        ];
        assert_eq!(subsample_fps(&seq, 30.0).unwrap(), seq);
        let sub = subsample_fps(&seq, 3.0).unwrap();
        assert_eq!(sub.len(), 3);
        assert_eq!(sub.annotations.len(), 1);
        assert_eq!(sub.annotations[0].frame_index, 2);
        assert!(subsample_fps(&seq, 60.0).is_err());
    }

    #[test]
    fn model_roundtrip_is_bit_exact() {
        let m = model(vec![1.0, -2.5e-300, std::f64::consts::PI], -0.5);
        let back = decode_model(&encode_model(&m).unwrap()).unwrap();
        assert_eq!(back.bias.to_bits(), (-0.5f64).to_bits());
        assert_eq!(back, m);
    }

    #[test]
    fn model_bad_magic_version_and_truncation() {
        let bytes = encode_model(&model(vec![1.0, 2.0, 3.0], 0.0)).unwrap();
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(matches!(decode_model(&wrong), Err(Error::ModelFormat(_))));
        let mut v2 = bytes.clone();
        v2[7] = b'2';
        assert!(matches!(decode_model(&v2), Err(Error::ModelVersion { .. })));
        assert!(decode_model(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn model_file_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.sslmodel");
        let m = model(vec![0.25; 3], 1.5);
        save_model(&m, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), m);
    }

    proptest::proptest! {
        #[test]
        fn subsample_count_is_ceil(n in 1usize..60, stride in 1usize..12) {
            let seq = tiny_sequence(n);
            let sub = subsample_fps(&seq, 30.0 / stride as f64).unwrap();
            proptest::prop_assert_eq!(sub.len(), n.div_ceil(stride));
        }

        #[test]
        fn model_roundtrip(weights in proptest::collection::vec(proptest::num::f64::NORMAL, 1..40), bias in proptest::num::f64::ANY) {
            let m = model(weights, bias);
            let back = decode_model(&encode_model(&m).unwrap()).unwrap();
            proptest::prop_assert_eq!(back.bias.to_bits(), m.bias.to_bits());
            proptest::prop_assert_eq!(back.weights, m.weights);
        }
    }
}
