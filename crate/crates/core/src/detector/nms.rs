use std::cmp::Ordering;

use super::Detection;

/// Descending score, then smaller x, then smaller y.
pub(crate) fn detection_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.bbox.x.cmp(&b.bbox.x))
        .then(a.bbox.y.cmp(&b.bbox.y))
        .then(a.bbox.w.cmp(&b.bbox.w))
        .then(a.bbox.h.cmp(&b.bbox.h))
}

/// Greedy non-maximum suppression over one frame's detections: a detection
/// is kept iff its IoU with every already-kept one is below `iou_threshold`.
pub fn nms(detections: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut sorted = detections.to_vec();
    sorted.sort_by(detection_order);
    let mut kept: Vec<Detection> = Vec::new();
    for d in sorted {
        if kept.iter().all(|k| k.bbox.iou(&d.bbox) < iou_threshold) {
            kept.push(d);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::Stage;
    use crate::image::BBox;

    fn det(x: i32, y: i32, w: i32, h: i32, score: f64) -> Detection {
        Detection {
            frame_index: 0,
            bbox: BBox::new(x, y, w, h),
            score,
            stage: Stage::Final,
        }
    }

    #[test]
    fn identical_boxes_keep_best() {
        let out = nms(&[det(0, 0, 10, 10, 1.0), det(0, 0, 10, 10, 2.0)], 0.5);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].score, 2.0);
    }

    #[test]
    fn disjoint_boxes_kept() {
        assert_eq!(nms(&[det(0, 0, 10, 10, 1.0), det(20, 0, 10, 10, 2.0)], 0.5).len(), 2);
    }

    #[test]
    fn chain_keeps_ends() {
        // A-B and B-C at IoU 0.6; A-C cannot also be disjoint at that overlap,
        // so A-C sits below the threshold instead
        let a = det(0, 0, 100, 10, 3.0);
        let b = det(25, 0, 100, 10, 2.0);
        let c = det(50, 0, 100, 10, 1.0);
        assert!((a.bbox.iou(&b.bbox) - 0.6).abs() < 1e-12);
        assert!((b.bbox.iou(&c.bbox) - 0.6).abs() < 1e-12);
        // A and C overlap (IoU 1/3) but below the threshold, so both survive
        let out = nms(&[c, a, b], 0.5);
        let scores: Vec<f64> = out.iter().map(|d| d.score).collect();
        assert_eq!(scores, vec![3.0, 1.0]);
    }

    #[test]
    fn ties_break_on_position() {
        let out = nms(&[det(5, 0, 10, 10, 1.0), det(4, 0, 10, 10, 1.0)], 0.5);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].bbox.x, 4);
    }
}
