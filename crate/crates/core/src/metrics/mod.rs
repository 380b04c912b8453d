//! Detection metrics (box IoU, ground-truth matching, PR curves, AP) and
//! segmentation metrics (confusion matrix, per-class IoU, mIoU).

mod ap;
mod report;
mod seg;

use serde::{Deserialize, Serialize};

use crate::annotation::{Annotation, PixelBox};

pub use ap::{average_precision, evaluate_detections, pr_curve, ApInterpolation, PrCurve, PrPoint};
pub use report::{ApRow, DetReport, SegReport};
pub use seg::{
    confusion_matrix, miou, miou_dataset, ClassIou, ConfusionMatrix, MiouResult, SegAccumulator,
    SegSample,
};

/// Real-valued axis-aligned box, serialized as `[x_min, y_min, x_max, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub const fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn is_well_formed(&self) -> bool {
        self.x_min < self.x_max && self.y_min < self.y_max
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min).max(0.0) * (self.y_max - self.y_min).max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

impl From<PixelBox> for BBox {
    fn from(b: PixelBox) -> Self {
        BBox::new(b.x_min as f64, b.y_min as f64, b.x_max as f64, b.y_max as f64)
    }
}

/// A scored prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    #[serde(default)]
    pub class_id: u32,
    pub bbox: BBox,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_index: Option<u64>,
}

/// A ground-truth box for detection evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub image_id: String,
    #[serde(default)]
    pub class_id: u32,
    pub bbox: BBox,
}

impl From<&Annotation> for GroundTruth {
    fn from(a: &Annotation) -> Self {
        GroundTruth {
            image_id: a.image_id.clone(),
            class_id: a.class_id,
            bbox: a.bbox.into(),
        }
    }
}

/// Intersection over union of two boxes. Zero when either is degenerate.
pub fn iou_box(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Selection rule among detections that overlap the target enough.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchRule {
    /// Smallest centre distance to the ground truth.
    #[default]
    ClosestCenter,
    /// Largest IoU with the ground truth.
    MaxIou,
}

/// Picks the detection for a single ground-truth target. Only detections
/// with IoU strictly above `iou_min` are candidates; ties go to the lower
/// index.
pub fn match_to_gt<'a>(
    dets: &'a [Detection],
    gt: &BBox,
    iou_min: f64,
    rule: MatchRule,
) -> Option<&'a Detection> {
    let (gx, gy) = gt.center();
    let mut best: Option<(f64, &Detection)> = None;
    for d in dets {
        let iou = iou_box(&d.bbox, gt);
        if iou <= iou_min {
            continue;
        }
        let key = match rule {
            MatchRule::ClosestCenter => {
                let (cx, cy) = d.bbox.center();
                (cx - gx).hypot(cy - gy)
            }
            MatchRule::MaxIou => -iou,
        };
        if best.is_none_or(|(k, _)| key < k) {
            best = Some((key, d));
        }
    }
    best.map(|(_, d)| d)
}
