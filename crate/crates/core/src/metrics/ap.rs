use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::report::{ApRow, DetReport};
use super::{iou_box, Detection, GroundTruth};
use crate::error::{Error, Result};

/// One cut of the descending-score sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    /// Lowest score admitted at this cut.
    pub score: f64,
    pub recall: f64,
    pub precision: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub iou_thresh: f64,
    pub n_gt: usize,
    pub points: Vec<PrPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApInterpolation {
    AllPoints,
    #[default]
    Points101,
}

impl std::str::FromStr for ApInterpolation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "all_points" | "all-points" => Ok(ApInterpolation::AllPoints),
            "points_101" | "101" | "points-101" => Ok(ApInterpolation::Points101),
            other => Err(format!("unknown interpolation `{other}`")),
        }
    }
}

/// Sweeps detections by descending score with greedy one-to-one matching:
/// each detection claims the highest-IoU unclaimed ground truth of the same
/// image and class with IoU >= `iou_thresh`. Detections with equal scores
/// form one cut, so the curve has one point per distinct score.
pub fn pr_curve(dets: &[Detection], gts: &[GroundTruth], iou_thresh: f64) -> PrCurve {
    let mut by_key: HashMap<(&str, u32), Vec<usize>> = HashMap::new();
    for (i, g) in gts.iter().enumerate() {
        by_key.entry((g.image_id.as_str(), g.class_id)).or_default().push(i);
    }
    let mut claimed = vec![false; gts.len()];

    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));

    let n_gt = gts.len();
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (pos, &di) in order.iter().enumerate() {
        let d = &dets[di];
        let mut best: Option<(f64, usize)> = None;
        if let Some(cands) = by_key.get(&(d.image_id.as_str(), d.class_id)) {
            for &gi in cands {
                if claimed[gi] {
                    continue;
                }
                let iou = iou_box(&d.bbox, &gts[gi].bbox);
                if iou >= iou_thresh && best.is_none_or(|(b, _)| iou > b) {
                    best = Some((iou, gi));
                }
            }
        }
        match best {
            Some((_, gi)) => {
                claimed[gi] = true;
                tp += 1;
            }
            None => fp += 1,
        }
        let last_of_cut = order
            .get(pos + 1)
            .is_none_or(|&next| dets[next].score != d.score);
        if last_of_cut {
            points.push(PrPoint {
                score: d.score,
                recall: if n_gt == 0 { 0.0 } else { tp as f64 / n_gt as f64 },
                precision: tp as f64 / (tp + fp) as f64,
                tp,
                fp,
                fn_: n_gt - tp,
            });
        }
    }
    PrCurve {
        iou_thresh,
        n_gt,
        points,
    }
}

/// Area under the precision envelope (precision made non-increasing in
/// recall). `AllPoints` integrates over every recall step; `Points101`
/// averages the envelope sampled at recall 0, 0.01, ..., 1.
pub fn average_precision(curve: &PrCurve, interpolation: ApInterpolation) -> Result<f64> {
    if curve.n_gt == 0 {
        return Err(Error::UndefinedMetric(
            "average precision is undefined without ground truths".into(),
        ));
    }
    let pts = &curve.points;
    let mut envelope: Vec<f64> = pts.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let ap = match interpolation {
        ApInterpolation::AllPoints => {
            let mut prev = 0.0;
            let mut area = 0.0;
            for (p, env) in pts.iter().zip(&envelope) {
                area += (p.recall - prev) * env;
                prev = p.recall;
            }
            area
        }
        ApInterpolation::Points101 => {
            let mut sum = 0.0;
            let mut j = 0;
            for k in 0..=100 {
                let r = k as f64 / 100.0;
                while j < pts.len() && pts[j].recall < r - 1e-12 {
                    j += 1;
                }
                if j < pts.len() {
                    sum += envelope[j];
                }
            }
            sum / 101.0
        }
    };
    Ok(ap.clamp(0.0, 1.0))
}

/// AP at each IoU threshold, evaluated independently.
pub fn evaluate_detections(
    dets: &[Detection],
    gts: &[GroundTruth],
    iou_thresholds: &[f64],
    interpolation: ApInterpolation,
) -> Result<DetReport> {
    let rows = iou_thresholds
        .iter()
        .map(|&t| {
            let curve = pr_curve(dets, gts, t);
            let ap = average_precision(&curve, interpolation)?;
            let last = curve.points.last();
            Ok(ApRow {
                iou_threshold: t,
                interpolation,
                ap,
                n_gt: gts.len(),
                n_det: dets.len(),
                recall: last.map_or(0.0, |p| p.recall),
                precision: last.map_or(0.0, |p| p.precision),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DetReport { rows })
}
