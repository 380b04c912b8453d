use serde::{Deserialize, Serialize};

use super::ap::ApInterpolation;
use super::seg::MiouResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApRow {
    pub iou_threshold: f64,
    pub interpolation: ApInterpolation,
    pub ap: f64,
    pub n_gt: usize,
    pub n_det: usize,
    /// Recall and precision with every detection admitted.
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetReport {
    pub rows: Vec<ApRow>,
}

impl DetReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("iou_threshold,interpolation,ap,recall,precision,n_gt,n_det\n");
        for r in &self.rows {
            let interp = match r.interpolation {
                ApInterpolation::AllPoints => "all_points",
                ApInterpolation::Points101 => "points_101",
            };
            s.push_str(&format!(
                "{},{interp},{:.6},{:.6},{:.6},{},{}\n",
                r.iou_threshold, r.ap, r.recall, r.precision, r.n_gt, r.n_det
            ));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegReport {
    #[serde(flatten)]
    pub result: MiouResult,
    pub ignore_absent: bool,
    pub n_samples: usize,
}

impl SegReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per class plus a final `mean` row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("class,iou,intersection,union\n");
        for c in &self.result.per_class {
            let iou = c.iou.map(|v| format!("{v:.6}")).unwrap_or_default();
            s.push_str(&format!("{},{iou},{},{}\n", c.name, c.intersection, c.union));
        }
        s.push_str(&format!("mean,{:.6},,\n", self.result.mean));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ClassIou;

    #[test]
    fn csv_layouts() {
        let det = DetReport {
            rows: vec![ApRow {
                iou_threshold: 0.5,
                interpolation: ApInterpolation::Points101,
                ap: 1.0,
                n_gt: 1,
                n_det: 1,
                recall: 1.0,
                precision: 1.0,
            }],
        };
        assert_eq!(
            det.to_csv().lines().nth(1).unwrap(),
            "0.5,points_101,1.000000,1.000000,1.000000,1,1"
        );
        let seg = SegReport {
            result: MiouResult {
                per_class: vec![ClassIou {
                    name: "body".into(),
                    iou: Some(0.5),
                    intersection: 1,
                    union: 2,
                }],
                mean: 0.5,
            },
            ignore_absent: true,
            n_samples: 1,
        };
        let csv = seg.to_csv();
        assert!(csv.contains("body,0.500000,1,2\n"));
        assert!(csv.ends_with("mean,0.500000,,\n"));
    }
}
