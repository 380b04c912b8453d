use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A predicted and a ground-truth class map over the same pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SegSample {
    width: usize,
    height: usize,
    pred: Vec<u32>,
    gt: Vec<u32>,
    class_names: Vec<String>,
}

impl SegSample {
    pub fn new(
        width: usize,
        height: usize,
        pred: Vec<u32>,
        gt: Vec<u32>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let n = width * height;
        if pred.len() != n || gt.len() != n {
            return Err(Error::shape(
                format!("{n} pixels ({width}x{height}) in pred and gt"),
                format!("pred {} / gt {}", pred.len(), gt.len()),
            ));
        }
        let classes = class_names.len() as u32;
        if let Some(bad) = pred.iter().chain(&gt).find(|c| **c >= classes) {
            return Err(Error::invalid(format!(
                "class id {bad} out of range for {classes} classes"
            )));
        }
        Ok(SegSample {
            width,
            height,
            pred,
            gt,
            class_names,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pred(&self) -> &[u32] {
        &self.pred
    }

    pub fn gt(&self) -> &[u32] {
        &self.gt
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }
}

/// `counts[i * n + j]` = pixels of ground-truth class `i` predicted as `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub num_classes: usize,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(num_classes: usize) -> Self {
        ConfusionMatrix {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.num_classes + pred]
    }

    pub fn row_sum(&self, gt: usize) -> u64 {
        (0..self.num_classes).map(|j| self.get(gt, j)).sum()
    }

    pub fn col_sum(&self, pred: usize) -> u64 {
        (0..self.num_classes).map(|i| self.get(i, pred)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.num_classes.max(1)).map(<[u64]>::to_vec).collect()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_classes != self.num_classes {
            return Err(Error::shape(self.num_classes, other.num_classes));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

pub fn confusion_matrix(sample: &SegSample) -> ConfusionMatrix {
    let n = sample.num_classes();
    let mut m = ConfusionMatrix::zeros(n);
    for (g, p) in sample.gt.iter().zip(&sample.pred) {
        m.counts[*g as usize * n + *p as usize] += 1;
    }
    m
}

/// Mergeable per-class intersection/union pixel counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegAccumulator {
    pub intersection: Vec<u64>,
    pub union: Vec<u64>,
}

impl SegAccumulator {
    pub fn new(num_classes: usize) -> Self {
        SegAccumulator {
            intersection: vec![0; num_classes],
            union: vec![0; num_classes],
        }
    }

    pub fn from_confusion(m: &ConfusionMatrix) -> Self {
        let n = m.num_classes;
        let intersection: Vec<u64> = (0..n).map(|c| m.get(c, c)).collect();
        let union = (0..n)
            .map(|c| m.row_sum(c) + m.col_sum(c) - m.get(c, c))
            .collect();
        SegAccumulator {
            intersection,
            union,
        }
    }

    pub fn add(&mut self, sample: &SegSample) -> Result<()> {
        self.merge(&SegAccumulator::from_confusion(&confusion_matrix(sample)))
    }

    pub fn merge(&mut self, other: &SegAccumulator) -> Result<()> {
        if other.intersection.len() != self.intersection.len() {
            return Err(Error::shape(self.intersection.len(), other.intersection.len()));
        }
        for (a, b) in self.intersection.iter_mut().zip(&other.intersection) {
            *a += b;
        }
        for (a, b) in self.union.iter_mut().zip(&other.union) {
            *a += b;
        }
        Ok(())
    }

    /// Per-class IoU and their mean. A class with empty union is absent;
    /// absent classes are left out of the mean when `ignore_absent`, and
    /// otherwise count as 0.
    pub fn finish(&self, class_names: &[String], ignore_absent: bool) -> Result<MiouResult> {
        let per_class: Vec<ClassIou> = (0..self.intersection.len())
            .map(|c| ClassIou {
                name: class_names.get(c).cloned().unwrap_or_else(|| c.to_string()),
                intersection: self.intersection[c],
                union: self.union[c],
                iou: (self.union[c] > 0)
                    .then(|| self.intersection[c] as f64 / self.union[c] as f64),
            })
            .collect();
        let included: Vec<f64> = per_class
            .iter()
            .filter_map(|c| match c.iou {
                Some(v) => Some(v),
                None if !ignore_absent => Some(0.0),
                None => None,
            })
            .collect();
        if per_class.iter().all(|c| c.iou.is_none()) {
            return Err(Error::UndefinedMetric(
                "mIoU is undefined: every class is absent from both prediction and ground truth"
                    .into(),
            ));
        }
        let mean = included.iter().sum::<f64>() / included.len() as f64;
        Ok(MiouResult { per_class, mean })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassIou {
    pub name: String,
    /// `None` when the class appears in neither map.
    pub iou: Option<f64>,
    pub intersection: u64,
    pub union: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiouResult {
    pub per_class: Vec<ClassIou>,
    pub mean: f64,
}

pub fn miou(sample: &SegSample, ignore_absent: bool) -> Result<MiouResult> {
    SegAccumulator::from_confusion(&confusion_matrix(sample)).finish(&sample.class_names, ignore_absent)
}

/// Dataset mIoU from globally accumulated intersections and unions (not a
/// mean of per-image scores). Samples are reduced in parallel.
pub fn miou_dataset(samples: &[SegSample], ignore_absent: bool) -> Result<MiouResult> {
    let first = samples
        .first()
        .ok_or_else(|| Error::UndefinedMetric("mIoU over an empty dataset".into()))?;
    let names = first.class_names.clone();
    if let Some(bad) = samples.iter().find(|s| s.class_names != names) {
        return Err(Error::shape(
            format!("class list {names:?}"),
            format!("class list {:?}", bad.class_names),
        ));
    }
    let n = names.len();
    let acc = samples
        .par_iter()
        .map(|s| SegAccumulator::from_confusion(&confusion_matrix(s)))
        .reduce(
            || SegAccumulator::new(n),
            |mut a, b| {
                a.merge(&b).expect("class counts checked above");
                a
            },
        );
    acc.finish(&names, ignore_absent)
}
