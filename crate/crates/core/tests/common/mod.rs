#![allow(dead_code)]

use std::path::Path;

use orbitsynth::annotation::{Annotation, PixelBox};
use orbitsynth::datasetio::{DatasetManifest, ManifestEntry};
use orbitsynth::metrics::{iou_box, BBox, Detection, GroundTruth};
use orbitsynth::scenegen::{write_demo_assets, DatasetConfig, LoadedAssets};
use orbitsynth::{Band, BinaryMask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Demo assets written to `dir` with paths already resolved.
pub fn demo_config(dir: &Path) -> DatasetConfig {
    let mut cfg = write_demo_assets(dir, Band::Lwir, 7).expect("demo assets");
    cfg.resolve_paths(dir);
    cfg
}

pub fn demo_assets(dir: &Path) -> (DatasetConfig, LoadedAssets) {
    let cfg = demo_config(dir);
    let assets = LoadedAssets::load(&cfg).expect("load demo assets");
    (cfg, assets)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Manifest with random images, masks and class ids.
pub fn random_manifest(rng: &mut ChaCha8Rng) -> DatasetManifest {
    let n_classes = rng.random_range(1..4usize);
    let class_names: Vec<String> = (0..n_classes).map(|i| format!("class{i}")).collect();
    let n_images = rng.random_range(0..5usize);
    let entries = (0..n_images)
        .map(|i| {
            let (w, h) = (rng.random_range(4..40usize), rng.random_range(4..40usize));
            let image_id = format!("img{i:03}");
            let annotations = (0..rng.random_range(0..4usize))
                .map(|_| {
                    let mut mask = BinaryMask::new(w, h);
                    let density = rng.random_range(0.05..0.9);
                    for y in 0..h {
                        for x in 0..w {
                            if rng.random_bool(density) {
                                mask.set(x, y, true);
                            }
                        }
                    }
                    if mask.count() == 0 {
                        mask.set(rng.random_range(0..w), rng.random_range(0..h), true);
                    }
                    let class_id = rng.random_range(0..n_classes as u32);
                    Annotation::from_mask(image_id.clone(), class_id, &mask).expect("non-empty mask")
                })
                .collect();
            ManifestEntry {
                image_id: image_id.clone(),
                image_path: format!("images/{image_id}.png"),
                width: w as u32,
                height: h as u32,
                annotations,
                scene_spec: None,
            }
        })
        .collect();
    DatasetManifest::new(class_names, entries).expect("valid manifest")
}

/// Random detection instance: up to `max_gt` ground truths spread over two
/// images, up to `max_det` detections near or away from them, scores drawn
/// from a coarse grid so ties occur.
pub fn random_ap_instance(rng: &mut ChaCha8Rng, max_det: usize, max_gt: usize) -> (Vec<Detection>, Vec<GroundTruth>) {
    let n_gt = rng.random_range(1..=max_gt);
    let gts: Vec<GroundTruth> = (0..n_gt)
        .map(|i| {
            let x = i as f64 * 30.0;
            GroundTruth {
                image_id: format!("{}", rng.random_range(0..2)),
                class_id: 0,
                bbox: BBox::new(x, 0.0, x + 10.0, 10.0),
            }
        })
        .collect();
    let n_det = rng.random_range(0..=max_det);
    let dets = (0..n_det)
        .map(|_| {
            let g = &gts[rng.random_range(0..n_gt)];
            let dx = rng.random_range(-8.0..8.0);
            let dy = rng.random_range(-8.0..8.0);
            let b = g.bbox;
            let image_id = if rng.random_bool(0.9) {
                g.image_id.clone()
            } else {
                "elsewhere".to_string()
            };
            Detection {
                image_id,
                class_id: 0,
                bbox: BBox::new(b.x_min + dx, b.y_min + dy, b.x_max + dx, b.y_max + dy),
                score: rng.random_range(0..10) as f64 / 10.0,
                frame_index: None,
            }
        })
        .collect();
    (dets, gts)
}

/// Exhaustive all-points AP: for every distinct score cut, re-run the
/// matching on the admitted detections from scratch, then integrate the
/// upper envelope of precision over recall.
pub fn brute_force_ap(dets: &[Detection], gts: &[GroundTruth], thresh: f64) -> f64 {
    let mut cuts: Vec<f64> = dets.iter().map(|d| d.score).collect();
    cuts.sort_by(|a, b| b.total_cmp(a));
    cuts.dedup();
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for &cut in &cuts {
        let mut admitted: Vec<&Detection> = dets.iter().filter(|d| d.score >= cut).collect();
        admitted.sort_by(|a, b| b.score.total_cmp(&a.score));
        let mut used = vec![false; gts.len()];
        let mut tp = 0usize;
        for d in &admitted {
            let mut best: Option<(f64, usize)> = None;
            for (gi, g) in gts.iter().enumerate() {
                if used[gi] || g.image_id != d.image_id || g.class_id != d.class_id {
                    continue;
                }
                let iou = iou_box(&d.bbox, &g.bbox);
                if iou >= thresh && best.map_or(true, |(b, _)| iou > b) {
                    best = Some((iou, gi));
                }
            }
            if let Some((_, gi)) = best {
                used[gi] = true;
                tp += 1;
            }
        }
        pts.push((tp as f64 / gts.len() as f64, tp as f64 / admitted.len() as f64));
    }
    let mut recalls: Vec<f64> = pts.iter().map(|p| p.0).collect();
    recalls.sort_by(f64::total_cmp);
    recalls.dedup();
    let mut area = 0.0;
    let mut prev = 0.0;
    for r in recalls {
        let env = pts.iter().filter(|p| p.0 >= r).map(|p| p.1).fold(0.0, f64::max);
        area += (r - prev) * env;
        prev = r;
    }
    area
}

pub fn det(image_id: &str, b: [f64; 4], score: f64) -> Detection {
    Detection {
        image_id: image_id.into(),
        class_id: 0,
        bbox: b.into(),
        score,
        frame_index: None,
    }
}

/// Detection centred at `(cx, cy)` in frame `t`.
pub fn point_det(cx: f64, cy: f64, t: u64) -> Detection {
    Detection {
        image_id: format!("{t:04}"),
        class_id: 0,
        bbox: BBox::new(cx - 3.0, cy - 3.0, cx + 3.0, cy + 3.0),
        score: 0.8,
        frame_index: Some(t),
    }
}

/// One synthetic image sequence: background objects move with `flow`, one
/// target moves with `flow + deviation`.
pub struct Sequence {
    pub frames: Vec<Vec<Detection>>,
    /// Per object, whether it is the target; objects are listed in order of
    /// their first detection in frame 0.
    pub is_target: Vec<bool>,
}

pub fn random_sequence(rng: &mut ChaCha8Rng, flow: (f64, f64), offset: (f64, f64)) -> Sequence {
    let n_bg = rng.random_range(3..7usize);
    let n_frames = rng.random_range(2..8u64);
    let target_slot = rng.random_range(0..=n_bg);
    let mag = rng.random_range(1.5..4.0);
    let ang = rng.random_range(0.0..std::f64::consts::TAU);
    let deviation = (mag * ang.cos(), mag * ang.sin());
    let mut starts = Vec::new();
    let mut is_target = Vec::new();
    for slot in 0..=n_bg {
        // grid cells 80 px apart keep objects far outside each other's gate
        starts.push((40.0 + 80.0 * slot as f64, 200.0 + rng.random_range(-10.0..10.0)));
        is_target.push(slot == target_slot);
    }
    let frames = (0..n_frames)
        .map(|t| {
            starts
                .iter()
                .zip(&is_target)
                .map(|(&(x, y), &tgt)| {
                    let (vx, vy) = if tgt {
                        (flow.0 + deviation.0, flow.1 + deviation.1)
                    } else {
                        flow
                    };
                    let (vx, vy) = (vx + offset.0, vy + offset.1);
                    point_det(x + vx * t as f64, y + vy * t as f64, t)
                })
                .collect()
        })
        .collect();
    Sequence { frames, is_target }
}

/// Random label map with classes `0..n`.
pub fn random_labels(rng: &mut ChaCha8Rng, len: usize, n: u32) -> Vec<u32> {
    (0..len).map(|_| rng.random_range(0..n)).collect()
}

pub fn mask_bounds_box(mask: &BinaryMask) -> Option<PixelBox> {
    let mut b: Option<(u32, u32, u32, u32)> = None;
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) {
                let (x, y) = (x as u32, y as u32);
                b = Some(match b {
                    None => (x, y, x + 1, y + 1),
                    Some((a, c, d, e)) => (a.min(x), c.min(y), d.max(x + 1), e.max(y + 1)),
                });
            }
        }
    }
    b.map(|(a, c, d, e)| PixelBox::new(a, c, d, e).unwrap())
}
