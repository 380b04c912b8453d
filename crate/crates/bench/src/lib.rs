//! Shared fixtures for the criterion benches.

use orbitsynth::metrics::{BBox, Detection, GroundTruth, SegSample};
use orbitsynth::{Band, Frame};

/// Deterministic pseudo-random frame; a cheap hash keeps this crate free of
/// an RNG dependency.
pub fn frame(width: usize, height: usize, band: Band) -> Frame {
    let n = width * height * band.channels();
    let data = (0..n)
        .map(|i| {
            let h = (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 40;
            (h % 1000) as f32 / 999.0
        })
        .collect();
    Frame::from_data(width, height, band, data).expect("valid fixture")
}

/// `n` ground truths on a grid, each with one close detection and one
/// off-target false positive.
pub fn detection_set(n: usize) -> (Vec<Detection>, Vec<GroundTruth>) {
    let mut dets = Vec::with_capacity(2 * n);
    let mut gts = Vec::with_capacity(n);
    for i in 0..n {
        let image_id = format!("{:06}", i / 10);
        let x = (i % 10) as f64 * 50.0;
        gts.push(GroundTruth {
            image_id: image_id.clone(),
            class_id: 0,
            bbox: BBox::new(x, 0.0, x + 20.0, 20.0),
        });
        let jitter = (i % 7) as f64;
        dets.push(Detection {
            image_id: image_id.clone(),
            class_id: 0,
            bbox: BBox::new(x + jitter, 1.0, x + 20.0 + jitter, 21.0),
            score: 1.0 - (i % 97) as f64 / 100.0,
            frame_index: None,
        });
        dets.push(Detection {
            image_id,
            class_id: 0,
            bbox: BBox::new(x + 25.0, 30.0, x + 40.0, 45.0),
            score: (i % 89) as f64 / 100.0,
            frame_index: None,
        });
    }
    (dets, gts)
}

/// Two-class segmentation pair with a shifted square.
pub fn seg_sample(size: usize) -> SegSample {
    let square = |off: usize| -> Vec<u32> {
        (0..size * size)
            .map(|i| {
                let (x, y) = (i % size, i / size);
                u32::from(x >= size / 4 + off && x < 3 * size / 4 + off && y >= size / 4 && y < 3 * size / 4)
            })
            .collect()
    };
    SegSample::new(size, size, square(2), square(0), vec!["background".into(), "spacecraft".into()])
        .expect("valid fixture")
}
