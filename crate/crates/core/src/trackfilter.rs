//! Multi-frame background rejection. Detections are linked into tracks by
//! greedy nearest-neighbour association, each track gets a least-squares
//! pixel velocity, and tracks whose velocity departs from the expected
//! background flow by more than a threshold are flagged as targets.

use std::collections::BTreeMap;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Detection;
use crate::raster::Frame;

/// Minimum number of tracks with velocity for the median flow estimate.
pub const MIN_TRACKS_FOR_MEDIAN: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: usize,
    /// Frame index of each detection, strictly increasing.
    pub frames: Vec<u64>,
    pub detections: Vec<Detection>,
    /// Least-squares slope of centre vs frame index; `None` below two frames.
    pub velocity_px_per_frame: Option<(f64, f64)>,
}

impl Track {
    fn start(id: usize, frame: u64, det: Detection) -> Self {
        Track {
            id,
            frames: vec![frame],
            detections: vec![det],
            velocity_px_per_frame: None,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    fn last_frame(&self) -> u64 {
        *self.frames.last().expect("tracks are never empty")
    }

    fn last_center(&self) -> (f64, f64) {
        self.detections.last().expect("tracks are never empty").bbox.center()
    }

    fn push(&mut self, frame: u64, det: Detection) {
        self.frames.push(frame);
        self.detections.push(det);
        self.velocity_px_per_frame = fit_velocity(&self.frames, &self.detections);
    }

    /// Expected centre at `frame`, extrapolating the current velocity.
    fn predict(&self, frame: u64) -> (f64, f64) {
        let (x, y) = self.last_center();
        let dt = frame as f64 - self.last_frame() as f64;
        let (vx, vy) = self.velocity_px_per_frame.unwrap_or((0.0, 0.0));
        (x + vx * dt, y + vy * dt)
    }
}

fn fit_velocity(frames: &[u64], dets: &[Detection]) -> Option<(f64, f64)> {
    if frames.len() < 2 {
        return None;
    }
    let n = frames.len() as f64;
    let t_mean = frames.iter().map(|t| *t as f64).sum::<f64>() / n;
    let centers: Vec<(f64, f64)> = dets.iter().map(|d| d.bbox.center()).collect();
    let x_mean = centers.iter().map(|c| c.0).sum::<f64>() / n;
    let y_mean = centers.iter().map(|c| c.1).sum::<f64>() / n;
    let (mut stt, mut stx, mut sty) = (0.0, 0.0, 0.0);
    for (t, (x, y)) in frames.iter().zip(&centers) {
        let dt = *t as f64 - t_mean;
        stt += dt * dt;
        stx += dt * (x - x_mean);
        sty += dt * (y - y_mean);
    }
    Some((stx / stt, sty / stt))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssociationParams {
    pub gate_px: f64,
    /// Largest frame-index step over which a track may still be extended;
    /// 1 links consecutive frames only.
    pub max_gap_frames: u64,
}

impl AssociationParams {
    pub fn new(gate_px: f64) -> Self {
        AssociationParams {
            gate_px,
            max_gap_frames: 1,
        }
    }
}

/// Frame-to-frame association with gate `gate_px`; `frames[i]` holds the
/// detections of frame `i`.
pub fn associate(frames: &[Vec<Detection>], gate_px: f64) -> Result<Vec<Track>> {
    let indexed: Vec<(u64, &[Detection])> = frames
        .iter()
        .enumerate()
        .map(|(i, f)| (i as u64, f.as_slice()))
        .collect();
    associate_with(&indexed, &AssociationParams::new(gate_px))
}

/// Greedy nearest-neighbour association. For each frame, all
/// (detection, track) pairs within the gate are ranked by distance to the
/// track's predicted position, ties broken by lower detection index and then
/// lower track id, and claimed greedily. Unclaimed detections start tracks.
pub fn associate_with(frames: &[(u64, &[Detection])], params: &AssociationParams) -> Result<Vec<Track>> {
    if !(params.gate_px.is_finite() && params.gate_px > 0.0) {
        return Err(Error::invalid(format!("gate must be positive, got {}", params.gate_px)));
    }
    if frames.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(Error::invalid("frame indices must be strictly increasing"));
    }
    let mut tracks: Vec<Track> = Vec::new();
    for &(frame, dets) in frames {
        let live: Vec<usize> = tracks
            .iter()
            .enumerate()
            .filter(|(_, t)| frame - t.last_frame() <= params.max_gap_frames)
            .map(|(i, _)| i)
            .collect();
        let mut pairs = Vec::new();
        for (di, d) in dets.iter().enumerate() {
            let (cx, cy) = d.bbox.center();
            for &ti in &live {
                let (px, py) = tracks[ti].predict(frame);
                let dist = (cx - px).hypot(cy - py);
                if dist <= params.gate_px {
                    pairs.push((dist, di, ti));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut det_taken = vec![false; dets.len()];
        let mut track_taken = vec![false; tracks.len()];
        for (_, di, ti) in pairs {
            if det_taken[di] || track_taken[ti] {
                continue;
            }
            det_taken[di] = true;
            track_taken[ti] = true;
            tracks[ti].push(frame, dets[di].clone());
        }
        for (di, d) in dets.iter().enumerate() {
            if !det_taken[di] {
                let id = tracks.len();
                tracks.push(Track::start(id, frame, d.clone()));
            }
        }
    }
    Ok(tracks)
}

/// Groups detections by `frame_index` (missing indices count as frame 0),
/// keeping input order within a frame.
pub fn group_by_frame(dets: &[Detection]) -> BTreeMap<u64, Vec<Detection>> {
    let mut out: BTreeMap<u64, Vec<Detection>> = BTreeMap::new();
    for d in dets {
        out.entry(d.frame_index.unwrap_or(0)).or_default().push(d.clone());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowSource {
    EphemerisConfig,
    MedianOfTracks,
    PhaseCorrelation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowEstimate {
    pub background_velocity_px_per_frame: (f64, f64),
    pub source: FlowSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowMode {
    EphemerisConfig,
    MedianOfTracks,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Expected background motion: either the configured flow verbatim or the
/// component-wise median of track velocities.
pub fn background_flow(
    tracks: &[Track],
    mode: FlowMode,
    config_flow: Option<(f64, f64)>,
) -> Result<FlowEstimate> {
    match mode {
        FlowMode::EphemerisConfig => {
            let v = config_flow
                .ok_or_else(|| Error::invalid("ephemeris flow mode needs a configured flow"))?;
            if !(v.0.is_finite() && v.1.is_finite()) {
                return Err(Error::invalid(format!("flow {v:?} is not finite")));
            }
            Ok(FlowEstimate {
                background_velocity_px_per_frame: v,
                source: FlowSource::EphemerisConfig,
            })
        }
        FlowMode::MedianOfTracks => {
            let vs: Vec<(f64, f64)> = tracks.iter().filter_map(|t| t.velocity_px_per_frame).collect();
            if vs.len() < MIN_TRACKS_FOR_MEDIAN {
                return Err(Error::InsufficientTracks {
                    needed: MIN_TRACKS_FOR_MEDIAN,
                    have: vs.len(),
                });
            }
            let mut xs: Vec<f64> = vs.iter().map(|v| v.0).collect();
            let mut ys: Vec<f64> = vs.iter().map(|v| v.1).collect();
            Ok(FlowEstimate {
                background_velocity_px_per_frame: (median(&mut xs), median(&mut ys)),
                source: FlowSource::MedianOfTracks,
            })
        }
    }
}

/// Global translation of `next` relative to `prev` by phase correlation,
/// with a Hann window and parabolic sub-pixel refinement. Uses the first
/// channel.
pub fn phase_correlation_flow(prev: &Frame, next: &Frame) -> Result<FlowEstimate> {
    if prev.width() != next.width() || prev.height() != next.height() {
        return Err(Error::shape(
            format!("{}x{}", prev.width(), prev.height()),
            format!("{}x{}", next.width(), next.height()),
        ));
    }
    let (w, h) = (prev.width(), prev.height());
    let hann = |n: usize| -> Vec<f64> {
        if n < 3 {
            return vec![1.0; n];
        }
        (0..n)
            .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / (n - 1) as f64).cos())
            .collect()
    };
    let (wx, wy) = (hann(w), hann(h));
    // the window suppresses the wrap-around edge of non-periodic frames
    let plane = |f: &Frame| -> Vec<Complex<f64>> {
        let mean = (0..w * h).map(|i| f.get(i % w, i / w, 0) as f64).sum::<f64>() / (w * h) as f64;
        (0..w * h)
            .map(|i| Complex::new((f.get(i % w, i / w, 0) as f64 - mean) * wx[i % w] * wy[i / w], 0.0))
            .collect()
    };
    let mut planner = FftPlanner::<f64>::new();
    let mut a = plane(prev);
    let mut b = plane(next);
    fft2(&mut planner, &mut a, w, h, false);
    fft2(&mut planner, &mut b, w, h, false);
    let mut r: Vec<Complex<f64>> = b
        .iter()
        .zip(&a)
        .map(|(fb, fa)| {
            let c = fb * fa.conj();
            let m = c.norm();
            if m > 1e-12 {
                c / m
            } else {
                Complex::new(0.0, 0.0)
            }
        })
        .collect();
    fft2(&mut planner, &mut r, w, h, true);

    let (mut best, mut bx, mut by) = (f64::NEG_INFINITY, 0usize, 0usize);
    for y in 0..h {
        for x in 0..w {
            let v = r[y * w + x].re;
            if v > best {
                best = v;
                bx = x;
                by = y;
            }
        }
    }
    let at = |x: usize, y: usize| r[y * w + x].re;
    let refine = |m1: f64, c: f64, p1: f64| {
        let denom = m1 - 2.0 * c + p1;
        if denom.abs() < 1e-12 {
            0.0
        } else {
            (0.5 * (m1 - p1) / denom).clamp(-0.5, 0.5)
        }
    };
    let sub_x = if w >= 3 {
        refine(at((bx + w - 1) % w, by), best, at((bx + 1) % w, by))
    } else {
        0.0
    };
    let sub_y = if h >= 3 {
        refine(at(bx, (by + h - 1) % h), best, at(bx, (by + 1) % h))
    } else {
        0.0
    };
    let wrap = |p: usize, n: usize| if p > n / 2 { p as f64 - n as f64 } else { p as f64 };
    Ok(FlowEstimate {
        background_velocity_px_per_frame: (wrap(bx, w) + sub_x, wrap(by, h) + sub_y),
        source: FlowSource::PhaseCorrelation,
    })
}

fn fft2(planner: &mut FftPlanner<f64>, data: &mut [Complex<f64>], w: usize, h: usize, inverse: bool) {
    let row = if inverse { planner.plan_fft_inverse(w) } else { planner.plan_fft_forward(w) };
    for chunk in data.chunks_mut(w) {
        row.process(chunk);
    }
    let col = if inverse { planner.plan_fft_inverse(h) } else { planner.plan_fft_forward(h) };
    let mut buf = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            buf[y] = data[y * w + x];
        }
        col.process(&mut buf);
        for y in 0..h {
            data[y * w + x] = buf[y];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackLabel {
    Target,
    Background,
    /// Single-frame track; no velocity to compare.
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledTrack {
    #[serde(flatten)]
    pub track: Track,
    pub label: TrackLabel,
    /// `|v_track - v_background|`, absent for unknown tracks.
    pub residual_px_per_frame: Option<f64>,
}

/// Labels each track by its velocity residual against the background flow:
/// above `residual_thresh_px` is a target, otherwise background.
pub fn classify(tracks: &[Track], flow: &FlowEstimate, residual_thresh_px: f64) -> Result<Vec<LabeledTrack>> {
    if !(residual_thresh_px.is_finite() && residual_thresh_px > 0.0) {
        return Err(Error::invalid(format!(
            "residual threshold must be positive, got {residual_thresh_px}"
        )));
    }
    let (bx, by) = flow.background_velocity_px_per_frame;
    Ok(tracks
        .iter()
        .map(|t| {
            let residual = t
                .velocity_px_per_frame
                .map(|(vx, vy)| (vx - bx).hypot(vy - by));
            let label = match residual {
                None => TrackLabel::Unknown,
                Some(r) if r > residual_thresh_px => TrackLabel::Target,
                Some(_) => TrackLabel::Background,
            };
            LabeledTrack {
                track: t.clone(),
                label,
                residual_px_per_frame: residual,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelCounts {
    pub target: usize,
    pub background: usize,
    pub unknown: usize,
}

pub fn count_labels(tracks: &[LabeledTrack]) -> LabelCounts {
    let mut c = LabelCounts::default();
    for t in tracks {
        match t.label {
            TrackLabel::Target => c.target += 1,
            TrackLabel::Background => c.background += 1,
            TrackLabel::Unknown => c.unknown += 1,
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::BBox;
    use crate::raster::Band;

    fn det_at(cx: f64, cy: f64, frame: u64) -> Detection {
        Detection {
            image_id: format!("{frame}"),
            class_id: 0,
            bbox: BBox::new(cx - 2.0, cy - 2.0, cx + 2.0, cy + 2.0),
            score: 0.9,
            frame_index: Some(frame),
        }
    }

    fn track_with_velocity(v: (f64, f64)) -> Track {
        Track {
            id: 0,
            frames: vec![0, 1],
            detections: vec![det_at(0.0, 0.0, 0), det_at(v.0, v.1, 1)],
            velocity_px_per_frame: Some(v),
        }
    }

    #[test]
    fn constant_motion_forms_one_track() {
        let frames: Vec<Vec<Detection>> =
            (0..5).map(|t| vec![det_at(10.0 + 2.0 * t as f64, 20.0, t)]).collect();
        let tracks = associate(&frames, 10.0).unwrap();
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].len(), 5);
        let (vx, vy) = tracks[0].velocity_px_per_frame.unwrap();
        assert!((vx - 2.0).abs() < 1e-12 && vy.abs() < 1e-12);
    }

    #[test]
    fn gating_splits_distant_detections() {
        let frames = vec![vec![det_at(0.0, 0.0, 0)], vec![det_at(100.0, 0.0, 1)]];
        assert_eq!(associate(&frames, 10.0).unwrap().len(), 2);
    }

    #[test]
    fn single_frame_has_no_velocity() {
        let frames = vec![vec![det_at(0.0, 0.0, 0), det_at(50.0, 0.0, 0)]];
        let tracks = associate(&frames, 10.0).unwrap();
        assert_eq!(tracks.len(), 2);
        assert!(tracks.iter().all(|t| t.velocity_px_per_frame.is_none()));
        assert!(associate(&frames, 0.0).is_err());
    }

    #[test]
    fn empty_frames_and_gaps() {
        let tracks = associate(&[vec![], vec![]], 5.0).unwrap();
        assert!(tracks.is_empty());
        // a missed frame ends a track under the default gap of one frame
        let frames = vec![vec![det_at(0.0, 0.0, 0)], vec![], vec![det_at(1.0, 0.0, 2)]];
        assert_eq!(associate(&frames, 5.0).unwrap().len(), 2);
        let dets: Vec<Detection> = frames.iter().flatten().cloned().collect();
        let grouped: Vec<(u64, Vec<Detection>)> = group_by_frame(&dets).into_iter().collect();
        let view: Vec<(u64, &[Detection])> = grouped.iter().map(|(f, d)| (*f, d.as_slice())).collect();
        let params = AssociationParams {
            gate_px: 5.0,
            max_gap_frames: 2,
        };
        assert_eq!(associate_with(&view, &params).unwrap().len(), 1);
    }

    #[test]
    fn tie_break_prefers_lower_detection_index() {
        let frames = vec![
            vec![det_at(0.0, 0.0, 0)],
            vec![det_at(1.0, 0.0, 1), det_at(-1.0, 0.0, 1)],
        ];
        let tracks = associate(&frames, 5.0).unwrap();
        assert_eq!(tracks.len(), 2);
        assert_eq!(tracks[0].detections[1].bbox.center().0, 1.0);
    }

    #[test]
    fn flow_modes() {
        let f = background_flow(&[], FlowMode::EphemerisConfig, Some((5.0, 0.0))).unwrap();
        assert_eq!(f.background_velocity_px_per_frame, (5.0, 0.0));
        assert_eq!(f.source, FlowSource::EphemerisConfig);
        assert!(background_flow(&[], FlowMode::EphemerisConfig, None).is_err());

        let tracks: Vec<Track> = [(5.0, 0.0), (5.1, 0.1), (4.9, -0.1), (1.0, 2.0)]
            .into_iter()
            .map(track_with_velocity)
            .collect();
        let m = background_flow(&tracks, FlowMode::MedianOfTracks, None).unwrap();
        let (mx, my) = m.background_velocity_px_per_frame;
        // even count: mean of the two middle values per component
        assert!((mx - 4.95).abs() < 1e-12);
        assert!((my - 0.05).abs() < 1e-12);
        let m3 = background_flow(&tracks[..3], FlowMode::MedianOfTracks, None).unwrap();
        assert_eq!(m3.background_velocity_px_per_frame, (5.0, 0.0));

        let err = background_flow(&tracks[..2], FlowMode::MedianOfTracks, None).unwrap_err();
        assert!(matches!(err, Error::InsufficientTracks { needed: 3, have: 2 }));
    }

    #[test]
    fn classification_fixtures() {
        let flow = FlowEstimate {
            background_velocity_px_per_frame: (5.0, 0.0),
            source: FlowSource::EphemerisConfig,
        };
        let tracks = vec![
            track_with_velocity((1.0, 2.0)),
            track_with_velocity((5.1, 0.05)),
            track_with_velocity((5.0, 0.0)),
            Track::start(3, 0, det_at(0.0, 0.0, 0)),
        ];
        let out = classify(&tracks, &flow, 1.0).unwrap();
        assert_eq!(out[0].label, TrackLabel::Target);
        assert!((out[0].residual_px_per_frame.unwrap() - 20f64.sqrt()).abs() < 1e-12);
        assert_eq!(out[1].label, TrackLabel::Background);
        assert!((out[1].residual_px_per_frame.unwrap() - 0.0125f64.sqrt()).abs() < 1e-12);
        assert_eq!(out[2].label, TrackLabel::Background);
        assert_eq!(out[2].residual_px_per_frame, Some(0.0));
        assert_eq!(out[3].label, TrackLabel::Unknown);
        assert_eq!(
            count_labels(&out),
            LabelCounts {
                target: 1,
                background: 2,
                unknown: 1
            }
        );
        assert!(classify(&tracks, &flow, 0.0).is_err());
    }

    #[test]
    fn phase_correlation_recovers_integer_shift() {
        use rand::{Rng, SeedableRng};
        let (fw, fh) = (80usize, 64usize);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let field: Vec<f32> = (0..fw * fh).map(|_| rng.random()).collect();
        let field = Frame::from_data(fw, fh, Band::Lwir, field).unwrap();
        // content moves by (dx, dy): the later crop starts (dx, dy) earlier
        let make = |dx: i64, dy: i64| field.crop((8 - dx) as usize, (8 - dy) as usize, 64, 48).unwrap();
        let est = phase_correlation_flow(&make(0, 0), &make(5, -3)).unwrap();
        let (vx, vy) = est.background_velocity_px_per_frame;
        assert!((vx - 5.0).abs() < 0.1, "{vx}");
        assert!((vy + 3.0).abs() < 0.1, "{vy}");
        assert_eq!(est.source, FlowSource::PhaseCorrelation);
    }
}
