//! Latency harness: run a predictor through warmup passes, then time each of
//! `n_passes` calls individually with a monotonic clock.

use std::fmt::Display;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Band, Frame};

pub const DEFAULT_PASSES: usize = 500;
pub const DEFAULT_WARMUP: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSpec {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl Default for InputSpec {
    fn default() -> Self {
        InputSpec {
            width: 832,
            height: 832,
            channels: 3,
        }
    }
}

impl InputSpec {
    /// Mid-grey frame matching the spec.
    pub fn make_frame(&self) -> Result<Frame> {
        let band = match self.channels {
            1 => Band::Lwir,
            3 => Band::Rgb,
            c => return Err(Error::invalid(format!("input must have 1 or 3 channels, got {c}"))),
        };
        Frame::filled(self.width, self.height, band, 0.5)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n_passes: usize,
    pub warmup_passes: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub input_spec: InputSpec,
}

impl BenchReport {
    pub fn from_samples(samples_ms: &[f64], warmup_passes: usize, input_spec: InputSpec) -> Result<Self> {
        if samples_ms.is_empty() {
            return Err(Error::invalid("no timing samples"));
        }
        let mut sorted = samples_ms.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(BenchReport {
            n_passes: sorted.len(),
            warmup_passes,
            mean_ms: sorted.iter().sum::<f64>() / sorted.len() as f64,
            p50_ms: nearest_rank(&sorted, 50.0),
            p95_ms: nearest_rank(&sorted, 95.0),
            min_ms: sorted[0],
            max_ms: sorted[sorted.len() - 1],
            input_spec,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Nearest-rank percentile of ascending `sorted`.
pub fn nearest_rank(sorted: &[f64], pct: f64) -> f64 {
    let n = sorted.len();
    let rank = ((pct / 100.0) * n as f64 - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

/// Times `predictor` on one fixed input. Warmup passes run first and are not
/// recorded; a predictor error aborts with the phase and pass index.
pub fn benchmark<T, E, F>(mut predictor: F, input_spec: InputSpec, n_passes: usize, warmup: usize) -> Result<BenchReport>
where
    F: FnMut(&Frame) -> std::result::Result<T, E>,
    E: Display,
{
    if n_passes == 0 {
        return Err(Error::invalid("n_passes must be at least 1"));
    }
    let input = input_spec.make_frame()?;
    for pass in 0..warmup {
        if let Err(e) = predictor(&input) {
            return Err(Error::BenchAborted {
                phase: "warmup",
                pass,
                message: e.to_string(),
            });
        }
    }
    let mut samples = Vec::with_capacity(n_passes);
    for pass in 0..n_passes {
        let start = Instant::now();
        let out = predictor(&input);
        let elapsed = start.elapsed();
        match out {
            Ok(v) => drop(std::hint::black_box(v)),
            Err(e) => {
                return Err(Error::BenchAborted {
                    phase: "timed",
                    pass,
                    message: e.to_string(),
                })
            }
        }
        samples.push(elapsed.as_secs_f64() * 1e3);
    }
    BenchReport::from_samples(&samples, warmup, input_spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    fn small() -> InputSpec {
        InputSpec {
            width: 8,
            height: 8,
            channels: 3,
        }
    }

    #[test]
    fn nearest_rank_percentiles() {
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(nearest_rank(&v, 50.0), 10.0);
        assert_eq!(nearest_rank(&v, 95.0), 19.0);
        assert_eq!(nearest_rank(&v, 100.0), 20.0);
        assert_eq!(nearest_rank(&[3.0], 95.0), 3.0);
    }

    #[test]
    fn noop_is_fast_and_well_formed() {
        let r = benchmark(|_| Ok::<_, Infallible>(()), small(), 100, 3).unwrap();
        assert_eq!((r.n_passes, r.warmup_passes), (100, 3));
        assert!(r.mean_ms < 1.0);
        assert!(r.min_ms <= r.p50_ms && r.p50_ms <= r.p95_ms && r.p95_ms <= r.max_ms);
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(json["n_passes"], 100);
        assert_eq!(json["input_spec"]["channels"], 3);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            benchmark(|_| Ok::<_, Infallible>(()), small(), 0, 0),
            Err(Error::InvalidArgument(_))
        ));
        let mut calls = 0;
        let err = benchmark(
            |_| {
                calls += 1;
                if calls == 7 {
                    Err("boom")
                } else {
                    Ok(())
                }
            },
            small(),
            10,
            2,
        )
        .unwrap_err();
        match err {
            Error::BenchAborted { phase, pass, message } => {
                assert_eq!((phase, pass, message.as_str()), ("timed", 4, "boom"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn default_input_is_832_rgb() {
        let f = InputSpec::default().make_frame().unwrap();
        assert_eq!((f.width(), f.height(), f.channels()), (832, 832, 3));
    }
}
