//! Procedural stand-in assets so the pipeline runs without real imagery.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AssetsConfig, BackgroundAsset, DatasetConfig, SpriteAsset};
use crate::error::{Error, Result};
use crate::raster::{save_frame, save_mask, Band, BinaryMask, BitDepth, Frame, Sprite};

/// Ground sampling of the demo background: 700x560 px covers a 105x84 km
/// area, enough for the default 100x80 km crop.
pub const DEMO_BACKGROUND_GSD_M: f64 = 150.0;
pub const DEMO_BACKGROUND_DIMS: (usize, usize) = (700, 560);
/// Sprite capture resolution of the demo spacecraft, meters per pixel.
pub const DEMO_SPRITE_GSD_M: f64 = 0.02;
pub const DEMO_SPRITE_DIMS: (usize, usize) = (64, 40);

/// Smooth cloud-and-terrain texture from a few random sinusoids.
pub fn demo_background(width: usize, height: usize, band: Band, seed: u64) -> Result<Frame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(f64, f64, f64, f64)> = (0..12)
        .map(|_| {
            (
                rng.random_range(0.002..0.05),
                rng.random_range(0.002..0.05),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.02..0.1),
            )
        })
        .collect();
    let channels = band.channels();
    let mut data = Vec::with_capacity(width * height * channels);
    for y in 0..height {
        for x in 0..width {
            let v: f64 = waves
                .iter()
                .map(|(fx, fy, ph, amp)| amp * (fx * x as f64 + fy * y as f64 + ph).sin())
                .sum();
            let base = (0.45 + v).clamp(0.05, 0.95);
            for c in 0..channels {
                data.push((base * (1.0 - 0.08 * c as f64)) as f32);
            }
        }
    }
    Frame::from_data(width, height, band, data)
}

/// A box-shaped bus with two solar wings, hotter than the background.
pub fn demo_sprite(band: Band) -> Result<Sprite> {
    let (w, h) = DEMO_SPRITE_DIMS;
    let channels = band.channels();
    let mut alpha = BinaryMask::new(w, h);
    let mut data = vec![0.0f32; w * h * channels];
    for y in 0..h {
        for x in 0..w {
            let bus = (24..40).contains(&x) && (8..32).contains(&y);
            let wing = (16..24).contains(&y) && (2..62).contains(&x) && !(22..24).contains(&x) && !(40..42).contains(&x);
            let boom = (19..21).contains(&y) && (22..42).contains(&x);
            let v = if bus {
                0.92 - 0.004 * (y as f32 - 8.0)
            } else if wing {
                0.7 + 0.03 * ((x / 6) % 2) as f32
            } else if boom {
                0.8
            } else {
                continue;
            };
            alpha.set(x, y, true);
            for c in 0..channels {
                data[(y * w + x) * channels + c] = v;
            }
        }
    }
    let image = Frame::from_data(w, h, band, data)?;
    Sprite::new(image, alpha, DEMO_SPRITE_GSD_M)
}

/// Writes one background and one sprite (with a separate alpha mask) into
/// `dir` and returns a dataset config that references them by relative path.
pub fn write_demo_assets(dir: impl AsRef<Path>, band: Band, seed: u64) -> Result<DatasetConfig> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (bw, bh) = DEMO_BACKGROUND_DIMS;
    let bg = demo_background(bw, bh, band, seed)?;
    let sprite = demo_sprite(band)?;
    let depth = match band {
        Band::Lwir => BitDepth::Sixteen,
        Band::Rgb => BitDepth::Eight,
    };
    save_frame(dir.join("background.png"), &bg, depth)?;
    save_frame(dir.join("sprite.png"), &sprite.image, depth)?;
    save_mask(dir.join("sprite_alpha.png"), &sprite.alpha)?;
    let mut cfg = DatasetConfig::new(AssetsConfig {
        backgrounds: vec![BackgroundAsset {
            id: Some("earth".into()),
            path: "background.png".into(),
            gsd_m: DEMO_BACKGROUND_GSD_M,
        }],
        sprites: vec![SpriteAsset {
            id: Some("edge".into()),
            path: "sprite.png".into(),
            alpha: Some("sprite_alpha.png".into()),
            native_gsd_m: DEMO_SPRITE_GSD_M,
        }],
    });
    cfg.camera.band = band;
    cfg.bit_depth = if band == Band::Lwir { 16 } else { 8 };
    Ok(cfg)
}
