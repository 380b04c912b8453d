//! Scene sampling, geometric sprite scaling and rendering of composites with
//! exact labels.

mod dataset;
mod demo;

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::Annotation;
use crate::error::{Error, Result};
use crate::raster::{
    composite, resize, rotate, rotated_extent, Band, BinaryMask, BlendMode, Frame, Kernel, Sprite,
};

pub use dataset::{
    generate_dataset, AssetsConfig, BackgroundAsset, CameraConfig, DatasetConfig, LoadedAssets,
    SpriteAsset,
};
pub use demo::{
    demo_background, demo_sprite, write_demo_assets, DEMO_BACKGROUND_DIMS, DEMO_BACKGROUND_GSD_M,
    DEMO_SPRITE_DIMS, DEMO_SPRITE_GSD_M,
};

/// Orbit altitude the default camera is derived from, in meters.
pub const DEFAULT_ALTITUDE_M: f64 = 456_000.0;
/// Ground sampling distance at [`DEFAULT_ALTITUDE_M`], in meters per pixel.
pub const DEFAULT_GSD_M: f64 = 156.0;
/// Ground extent of one frame, in meters.
pub const DEFAULT_CROP_EXTENT_M: (f64, f64) = (100_000.0, 80_000.0);
pub const DEFAULT_DISTANCE_RANGE_M: (f64, f64) = (20.0, 150.0);

/// Observer optics: angular pixel pitch and detector size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub ifov_rad: f64,
    pub width_px: usize,
    pub height_px: usize,
    pub band: Band,
}

impl CameraModel {
    pub fn new(ifov_rad: f64, width_px: usize, height_px: usize, band: Band) -> Result<Self> {
        if !(ifov_rad.is_finite() && ifov_rad > 0.0) {
            return Err(Error::invalid(format!("ifov must be positive, got {ifov_rad}")));
        }
        if width_px == 0 || height_px == 0 {
            return Err(Error::invalid(format!(
                "detector must be non-empty, got {width_px}x{height_px}"
            )));
        }
        Ok(CameraModel {
            ifov_rad,
            width_px,
            height_px,
            band,
        })
    }

    /// Meters covered by one pixel at `range_m`.
    pub fn gsd_at(&self, range_m: f64) -> f64 {
        self.ifov_rad * range_m
    }
}

impl Default for CameraModel {
    /// 641x512 LWIR detector, 156 m GSD from 456 km.
    fn default() -> Self {
        let (w, h) = frame_dims_for_crop(DEFAULT_CROP_EXTENT_M, DEFAULT_GSD_M)
            .expect("default geometry is valid");
        camera_from_orbit(DEFAULT_GSD_M, DEFAULT_ALTITUDE_M, w, h).expect("default geometry is valid")
    }
}

/// Camera whose IFOV reproduces `gsd_m` when looking down from `altitude_m`.
pub fn camera_from_orbit(
    gsd_m: f64,
    altitude_m: f64,
    width_px: usize,
    height_px: usize,
) -> Result<CameraModel> {
    if !(gsd_m.is_finite() && gsd_m > 0.0) || !(altitude_m.is_finite() && altitude_m > 0.0) {
        return Err(Error::invalid(format!(
            "gsd and altitude must be positive, got gsd {gsd_m} m, altitude {altitude_m} m"
        )));
    }
    CameraModel::new(gsd_m / altitude_m, width_px, height_px, Band::Lwir)
}

/// Pixel dimensions of a ground crop: `floor(extent / gsd)` per axis.
pub fn frame_dims_for_crop(extent_m: (f64, f64), gsd_m: f64) -> Result<(usize, usize)> {
    if !(gsd_m.is_finite() && gsd_m > 0.0) {
        return Err(Error::invalid(format!("gsd must be positive, got {gsd_m}")));
    }
    let w = (extent_m.0 / gsd_m).floor();
    let h = (extent_m.1 / gsd_m).floor();
    if !(w >= 1.0 && h >= 1.0) {
        return Err(Error::invalid(format!(
            "crop {} x {} m is smaller than one {gsd_m} m pixel",
            extent_m.0, extent_m.1
        )));
    }
    Ok((w as usize, h as usize))
}

/// Linear resampling factor that brings a sprite captured at its native GSD
/// to the apparent GSD at `distance_m`.
pub fn sprite_scale(distance_m: f64, camera: &CameraModel, sprite: &Sprite) -> Result<f64> {
    scale_for(distance_m, camera, sprite.native_gsd_m)
}

fn scale_for(distance_m: f64, camera: &CameraModel, native_gsd_m: f64) -> Result<f64> {
    if !(distance_m.is_finite() && distance_m > 0.0) {
        return Err(Error::invalid(format!("distance must be positive, got {distance_m}")));
    }
    Ok(native_gsd_m / (distance_m * camera.ifov_rad))
}

/// Pixel dimensions of a sprite after scaling, before rotation. Rounded to
/// nearest so the apparent size is unbiased across distance.
fn scaled_dims(width: usize, height: usize, scale: f64) -> (usize, usize) {
    (
        ((width as f64 * scale).round() as usize).max(1),
        ((height as f64 * scale).round() as usize).max(1),
    )
}

/// Sampling ranges and rendering choices shared by every scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub distance_range_m: (f64, f64),
    pub p_multiply: f64,
    /// Multiplicative sprite intensity factor range; `None` disables jitter.
    pub contrast_jitter_range: Option<(f64, f64)>,
    pub kernel: Kernel,
    pub crop_extent_m: (f64, f64),
    /// Random crop origin inside each background; otherwise the top-left.
    pub random_crop: bool,
    /// Let sprites hang over the frame edge (clipped). Off by default.
    pub allow_partial: bool,
    pub class_id: u32,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            distance_range_m: DEFAULT_DISTANCE_RANGE_M,
            p_multiply: 0.5,
            contrast_jitter_range: Some((0.8, 1.2)),
            kernel: Kernel::Bilinear,
            crop_extent_m: DEFAULT_CROP_EXTENT_M,
            random_crop: true,
            allow_partial: false,
            class_id: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.distance_range_m;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return Err(Error::invalid(format!("bad distance range [{lo}, {hi}]")));
        }
        if !(0.0..=1.0).contains(&self.p_multiply) {
            return Err(Error::invalid(format!("p_multiply {} outside [0, 1]", self.p_multiply)));
        }
        if let Some((a, b)) = self.contrast_jitter_range {
            if !(a.is_finite() && b.is_finite() && a > 0.0 && a <= b) {
                return Err(Error::invalid(format!("bad contrast jitter range [{a}, {b}]")));
            }
        }
        let (cw, ch) = self.crop_extent_m;
        if !(cw > 0.0 && ch > 0.0) {
            return Err(Error::invalid(format!("bad crop extent {cw} x {ch} m")));
        }
        Ok(())
    }
}

/// Geometry a sampler needs to know about one background source.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundInfo {
    pub id: String,
    pub width_px: usize,
    pub height_px: usize,
    pub gsd_m: f64,
}

/// Geometry a sampler needs to know about one sprite.
#[derive(Debug, Clone, PartialEq)]
pub struct SpriteInfo {
    pub id: String,
    pub width_px: usize,
    pub height_px: usize,
    pub native_gsd_m: f64,
}

/// Everything needed to reproduce one composite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub index: u64,
    pub background_id: String,
    pub sprite_id: String,
    /// Crop origin in the background source, meters from its top-left.
    pub crop_origin_m: (f64, f64),
    pub distance_m: f64,
    pub orientation_rad: f64,
    /// Top-left of the rotated sprite canvas, in frame pixels.
    pub position_px: (i64, i64),
    pub blend: BlendMode,
    pub contrast_jitter: f64,
}

impl SceneSpec {
    pub fn image_id(&self) -> String {
        format!("{:06}", self.index)
    }
}

/// Counter-based generator: the stream for scene `index` depends only on
/// `(master_seed, index)`.
pub fn scene_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Draws the parameters of scene `index`.
pub fn sample_scene(
    master_seed: u64,
    index: u64,
    config: &SceneConfig,
    camera: &CameraModel,
    backgrounds: &[BackgroundInfo],
    sprites: &[SpriteInfo],
) -> Result<SceneSpec> {
    config.validate()?;
    if backgrounds.is_empty() || sprites.is_empty() {
        return Err(Error::invalid("at least one background and one sprite are required"));
    }
    let mut rng = scene_rng(master_seed, index);

    let bg = &backgrounds[rng.random_range(0..backgrounds.len())];
    let sp = &sprites[rng.random_range(0..sprites.len())];

    let (crop_w, crop_h) = crop_pixels(bg, config)?;
    let crop_origin_m = if config.random_crop {
        let ox = rng.random_range(0..=bg.width_px - crop_w);
        let oy = rng.random_range(0..=bg.height_px - crop_h);
        (ox as f64 * bg.gsd_m, oy as f64 * bg.gsd_m)
    } else {
        (0.0, 0.0)
    };

    let (d_lo, d_hi) = config.distance_range_m;
    let distance_m = if d_lo < d_hi {
        rng.random_range(d_lo..=d_hi)
    } else {
        d_lo
    };
    let orientation_rad = rng.random_range(0.0..TAU);
    let blend = if rng.random_bool(config.p_multiply) {
        BlendMode::Multiply
    } else {
        BlendMode::Replace
    };
    let contrast_jitter = match config.contrast_jitter_range {
        Some((a, b)) if a < b => rng.random_range(a..=b),
        Some((a, _)) => a,
        None => 1.0,
    };

    // Worst case over orientation at the nearest range bounds every draw;
    // the extra pixel covers the canvas parity padding.
    let nearest = scale_for(d_lo, camera, sp.native_gsd_m)?;
    let (nw, nh) = scaled_dims(sp.width_px, sp.height_px, nearest);
    let diag = ((nw * nw + nh * nh) as f64).sqrt().ceil() as usize + 1;
    if !config.allow_partial && (diag > camera.width_px || diag > camera.height_px) {
        return Err(Error::UnsatisfiablePlacement(format!(
            "sprite `{}` spans up to {diag} px at {d_lo} m but the frame is {}x{}",
            sp.id, camera.width_px, camera.height_px
        )));
    }

    let scale = scale_for(distance_m, camera, sp.native_gsd_m)?;
    let (sw, sh) = scaled_dims(sp.width_px, sp.height_px, scale);
    let (rw, rh) = rotated_extent(sw, sh, orientation_rad);
    let (fw, fh) = (camera.width_px as i64, camera.height_px as i64);
    let (rw, rh) = (rw as i64, rh as i64);
    let position_px = if config.allow_partial {
        // sprite centre anywhere in the frame
        (
            rng.random_range(0..fw) - rw / 2,
            rng.random_range(0..fh) - rh / 2,
        )
    } else {
        (rng.random_range(0..=fw - rw), rng.random_range(0..=fh - rh))
    };

    Ok(SceneSpec {
        seed: master_seed,
        index,
        background_id: bg.id.clone(),
        sprite_id: sp.id.clone(),
        crop_origin_m,
        distance_m,
        orientation_rad,
        position_px,
        blend,
        contrast_jitter,
    })
}

fn crop_pixels(bg: &BackgroundInfo, config: &SceneConfig) -> Result<(usize, usize)> {
    let (cw, ch) = frame_dims_for_crop(config.crop_extent_m, bg.gsd_m)?;
    if cw > bg.width_px || ch > bg.height_px {
        return Err(Error::invalid(format!(
            "background `{}` is {}x{} px at {} m/px, too small for a {} x {} m crop",
            bg.id, bg.width_px, bg.height_px, bg.gsd_m, config.crop_extent_m.0, config.crop_extent_m.1
        )));
    }
    Ok((cw, ch))
}

/// Cuts the scene's ground crop out of a background source and resamples it
/// to the camera's detector size.
pub fn prepare_background(
    source: &Frame,
    source_gsd_m: f64,
    spec: &SceneSpec,
    config: &SceneConfig,
    camera: &CameraModel,
) -> Result<Frame> {
    let info = BackgroundInfo {
        id: spec.background_id.clone(),
        width_px: source.width(),
        height_px: source.height(),
        gsd_m: source_gsd_m,
    };
    let (cw, ch) = crop_pixels(&info, config)?;
    let ox = (spec.crop_origin_m.0 / source_gsd_m).round() as usize;
    let oy = (spec.crop_origin_m.1 / source_gsd_m).round() as usize;
    let crop = source.crop(ox, oy, cw, ch)?;
    Ok(resize(&crop, camera.width_px, camera.height_px, config.kernel))
}

/// Renders one composite and its exact annotation. `background` must already
/// match the camera's detector size.
pub fn render_scene(
    spec: &SceneSpec,
    background: &Frame,
    sprite: &Sprite,
    camera: &CameraModel,
    config: &SceneConfig,
) -> Result<(Frame, Annotation)> {
    if background.width() != camera.width_px || background.height() != camera.height_px {
        return Err(Error::shape(
            format!("{}x{} background", camera.width_px, camera.height_px),
            format!("{}x{} background", background.width(), background.height()),
        ));
    }
    let scale = sprite_scale(spec.distance_m, camera, sprite)?;
    let (sw, sh) = scaled_dims(sprite.image.width(), sprite.image.height(), scale);
    let mut image = resize(&sprite.image, sw, sh, config.kernel);
    let alpha = if (sw, sh) == (sprite.alpha.width(), sprite.alpha.height()) {
        sprite.alpha.clone()
    } else {
        sprite.alpha.resize_nearest(sw, sh)
    };
    if spec.contrast_jitter != 1.0 {
        image.scale_intensity(spec.contrast_jitter);
    }
    let (image, alpha) = rotate(&image, spec.orientation_rad, 0.0, Some(&alpha), config.kernel)?;

    let (placed, top_left) = clip_to_frame(image, alpha, spec.position_px, background)?;
    let frame = composite(background, &placed, top_left, spec.blend)?;

    let mut mask = BinaryMask::new(background.width(), background.height());
    let (x0, y0) = (top_left.0 as usize, top_left.1 as usize);
    for y in 0..placed.alpha.height() {
        for x in 0..placed.alpha.width() {
            if placed.alpha.get(x, y) {
                mask.set(x0 + x, y0 + y, true);
            }
        }
    }
    if mask.count() == 0 {
        return Err(Error::Placement(format!(
            "scene {}: sprite covers no pixels at {} m",
            spec.index, spec.distance_m
        )));
    }
    let mut frame = frame;
    frame.frame_index = spec.index;
    let annotation = Annotation::from_mask(spec.image_id(), config.class_id, &mask)?;
    Ok((frame, annotation))
}

/// Crops the part of a placed sprite that hangs outside the frame. A sprite
/// fully inside passes through untouched.
fn clip_to_frame(
    image: Frame,
    alpha: BinaryMask,
    pos: (i64, i64),
    background: &Frame,
) -> Result<(Sprite, (i64, i64))> {
    let (w, h) = (image.width() as i64, image.height() as i64);
    let (fw, fh) = (background.width() as i64, background.height() as i64);
    let x0 = pos.0.max(0);
    let y0 = pos.1.max(0);
    let x1 = (pos.0 + w).min(fw);
    let y1 = (pos.1 + h).min(fh);
    let sprite = |image, alpha| Sprite {
        image,
        alpha,
        native_gsd_m: 1.0,
    };
    if (x0, y0, x1, y1) == (pos.0, pos.1, pos.0 + w, pos.1 + h) {
        return Ok((sprite(image, alpha), pos));
    }
    if x0 >= x1 || y0 >= y1 {
        return Err(Error::Placement(format!(
            "{w}x{h} sprite at ({}, {}) lies outside the {fw}x{fh} frame",
            pos.0, pos.1
        )));
    }
    let (cx, cy) = ((x0 - pos.0) as usize, (y0 - pos.1) as usize);
    let (cw, ch) = ((x1 - x0) as usize, (y1 - y0) as usize);
    let cropped = image.crop(cx, cy, cw, ch)?;
    let mut cmask = BinaryMask::new(cw, ch);
    for y in 0..ch {
        for x in 0..cw {
            cmask.set(x, y, alpha.get(cx + x, cy + y));
        }
    }
    Ok((sprite(cropped, cmask), (x0, y0)))
}
