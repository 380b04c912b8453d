//! Normalized-intensity rasters and the resampling, rotation and compositing
//! kernels that operate on them.
//!
//! All intensities live in `[0, 1]` regardless of the source bit depth.
//! Every kernel clamps its output back into that range.

mod composite;
mod io;
mod kernel;
mod rotate;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use composite::{composite, BlendMode};
pub use io::{load_frame, load_mask, load_sprite, save_frame, save_mask, BitDepth};
pub use kernel::{catmull_rom, interpolate, Kernel};
pub use rotate::{rotate, rotated_extent};

/// Spectral band of a raster. Determines the channel count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    #[default]
    Lwir,
    Rgb,
}

impl Band {
    pub fn channels(self) -> usize {
        match self {
            Band::Lwir => 1,
            Band::Rgb => 3,
        }
    }
}

impl std::str::FromStr for Band {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lwir" => Ok(Band::Lwir),
            "rgb" => Ok(Band::Rgb),
            other => Err(format!("unknown band `{other}`")),
        }
    }
}

/// A row-major raster of normalized intensities, interleaved by channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    band: Band,
    data: Vec<f32>,
    pub frame_index: u64,
    pub meta: BTreeMap<String, String>,
}

impl Frame {
    /// A frame filled with a single intensity.
    pub fn filled(width: usize, height: usize, band: Band, value: f32) -> Result<Self> {
        check_dims(width, height)?;
        check_intensity(value)?;
        Ok(Frame {
            width,
            height,
            band,
            data: vec![value; width * height * band.channels()],
            frame_index: 0,
            meta: BTreeMap::new(),
        })
    }

    pub fn from_data(width: usize, height: usize, band: Band, data: Vec<f32>) -> Result<Self> {
        check_dims(width, height)?;
        let expected = width * height * band.channels();
        if data.len() != expected {
            return Err(Error::shape(
                format!("{expected} samples ({width}x{height}x{})", band.channels()),
                format!("{} samples", data.len()),
            ));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("intensity {bad} outside [0, 1]")));
        }
        Ok(Frame {
            width,
            height,
            band,
            data,
            frame_index: 0,
            meta: BTreeMap::new(),
        })
    }

    /// Builds a frame from samples that may stray outside `[0, 1]`, clamping
    /// each one. Kernels use this for their outputs.
    pub(crate) fn from_unclamped(
        width: usize,
        height: usize,
        band: Band,
        data: impl IntoIterator<Item = f64>,
    ) -> Self {
        let data: Vec<f32> = data.into_iter().map(clamp_unit).collect();
        debug_assert_eq!(data.len(), width * height * band.channels());
        Frame {
            width,
            height,
            band,
            data,
            frame_index: 0,
            meta: BTreeMap::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.band.channels()
    }

    pub fn band(&self) -> Band {
        self.band
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels() + c]
    }

    /// Writes one sample, clamping to `[0, 1]`.
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f32) {
        let ch = self.channels();
        self.data[(y * self.width + x) * ch + c] = value.clamp(0.0, 1.0);
    }

    /// Copies out the rectangle `[x0, x0 + w) x [y0, y0 + h)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Frame> {
        check_dims(w, h)?;
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::invalid(format!(
                "crop {w}x{h} at ({x0}, {y0}) exceeds {}x{} frame",
                self.width, self.height
            )));
        }
        let ch = self.channels();
        let mut data = Vec::with_capacity(w * h * ch);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * ch;
            data.extend_from_slice(&self.data[start..start + w * ch]);
        }
        Ok(Frame {
            width: w,
            height: h,
            band: self.band,
            data,
            frame_index: self.frame_index,
            meta: self.meta.clone(),
        })
    }

    /// Multiplies every sample by `factor`, clamping to `[0, 1]`.
    pub fn scale_intensity(&mut self, factor: f64) {
        for v in &mut self.data {
            *v = clamp_unit(*v as f64 * factor);
        }
    }
}

/// A binary per-pixel mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::shape(width * height, bits.len()));
        }
        Ok(BinaryMask {
            width,
            height,
            bits,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Tight bounds of the set pixels as `(x_min, y_min, x_max, y_max)` with
    /// exclusive maxima. `None` for an empty mask.
    pub fn bounds(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bounds: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    bounds = Some(match bounds {
                        None => (x, y, x + 1, y + 1),
                        Some((x0, y0, x1, y1)) => {
                            (x0.min(x), y0.min(y), x1.max(x + 1), y1.max(y + 1))
                        }
                    });
                }
            }
        }
        bounds
    }

    /// Nearest-neighbour resize to exactly `width x height`.
    pub fn resize_nearest(&self, width: usize, height: usize) -> BinaryMask {
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let mut out = BinaryMask::new(width, height);
        for y in 0..height {
            let src_y = nearest_index((y as f64 + 0.5) * sy - 0.5, self.height);
            for x in 0..width {
                let src_x = nearest_index((x as f64 + 0.5) * sx - 0.5, self.width);
                out.set(x, y, self.get(src_x, src_y));
            }
        }
        out
    }
}

/// An object cutout with its binary alpha and the ground sampling distance at
/// which it was captured.
#[derive(Debug, Clone, PartialEq)]
pub struct Sprite {
    pub image: Frame,
    pub alpha: BinaryMask,
    pub native_gsd_m: f64,
}

impl Sprite {
    pub fn new(image: Frame, alpha: BinaryMask, native_gsd_m: f64) -> Result<Self> {
        if alpha.width() != image.width() || alpha.height() != image.height() {
            return Err(Error::shape(
                format!("{}x{} alpha", image.width(), image.height()),
                format!("{}x{} alpha", alpha.width(), alpha.height()),
            ));
        }
        if !(native_gsd_m.is_finite() && native_gsd_m > 0.0) {
            return Err(Error::invalid(format!(
                "native_gsd_m must be positive, got {native_gsd_m}"
            )));
        }
        Ok(Sprite {
            image,
            alpha,
            native_gsd_m,
        })
    }
}

/// Resamples `src` by independent axis scale factors. The output has
/// `max(1, floor(width * scale_x)) x max(1, floor(height * scale_y))` pixels.
pub fn resample(src: &Frame, scale_x: f64, scale_y: f64, kernel: Kernel) -> Result<Frame> {
    for (name, s) in [("scale_x", scale_x), ("scale_y", scale_y)] {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::invalid(format!("{name} must be positive, got {s}")));
        }
    }
    let w = ((src.width as f64 * scale_x).floor() as usize).max(1);
    let h = ((src.height as f64 * scale_y).floor() as usize).max(1);
    Ok(resize(src, w, h, kernel))
}

/// Resamples `src` to exactly `width x height` using pixel-centre alignment and
/// clamp-to-edge sampling.
pub fn resize(src: &Frame, width: usize, height: usize, kernel: Kernel) -> Frame {
    if width == src.width && height == src.height {
        return src.clone();
    }
    let ch = src.channels();
    let sx = src.width as f64 / width as f64;
    let sy = src.height as f64 / height as f64;
    let mut data = Vec::with_capacity(width * height * ch);
    for y in 0..height {
        let fy = (y as f64 + 0.5) * sy - 0.5;
        for x in 0..width {
            let fx = (x as f64 + 0.5) * sx - 0.5;
            for c in 0..ch {
                data.push(interpolate(
                    src.width,
                    src.height,
                    |ix, iy| src.get(ix, iy, c) as f64,
                    fx,
                    fy,
                    kernel,
                ));
            }
        }
    }
    let mut out = Frame::from_unclamped(width, height, src.band, data);
    out.frame_index = src.frame_index;
    out.meta = src.meta.clone();
    out
}

#[inline]
pub(crate) fn clamp_unit(v: f64) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0) as f32
    }
}

#[inline]
pub(crate) fn nearest_index(pos: f64, len: usize) -> usize {
    let i = (pos + 0.5).floor();
    i.clamp(0.0, (len - 1) as f64) as usize
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::invalid(format!("empty frame {width}x{height}")));
    }
    Ok(())
}

fn check_intensity(v: f32) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::invalid(format!("intensity {v} outside [0, 1]")));
    }
    Ok(())
}
