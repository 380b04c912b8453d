use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::codecs::tiff::TiffEncoder;
use image::{DynamicImage, ExtendedColorType, ImageEncoder};

use super::{BinaryMask, Band, Frame, Sprite};
use crate::error::{Error, Result};

/// Sample depth for grayscale output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

fn open(path: &Path) -> Result<DynamicImage> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        ));
    }
    image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn to_frame(img: &DynamicImage, band: Band) -> Frame {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match band {
        Band::Lwir => img
            .to_luma16()
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect(),
        Band::Rgb => img
            .to_rgb8()
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 255.0)
            .collect(),
    };
    Frame::from_unclamped(w, h, band, data)
}

/// Loads a PNG or TIFF raster, converting linearly to `[0, 1]` intensities.
/// LWIR frames are read as 16-bit luma, RGB frames as 8-bit RGB.
pub fn load_frame(path: impl AsRef<Path>, band: Band) -> Result<Frame> {
    let path = path.as_ref();
    Ok(to_frame(&open(path)?, band))
}

/// Loads a binary mask: any pixel at or above half scale counts as set.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let img = open(path.as_ref())?.to_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let bits = img.into_raw().into_iter().map(|v| v >= 32768).collect();
    BinaryMask::from_bits(w, h, bits)
}

/// Loads a sprite. The alpha comes from `alpha_path` when given, otherwise
/// from the image's own alpha channel, otherwise the whole image is opaque.
pub fn load_sprite(
    path: impl AsRef<Path>,
    alpha_path: Option<&Path>,
    band: Band,
    native_gsd_m: f64,
) -> Result<Sprite> {
    let path = path.as_ref();
    let img = open(path)?;
    let frame = to_frame(&img, band);
    let alpha = match alpha_path {
        Some(p) => load_mask(p)?,
        None if img.color().has_alpha() => {
            let la = img.to_luma_alpha16();
            let bits = la.pixels().map(|p| p.0[1] >= 32768).collect();
            BinaryMask::from_bits(frame.width(), frame.height(), bits)?
        }
        None => BinaryMask::full(frame.width(), frame.height()),
    };
    Sprite::new(frame, alpha, native_gsd_m)
}

fn quantize(v: f32, max: f64) -> f64 {
    (v as f64 * max).round()
}

/// Writes a frame as PNG or TIFF (chosen by extension). LWIR frames are
/// grayscale at `depth`; RGB frames are always 8-bit. TIFF output is 16-bit
/// grayscale only.
pub fn save_frame(path: impl AsRef<Path>, frame: &Frame, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let is_tiff = matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("tif" | "tiff")
    );
    let (w, h) = (frame.width() as u32, frame.height() as u32);
    let (bytes, color) = match (frame.band(), depth, is_tiff) {
        (Band::Rgb, _, true) => {
            return Err(Error::invalid("TIFF output supports 16-bit grayscale only"));
        }
        (Band::Lwir, BitDepth::Eight, true) => {
            return Err(Error::invalid("TIFF output supports 16-bit grayscale only"));
        }
        (Band::Rgb, _, false) => (
            frame.data().iter().map(|v| quantize(*v, 255.0) as u8).collect::<Vec<u8>>(),
            ExtendedColorType::Rgb8,
        ),
        (Band::Lwir, BitDepth::Eight, false) => (
            frame.data().iter().map(|v| quantize(*v, 255.0) as u8).collect(),
            ExtendedColorType::L8,
        ),
        (Band::Lwir, BitDepth::Sixteen, _) => {
            let mut bytes = Vec::with_capacity(frame.data().len() * 2);
            for v in frame.data() {
                let q = quantize(*v, 65535.0) as u16;
                bytes.extend_from_slice(&q.to_ne_bytes());
            }
            (bytes, ExtendedColorType::L16)
        }
    };
    write_encoded(path, &bytes, w, h, color, is_tiff)
}

/// Writes a mask as an 8-bit grayscale PNG (0 or 255).
pub fn save_mask(path: impl AsRef<Path>, mask: &BinaryMask) -> Result<()> {
    let bytes: Vec<u8> = mask.bits().iter().map(|b| if *b { 255 } else { 0 }).collect();
    write_encoded(
        path.as_ref(),
        &bytes,
        mask.width() as u32,
        mask.height() as u32,
        ExtendedColorType::L8,
        false,
    )
}

fn write_encoded(
    path: &Path,
    bytes: &[u8],
    w: u32,
    h: u32,
    color: ExtendedColorType,
    tiff: bool,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let writer = BufWriter::new(file);
    let res = if tiff {
        TiffEncoder::new(writer).write_image(bytes, w, h, color)
    } else {
        PngEncoder::new_with_quality(writer, CompressionType::Fast, FilterType::Adaptive)
            .write_image(bytes, w, h, color)
    };
    res.map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
