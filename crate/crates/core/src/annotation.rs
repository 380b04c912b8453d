//! Ground-truth object labels: integer pixel boxes and run-length masks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::BinaryMask;

/// Axis-aligned integer pixel box with exclusive maxima, so a single pixel at
/// `(x, y)` has bounds `(x, y, x + 1, y + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl PixelBox {
    pub fn new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Result<Self> {
        if x_min >= x_max || y_min >= y_max {
            return Err(Error::invalid(format!(
                "degenerate box ({x_min}, {y_min}, {x_max}, {y_max})"
            )));
        }
        Ok(PixelBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn width(&self) -> u32 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> u32 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max
    }
}

/// Uncompressed run-length mask in the COCO convention: runs alternate
/// between unset and set pixels, starting with unset, scanning column-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rle {
    /// `[height, width]`
    pub size: [u32; 2],
    pub counts: Vec<u32>,
}

impl Rle {
    pub fn encode(mask: &BinaryMask) -> Rle {
        let (w, h) = (mask.width(), mask.height());
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for x in 0..w {
            for y in 0..h {
                let v = mask.get(x, y);
                if v != current {
                    counts.push(run);
                    run = 0;
                    current = v;
                }
                run += 1;
            }
        }
        counts.push(run);
        Rle {
            size: [h as u32, w as u32],
            counts,
        }
    }

    pub fn height(&self) -> usize {
        self.size[0] as usize
    }

    pub fn width(&self) -> usize {
        self.size[1] as usize
    }

    pub fn decode(&self) -> Result<BinaryMask> {
        let (w, h) = (self.width(), self.height());
        let total: u64 = self.counts.iter().map(|c| *c as u64).sum();
        if total != (w * h) as u64 {
            return Err(Error::shape(
                format!("runs covering {} pixels", w * h),
                format!("runs covering {total} pixels"),
            ));
        }
        let mut mask = BinaryMask::new(w, h);
        let mut idx = 0usize;
        for (i, run) in self.counts.iter().enumerate() {
            let set = i % 2 == 1;
            for _ in 0..*run {
                if set {
                    mask.set(idx / h, idx % h, true);
                }
                idx += 1;
            }
        }
        Ok(mask)
    }

    /// Number of set pixels.
    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).map(|c| *c as u64).sum()
    }
}

/// One labelled object in one image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub image_id: String,
    pub class_id: u32,
    pub bbox: PixelBox,
    pub mask: Option<Rle>,
}

impl Annotation {
    /// Builds an annotation whose box is the tight bounds of `mask`.
    pub fn from_mask(image_id: impl Into<String>, class_id: u32, mask: &BinaryMask) -> Result<Self> {
        let (x0, y0, x1, y1) = mask
            .bounds()
            .ok_or_else(|| Error::invalid("cannot annotate an empty mask"))?;
        Ok(Annotation {
            image_id: image_id.into(),
            class_id,
            bbox: PixelBox::new(x0 as u32, y0 as u32, x1 as u32, y1 as u32)?,
            mask: Some(Rle::encode(mask)),
        })
    }
}
