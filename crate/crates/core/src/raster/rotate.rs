use std::f64::consts::{FRAC_PI_2, TAU};

use super::{interpolate, BinaryMask, Frame, Kernel};
use crate::error::{Error, Result};

const QUARTER_TURN_EPS: f64 = 1e-9;

/// Canvas size that holds a `width x height` raster rotated by `theta`. Each
/// side is rounded up to the parity of the matching source side so that the
/// canvas centre lands on the same sub-pixel phase as the source centre.
pub fn rotated_extent(width: usize, height: usize, theta: f64) -> (usize, usize) {
    let theta = theta.rem_euclid(TAU);
    if let Some(q) = quarter_turns(theta) {
        return if q % 2 == 0 {
            (width, height)
        } else {
            (height, width)
        };
    }
    let (s, c) = theta.sin_cos();
    let (w, h) = (width as f64, height as f64);
    let fit = |extent: f64, parity: usize| {
        let n = (extent - 1e-9).ceil().max(1.0) as usize;
        if n % 2 == parity % 2 {
            n
        } else {
            n + 1
        }
    };
    (
        fit(w * c.abs() + h * s.abs(), width),
        fit(w * s.abs() + h * c.abs(), height),
    )
}

/// Rotates `src` counter-clockwise (as displayed, with rows running down) by
/// `theta` radians about its centre.
///
/// The output canvas is the rotated bounding box. Samples outside the source
/// support take `fill`. The alpha is rotated with nearest-neighbour lookup so
/// it stays binary; without an input mask the source support itself is
/// returned as alpha. Multiples of a quarter turn are an exact index
/// permutation.
pub fn rotate(
    src: &Frame,
    theta: f64,
    fill: f32,
    mask: Option<&BinaryMask>,
    kernel: Kernel,
) -> Result<(Frame, BinaryMask)> {
    if !theta.is_finite() {
        return Err(Error::invalid(format!("rotation angle {theta} is not finite")));
    }
    if let Some(m) = mask {
        if m.width() != src.width() || m.height() != src.height() {
            return Err(Error::shape(
                format!("{}x{} mask", src.width(), src.height()),
                format!("{}x{} mask", m.width(), m.height()),
            ));
        }
    }
    let theta = theta.rem_euclid(TAU);
    let full;
    let mask = match mask {
        Some(m) => m,
        None => {
            full = BinaryMask::full(src.width(), src.height());
            &full
        }
    };
    if let Some(q) = quarter_turns(theta) {
        let mut frame = src.clone();
        let mut alpha = mask.clone();
        for _ in 0..q {
            frame = rot90_frame(&frame);
            alpha = rot90_mask(&alpha);
        }
        return Ok((frame, alpha));
    }

    let (w, h) = (src.width(), src.height());
    let (ow, oh) = rotated_extent(w, h, theta);
    let (s, c) = theta.sin_cos();
    let ch = src.channels();
    let fill = fill.clamp(0.0, 1.0) as f64;
    let mut data = Vec::with_capacity(ow * oh * ch);
    let mut alpha = BinaryMask::new(ow, oh);
    for y in 0..oh {
        let dy_out = y as f64 + 0.5 - oh as f64 / 2.0;
        for x in 0..ow {
            let dx_out = x as f64 + 0.5 - ow as f64 / 2.0;
            let sx = w as f64 / 2.0 + dx_out * c - dy_out * s - 0.5;
            let sy = h as f64 / 2.0 + dx_out * s + dy_out * c - 0.5;
            let inside = sx >= -0.5 && sx < w as f64 - 0.5 && sy >= -0.5 && sy < h as f64 - 0.5;
            if inside {
                let nx = ((sx + 0.5).floor() as usize).min(w - 1);
                let ny = ((sy + 0.5).floor() as usize).min(h - 1);
                alpha.set(x, y, mask.get(nx, ny));
                for c in 0..ch {
                    data.push(interpolate(w, h, |ix, iy| src.get(ix, iy, c) as f64, sx, sy, kernel));
                }
            } else {
                data.extend(std::iter::repeat_n(fill, ch));
            }
        }
    }
    let mut out = Frame::from_unclamped(ow, oh, src.band(), data);
    out.frame_index = src.frame_index;
    out.meta = src.meta.clone();
    Ok((out, alpha))
}

fn quarter_turns(theta: f64) -> Option<usize> {
    let q = theta / FRAC_PI_2;
    let r = q.round();
    ((q - r).abs() < QUARTER_TURN_EPS).then(|| (r as usize) % 4)
}

/// One counter-clockwise quarter turn: `out[i][j] = in[j][w - 1 - i]`.
fn rot90_frame(src: &Frame) -> Frame {
    let (w, h, ch) = (src.width(), src.height(), src.channels());
    let mut data = Vec::with_capacity(w * h * ch);
    for i in 0..w {
        for j in 0..h {
            for c in 0..ch {
                data.push(src.get(w - 1 - i, j, c));
            }
        }
    }
    let mut out = Frame::from_data(h, w, src.band(), data).expect("permutation preserves range");
    out.frame_index = src.frame_index;
    out.meta = src.meta.clone();
    out
}

fn rot90_mask(src: &BinaryMask) -> BinaryMask {
    let (w, h) = (src.width(), src.height());
    let mut bits = Vec::with_capacity(w * h);
    for i in 0..w {
        for j in 0..h {
            bits.push(src.get(w - 1 - i, j));
        }
    }
    BinaryMask::from_bits(h, w, bits).expect("permutation preserves size")
}
