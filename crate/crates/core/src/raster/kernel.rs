use serde::{Deserialize, Serialize};

/// Interpolation kernel family shared by resampling, rotation and feature
/// upsampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Nearest,
    #[default]
    Bilinear,
    Bicubic,
}

impl std::str::FromStr for Kernel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nearest" => Ok(Kernel::Nearest),
            "bilinear" => Ok(Kernel::Bilinear),
            "bicubic" => Ok(Kernel::Bicubic),
            other => Err(format!("unknown kernel `{other}`")),
        }
    }
}

/// Catmull-Rom cubic convolution weight (Keys kernel with `a = -0.5`).
#[inline]
pub fn catmull_rom(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

/// Samples a `width x height` grid at continuous position `(x, y)`, where
/// integer coordinates are sample centres. Out-of-range taps clamp to the
/// nearest edge sample.
#[inline]
pub fn interpolate(
    width: usize,
    height: usize,
    get: impl Fn(usize, usize) -> f64,
    x: f64,
    y: f64,
    kernel: Kernel,
) -> f64 {
    let clamp_x = |i: i64| i.clamp(0, width as i64 - 1) as usize;
    let clamp_y = |i: i64| i.clamp(0, height as i64 - 1) as usize;
    match kernel {
        Kernel::Nearest => get(
            clamp_x((x + 0.5).floor() as i64),
            clamp_y((y + 0.5).floor() as i64),
        ),
        Kernel::Bilinear => {
            let x0 = x.floor();
            let y0 = y.floor();
            let tx = x - x0;
            let ty = y - y0;
            let (x0, y0) = (x0 as i64, y0 as i64);
            let (xa, xb) = (clamp_x(x0), clamp_x(x0 + 1));
            let (ya, yb) = (clamp_y(y0), clamp_y(y0 + 1));
            let top = get(xa, ya) * (1.0 - tx) + get(xb, ya) * tx;
            if ty == 0.0 {
                return top;
            }
            let bottom = get(xa, yb) * (1.0 - tx) + get(xb, yb) * tx;
            top * (1.0 - ty) + bottom * ty
        }
        Kernel::Bicubic => {
            let x0 = x.floor();
            let y0 = y.floor();
            let tx = x - x0;
            let ty = y - y0;
            let (x0, y0) = (x0 as i64, y0 as i64);
            let wx = [
                catmull_rom(tx + 1.0),
                catmull_rom(tx),
                catmull_rom(1.0 - tx),
                catmull_rom(2.0 - tx),
            ];
            let wy = [
                catmull_rom(ty + 1.0),
                catmull_rom(ty),
                catmull_rom(1.0 - ty),
                catmull_rom(2.0 - ty),
            ];
            let mut acc = 0.0;
            for (j, wyj) in wy.iter().enumerate() {
                if *wyj == 0.0 {
                    continue;
                }
                let iy = clamp_y(y0 - 1 + j as i64);
                let mut row = 0.0;
                for (i, wxi) in wx.iter().enumerate() {
                    if *wxi != 0.0 {
                        row += wxi * get(clamp_x(x0 - 1 + i as i64), iy);
                    }
                }
                acc += wyj * row;
            }
            acc
        }
    }
}
