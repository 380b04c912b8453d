use serde::{Deserialize, Serialize};

use super::{clamp_unit, Frame, Sprite};
use crate::error::{Error, Result};

/// How sprite pixels under the alpha combine with the background.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlendMode {
    /// Output takes the sprite value.
    #[default]
    Replace,
    /// Output is `background * sprite`.
    Multiply,
}

/// Pastes `sprite` onto `background` with its top-left corner at `top_left`
/// (x, y). Pixels outside the alpha are left untouched.
pub fn composite(
    background: &Frame,
    sprite: &Sprite,
    top_left: (i64, i64),
    mode: BlendMode,
) -> Result<Frame> {
    if background.band() != sprite.image.band() {
        return Err(Error::invalid(format!(
            "band mismatch: background {:?}, sprite {:?}",
            background.band(),
            sprite.image.band()
        )));
    }
    let (sw, sh) = (sprite.image.width() as i64, sprite.image.height() as i64);
    let (bw, bh) = (background.width() as i64, background.height() as i64);
    let (x0, y0) = top_left;
    if x0 < 0 || y0 < 0 || x0 + sw > bw || y0 + sh > bh {
        return Err(Error::Placement(format!(
            "{sw}x{sh} sprite at ({x0}, {y0}) exceeds {bw}x{bh} frame"
        )));
    }
    let (x0, y0) = (x0 as usize, y0 as usize);
    let mut out = background.clone();
    let ch = background.channels();
    for y in 0..sprite.image.height() {
        for x in 0..sprite.image.width() {
            if !sprite.alpha.get(x, y) {
                continue;
            }
            for c in 0..ch {
                let s = sprite.image.get(x, y, c);
                let v = match mode {
                    BlendMode::Replace => s,
                    BlendMode::Multiply => {
                        clamp_unit(background.get(x0 + x, y0 + y, c) as f64 * s as f64)
                    }
                };
                out.set(x0 + x, y0 + y, c, v);
            }
        }
    }
    Ok(out)
}
