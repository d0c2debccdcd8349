//! Token-cluster overlays: every patch is tinted with the color of the final
//! token that absorbed it.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::{write_ppm, RgbImage};
use crate::merging::TokenState;
use crate::tensor::Tensor;
use crate::transformer::{check_video, AttentionMode, ModelConfig};

const GOLDEN_RATIO_CONJUGATE: f64 = 0.618_033_988_749_895;
const SATURATION: f64 = 0.65;
const VALUE: f64 = 0.95;

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h6 = h * 6.0;
    let sector = h6.floor() as i64 % 6;
    let f = h6 - h6.floor();
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    let (r, g, b) = match sector {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [r, g, b].map(|c| (c * 255.0).round() as u8)
}

/// Color of token `index`: golden-ratio hue steps at fixed saturation and
/// value.
pub fn palette_color(index: usize) -> [u8; 3] {
    let hue = (index as f64 * GOLDEN_RATIO_CONJUGATE).fract();
    hsv_to_rgb(hue, SATURATION, VALUE)
}

/// For every patch token (slot-major, class token excluded), the index of
/// the final token whose trace holds it, or `None` if it was dropped.
pub fn patch_assignment(state: &TokenState, cfg: &ModelConfig) -> Result<Vec<Option<usize>>> {
    let c = cfg.protected_count() as u32;
    let n = cfg.patch_tokens();
    let mut out = vec![None; n];
    for (tok, trace) in state.trace.iter().enumerate() {
        for &o in trace {
            if o < c {
                continue;
            }
            let p = (o - c) as usize;
            let slot = out
                .get_mut(p)
                .ok_or_else(|| Error::Trace(format!("patch {p} outside a {n}-patch clip")))?;
            if slot.is_some() {
                return Err(Error::Trace(format!("patch {p} claimed twice")));
            }
            *slot = Some(tok);
        }
    }
    Ok(out)
}

fn to_byte(v: f32) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() as f64
}

/// Renders one overlay image per input frame.
pub fn render_cluster_frames(state: &TokenState, video: &Tensor, cfg: &ModelConfig) -> Result<Vec<RgbImage>> {
    check_video(video, cfg)?;
    let assign = patch_assignment(state, cfg)?;
    let (g, p, img) = (cfg.grid(), cfg.patch, cfg.image_size);
    let t = match cfg.attention_mode {
        AttentionMode::JointSpaceTime => cfg.tubelet_t,
        AttentionMode::DividedSpaceTime => 1,
    };
    let per = cfg.tokens_per_slot();
    let v = video.data();
    let mut frames = vec![RgbImage::new(img, img); cfg.frames];
    for (patch, owner) in assign.iter().enumerate() {
        let (slot, rem) = (patch / per, patch % per);
        let (gy, gx) = (rem / g, rem % g);
        let tint = owner.map(palette_color);
        for f in slot * t..(slot + 1) * t {
            for y in gy * p..(gy + 1) * p {
                for x in gx * p..(gx + 1) * p {
                    let i = ((f * img + y) * img + x) * 3;
                    let src = [to_byte(v[i]), to_byte(v[i + 1]), to_byte(v[i + 2])];
                    let rgb = match tint {
                        Some(c) => [0, 1, 2].map(|k| ((c[k] as f64 + src[k]) * 0.5).round() as u8),
                        None => {
                            let luma = 0.299 * src[0] + 0.587 * src[1] + 0.114 * src[2];
                            [luma.round() as u8; 3]
                        }
                    };
                    frames[f].put(x, y, rgb);
                }
            }
        }
    }
    Ok(frames)
}

/// Writes the overlays as `clusters_NNNN.ppm` in `out_dir` and returns the
/// paths.
pub fn render_clusters(
    state: &TokenState,
    video: &Tensor,
    cfg: &ModelConfig,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    let frames = render_cluster_frames(state, video, cfg)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    frames
        .iter()
        .enumerate()
        .map(|(i, frame)| {
            let path = dir.join(format!("clusters_{i:04}.ppm"));
            write_ppm(&path, frame)?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn palette_is_deterministic_and_distinct() {
        assert_eq!(palette_color(0), hsv_to_rgb(0.0, SATURATION, VALUE));
        assert_eq!(palette_color(0), [242, 85, 85]);
        let colors: HashSet<_> = (0..256).map(palette_color).collect();
        assert_eq!(colors.len(), 256);
    }

    #[test]
    fn hsv_primaries() {
        assert_eq!(hsv_to_rgb(0.0, 1.0, 1.0), [255, 0, 0]);
        assert_eq!(hsv_to_rgb(1.0 / 3.0, 1.0, 1.0), [0, 255, 0]);
        assert_eq!(hsv_to_rgb(2.0 / 3.0, 1.0, 1.0), [0, 0, 255]);
        assert_eq!(hsv_to_rgb(0.5, 0.0, 0.5), [128, 128, 128]);
    }
}
