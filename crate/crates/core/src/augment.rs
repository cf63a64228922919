//! Random shift-crop augmentation: zero-pad by `pad`, crop a window of the
//! original size. One offset is shared by every frame of a stack.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Observation;
use crate::error::{config_err, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub pad: usize,
    /// Augmented latents stored per observation after freezing.
    pub k: usize,
    pub enabled: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            pad: 1,
            k: 1,
            enabled: true,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        if self.k == 0 {
            return config_err("augmentation count k must be at least 1");
        }
        if self.enabled && self.pad >= height.min(width) {
            return config_err(format!("pad {} too large for {height}x{width} frames", self.pad));
        }
        Ok(())
    }

    /// Padding actually applied (0 when disabled).
    pub fn effective_pad(&self) -> usize {
        if self.enabled {
            self.pad
        } else {
            0
        }
    }
}

/// Top-left corner of the crop window inside the padded image, each in
/// `0..=2*pad`. `(pad, pad)` is the identity crop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CropOffset {
    pub dy: u16,
    pub dx: u16,
}

impl CropOffset {
    pub fn identity(pad: usize) -> Self {
        Self {
            dy: pad as u16,
            dx: pad as u16,
        }
    }

    pub fn sample<R: Rng + ?Sized>(pad: usize, rng: &mut R) -> Self {
        if pad == 0 {
            return Self::default();
        }
        Self {
            dy: rng.gen_range(0..=2 * pad) as u16,
            dx: rng.gen_range(0..=2 * pad) as u16,
        }
    }
}

/// Applies a fixed crop offset. Output pixel `(y, x)` reads input pixel
/// `(y + dy - pad, x + dx - pad)`, or 0 outside the image.
pub fn crop_with_offset(obs: &Observation, pad: usize, offset: CropOffset) -> Observation {
    let [s, h, w] = obs.shape();
    if pad == 0 {
        return obs.clone();
    }
    let mut out = vec![0u8; s * h * w];
    let (dy, dx) = (offset.dy as isize - pad as isize, offset.dx as isize - pad as isize);
    for f in 0..s {
        let src = obs.frame(f);
        let dst = &mut out[f * h * w..(f + 1) * h * w];
        for y in 0..h {
            let sy = y as isize + dy;
            if sy < 0 || sy >= h as isize {
                continue;
            }
            for x in 0..w {
                let sx = x as isize + dx;
                if sx >= 0 && sx < w as isize {
                    dst[y * w + x] = src[sy as usize * w + sx as usize];
                }
            }
        }
    }
    Observation::new(s, h, w, out).expect("same shape")
}

/// One random shift-crop; returns the augmented stack and the offset drawn.
pub fn random_shift_crop<R: Rng + ?Sized>(obs: &Observation, pad: usize, rng: &mut R) -> (Observation, CropOffset) {
    let offset = CropOffset::sample(pad, rng);
    (crop_with_offset(obs, pad, offset), offset)
}

/// `k` independent shift-crops of `obs`.
pub fn augment_k<R: Rng + ?Sized>(
    obs: &Observation,
    k: usize,
    pad: usize,
    rng: &mut R,
) -> Vec<(Observation, CropOffset)> {
    (0..k).map(|_| random_shift_crop(obs, pad, rng)).collect()
}
