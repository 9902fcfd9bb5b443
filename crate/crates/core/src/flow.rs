//! Dense Horn–Schunck optical flow.
//!
//! Intensities are luminance `0.299 R + 0.587 G + 0.114 B` scaled to [0, 1].
//! Spatial derivatives are centred differences averaged over both frames,
//! the temporal derivative is the forward difference, and all stencils clamp
//! at the image border. Each iteration is a Jacobi update against the
//! weighted neighbourhood mean (1/6 edge neighbours, 1/12 diagonals).

use image::RgbImage;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::Roi;
use crate::vision::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowParams {
    /// Regularisation weight alpha; the smoothness term is weighted alpha².
    pub smoothness: f32,
    pub iterations: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            smoothness: 1.0,
            iterations: 10,
        }
    }
}

impl FlowParams {
    fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::InvalidParameter(
                "flow iterations must be >= 1".into(),
            ));
        }
        if !(self.smoothness > 0.0 && self.smoothness.is_finite()) {
            return Err(Error::InvalidParameter(
                "flow smoothness must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Pixels of context needed around a region for its flow to equal the
    /// full-frame result exactly.
    pub fn context_margin(&self) -> u32 {
        self.iterations as u32 + 2
    }
}

/// Single-channel intensity image in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Luma {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl Luma {
    pub fn black(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; (width * height) as usize],
        }
    }

    pub fn from_rgb(img: &RgbImage) -> Self {
        Self::from_rgb_region(img, &Roi::full(img.width(), img.height()))
    }

    /// Luminance of the pixels inside `region` only.
    pub fn from_rgb_region(img: &RgbImage, region: &Roi) -> Self {
        let mut data = Vec::with_capacity((region.width * region.height) as usize);
        for y in region.y..region.y_end() {
            for x in region.x..region.x_end() {
                let [r, g, b] = img.get_pixel(x, y).0;
                data.push((0.299 * r as f32 + 0.587 * g as f32 + 0.114 * b as f32) / 255.0);
            }
        }
        Self {
            width: region.width,
            height: region.height,
            data,
        }
    }
}

/// Per-pixel velocity in pixels per frame pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: u32,
    pub height: u32,
    pub vx: Vec<f32>,
    pub vy: Vec<f32>,
}

impl FlowField {
    pub fn magnitude(&self) -> Vec<f32> {
        self.vx
            .iter()
            .zip(&self.vy)
            .map(|(x, y)| (x * x + y * y).sqrt())
            .collect()
    }

    pub fn magnitude_at(&self, x: u32, y: u32) -> f32 {
        let i = (y * self.width + x) as usize;
        (self.vx[i] * self.vx[i] + self.vy[i] * self.vy[i]).sqrt()
    }
}

pub fn horn_schunck(prev: &RgbImage, next: &RgbImage, params: FlowParams) -> Result<FlowField> {
    horn_schunck_with(Exec::default(), prev, next, params)
}

pub fn horn_schunck_with(
    exec: Exec,
    prev: &RgbImage,
    next: &RgbImage,
    params: FlowParams,
) -> Result<FlowField> {
    if prev.dimensions() != next.dimensions() {
        return Err(Error::DimensionMismatch {
            left: prev.dimensions(),
            right: next.dimensions(),
        });
    }
    horn_schunck_luma(exec, &Luma::from_rgb(prev), &Luma::from_rgb(next), params)
}

pub fn horn_schunck_luma(
    exec: Exec,
    prev: &Luma,
    next: &Luma,
    params: FlowParams,
) -> Result<FlowField> {
    params.validate()?;
    if (prev.width, prev.height) != (next.width, next.height) {
        return Err(Error::DimensionMismatch {
            left: (prev.width, prev.height),
            right: (next.width, next.height),
        });
    }
    let (w, h) = (prev.width as usize, prev.height as usize);
    let n = w * h;
    let alpha2 = params.smoothness * params.smoothness;

    // [ix, iy, it, 1 / (alpha² + ix² + iy²)]
    let mut grad = vec![[0.0f32; 4]; n];
    exec.for_each_row(&mut grad, w, |y, row| {
        let yu = y.saturating_sub(1);
        let yd = (y + 1).min(h - 1);
        for (x, g) in row.iter_mut().enumerate() {
            let xl = x.saturating_sub(1);
            let xr = (x + 1).min(w - 1);
            let p = |xx: usize, yy: usize| prev.data[yy * w + xx];
            let q = |xx: usize, yy: usize| next.data[yy * w + xx];
            let ix = 0.25 * ((p(xr, y) - p(xl, y)) + (q(xr, y) - q(xl, y)));
            let iy = 0.25 * ((p(x, yd) - p(x, yu)) + (q(x, yd) - q(x, yu)));
            let it = q(x, y) - p(x, y);
            *g = [ix, iy, it, 1.0 / (alpha2 + ix * ix + iy * iy)];
        }
    });

    let mut uv = vec![[0.0f32; 2]; n];
    let mut next_uv = vec![[0.0f32; 2]; n];
    for _ in 0..params.iterations {
        let cur = &uv;
        let grad = &grad;
        exec.for_each_row(&mut next_uv, w, |y, row| {
            let yu = y.saturating_sub(1);
            let yd = (y + 1).min(h - 1);
            for (x, out) in row.iter_mut().enumerate() {
                let xl = x.saturating_sub(1);
                let xr = (x + 1).min(w - 1);
                let at = |xx: usize, yy: usize| cur[yy * w + xx];
                let mean: [f32; 2] = std::array::from_fn(|c| {
                    let edge = at(xl, y)[c] + at(xr, y)[c] + at(x, yu)[c] + at(x, yd)[c];
                    let diag = at(xl, yu)[c] + at(xr, yu)[c] + at(xl, yd)[c] + at(xr, yd)[c];
                    edge / 6.0 + diag / 12.0
                });
                let [ix, iy, it, inv] = grad[y * w + x];
                let k = (ix * mean[0] + iy * mean[1] + it) * inv;
                *out = [mean[0] - ix * k, mean[1] - iy * k];
            }
        });
        std::mem::swap(&mut uv, &mut next_uv);
    }

    Ok(FlowField {
        width: prev.width,
        height: prev.height,
        vx: uv.iter().map(|p| p[0]).collect(),
        vy: uv.iter().map(|p| p[1]).collect(),
    })
}

/// Sum of flow magnitudes over the set pixels of `mask`.
pub fn flow_into_mask_sum(field: &FlowField, mask: &BinaryMask) -> Result<f64> {
    if (field.width, field.height) != mask.dimensions() {
        return Err(Error::DimensionMismatch {
            left: (field.width, field.height),
            right: mask.dimensions(),
        });
    }
    flow_into_mask_sum_at(field, (0, 0), mask)
}

/// As [`flow_into_mask_sum`] for a field computed on a crop whose top-left
/// corner sits at `origin` in mask coordinates. Mask pixels outside the crop
/// are an error.
pub fn flow_into_mask_sum_at(
    field: &FlowField,
    origin: (u32, u32),
    mask: &BinaryMask,
) -> Result<f64> {
    let mut sum = 0.0f64;
    for (x, y) in mask.iter_set() {
        let (Some(cx), Some(cy)) = (x.checked_sub(origin.0), y.checked_sub(origin.1)) else {
            return Err(Error::InvalidParameter(format!(
                "mask pixel ({x},{y}) outside flow crop"
            )));
        };
        if cx >= field.width || cy >= field.height {
            return Err(Error::InvalidParameter(format!(
                "mask pixel ({x},{y}) outside flow crop"
            )));
        }
        sum += field.magnitude_at(cx, cy) as f64;
    }
    Ok(sum)
}
