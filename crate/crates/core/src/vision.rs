//! Tower and ring localisation: HSV conversion, thresholding, 4-connected
//! component filtering, ROI restriction and ring masking.

use image::RgbImage;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{DetectorConfig, Roi};

/// Hue on 0..180 (degrees halved), saturation and value on 0..=255.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hsv {
    pub h: u8,
    pub s: u8,
    pub v: u8,
}

/// Hexcone RGB to HSV with exact integer rounding (half up).
///
/// `v` is the max channel, `s = 255 * (max - min) / max` (0 for black), and
/// hue is in half-degrees so that it fits 0..180.
pub fn rgb_to_hsv(rgb: [u8; 3]) -> Hsv {
    let [r, g, b] = rgb.map(i32::from);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let v = max as u8;
    if max == 0 {
        return Hsv { h: 0, s: 0, v: 0 };
    }
    let s = ((2 * 255 * d + max) / (2 * max)) as u8;
    if d == 0 {
        return Hsv { h: 0, s, v };
    }
    // hue_half_degrees = num / d, with num kept non-negative
    let num = if max == r {
        if g >= b {
            30 * (g - b)
        } else {
            180 * d + 30 * (g - b)
        }
    } else if max == g {
        60 * d + 30 * (b - r)
    } else {
        120 * d + 30 * (r - g)
    };
    let h = (2 * num + d) / (2 * d);
    Hsv {
        h: if h >= 180 { (h - 180) as u8 } else { h as u8 },
        s,
        v,
    }
}

/// W×H boolean grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; (width * height) as usize],
        }
    }

    pub fn filled(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![true; (width * height) as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity((width * height) as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.bits[(y * self.width + x) as usize] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn iter_set(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i as u32 % w, i as u32 / w))
    }

    pub fn union(&self, other: &BinaryMask) -> BinaryMask {
        assert_eq!(self.dimensions(), other.dimensions());
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| *a || *b)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BoundingBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

/// A 4-connected component.
#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub pixels: Vec<(u32, u32)>,
    pub bbox: BoundingBox,
    pub centroid: (f64, f64),
}

impl Blob {
    pub fn size(&self) -> usize {
        self.pixels.len()
    }
}

/// Labels 4-connected components in raster order of their first pixel.
pub fn components(mask: &BinaryMask) -> Vec<Blob> {
    let (w, h) = mask.dimensions();
    let mut seen = vec![false; mask.bits.len()];
    let mut blobs = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.bits.len() {
        if !mask.bits[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        while let Some(i) = stack.pop() {
            let (x, y) = (i as u32 % w, i as u32 / w);
            pixels.push((x, y));
            let mut visit = |j: usize| {
                if mask.bits[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w as usize);
            }
            if y + 1 < h {
                visit(i + w as usize);
            }
        }
        pixels.sort_unstable_by_key(|&(x, y)| (y, x));
        let mut bbox = BoundingBox {
            x_min: u32::MAX,
            y_min: u32::MAX,
            x_max: 0,
            y_max: 0,
        };
        let (mut sx, mut sy) = (0.0, 0.0);
        for &(x, y) in &pixels {
            bbox.x_min = bbox.x_min.min(x);
            bbox.y_min = bbox.y_min.min(y);
            bbox.x_max = bbox.x_max.max(x);
            bbox.y_max = bbox.y_max.max(y);
            sx += x as f64;
            sy += y as f64;
        }
        let n = pixels.len() as f64;
        blobs.push(Blob {
            centroid: (sx / n, sy / n),
            bbox,
            pixels,
        });
    }
    blobs
}

/// Clears every 4-connected component smaller than `min_size` pixels.
pub fn remove_small_components(mask: &BinaryMask, min_size: usize) -> BinaryMask {
    let mut out = BinaryMask::new(mask.width, mask.height);
    for blob in components(mask) {
        if blob.size() >= min_size {
            for (x, y) in blob.pixels {
                out.set(x, y, true);
            }
        }
    }
    out
}

/// Pixels inside the hue/saturation/value box, before size filtering.
pub fn threshold_hsv(frame: &RgbImage, config: &DetectorConfig) -> BinaryMask {
    let (w, h) = frame.dimensions();
    let raw = frame.as_raw();
    let bits = raw
        .chunks_exact(3)
        .map(|p| {
            let hsv = rgb_to_hsv([p[0], p[1], p[2]]);
            hsv.h >= config.hue_min
                && hsv.h <= config.hue_max
                && hsv.s >= config.sat_min
                && hsv.v <= config.val_max
        })
        .collect();
    BinaryMask {
        width: w,
        height: h,
        bits,
    }
}

/// Tower pixels: HSV box, then components below `min_blob_px` removed.
pub fn tower_mask(frame: &RgbImage, config: &DetectorConfig) -> BinaryMask {
    remove_small_components(&threshold_hsv(frame, config), config.min_blob_px)
}

pub fn restrict_roi(mask: &BinaryMask, roi: &Roi) -> Result<BinaryMask> {
    if !roi.fits_within(mask.width, mask.height) {
        return Err(Error::RoiOutOfBounds {
            roi: *roi,
            width: mask.width,
            height: mask.height,
        });
    }
    Ok(BinaryMask::from_fn(mask.width, mask.height, |x, y| {
        roi.contains(x, y) && mask.get(x, y)
    }))
}

/// Chebyshev (chessboard) distance from every pixel to the nearest set
/// pixel; `u32::MAX` everywhere when the mask is empty.
pub fn chebyshev_distance(mask: &BinaryMask) -> Vec<u32> {
    const INF: u32 = u32::MAX / 2;
    let (w, h) = (mask.width as usize, mask.height as usize);
    let mut d: Vec<u32> = mask.bits.iter().map(|&b| if b { 0 } else { INF }).collect();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let mut best = d[i];
            if x > 0 {
                best = best.min(d[i - 1] + 1);
            }
            if y > 0 {
                best = best.min(d[i - w] + 1);
                if x > 0 {
                    best = best.min(d[i - w - 1] + 1);
                }
                if x + 1 < w {
                    best = best.min(d[i - w + 1] + 1);
                }
            }
            d[i] = best;
        }
    }
    for y in (0..h).rev() {
        for x in (0..w).rev() {
            let i = y * w + x;
            let mut best = d[i];
            if x + 1 < w {
                best = best.min(d[i + 1] + 1);
            }
            if y + 1 < h {
                best = best.min(d[i + w] + 1);
                if x + 1 < w {
                    best = best.min(d[i + w + 1] + 1);
                }
                if x > 0 {
                    best = best.min(d[i + w - 1] + 1);
                }
            }
            d[i] = best;
        }
    }
    if mask.is_empty() {
        d.iter_mut().for_each(|v| *v = u32::MAX);
    }
    d
}

/// Dark pixels forming components of at least `min_ring_px`, kept only
/// where they lie within `max_ring_tower_dist_px` of a tower pixel.
pub fn ring_mask(
    frame: &RgbImage,
    tower: &BinaryMask,
    config: &DetectorConfig,
) -> Result<BinaryMask> {
    let (w, h) = frame.dimensions();
    if tower.dimensions() != (w, h) {
        return Err(Error::DimensionMismatch {
            left: (w, h),
            right: tower.dimensions(),
        });
    }
    let dark = BinaryMask {
        width: w,
        height: h,
        bits: frame
            .as_raw()
            .chunks_exact(3)
            .map(|p| p[0].max(p[1]).max(p[2]) <= config.val_max_ring)
            .collect(),
    };
    let mut ring = remove_small_components(&dark, config.min_ring_px);
    if ring.is_empty() {
        return Ok(ring);
    }
    let dist = chebyshev_distance(tower);
    for (bit, d) in ring.bits.iter_mut().zip(dist) {
        if d > config.max_ring_tower_dist_px {
            *bit = false;
        }
    }
    Ok(ring)
}

/// Mean set-pixel coordinate.
pub fn ring_centroid(mask: &BinaryMask) -> Option<(f64, f64)> {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for (x, y) in mask.iter_set() {
        sx += x as f64;
        sy += y as f64;
        n += 1;
    }
    (n > 0).then(|| (sx / n as f64, sy / n as f64))
}

// clockwise, starting west, y pointing down
const MOORE: [(i32, i32); 8] = [
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
];

/// Outer boundary of every 8-connected region as a closed polygon of pixel
/// coordinates (Moore-neighbour tracing).
pub fn outline_polygons(mask: &BinaryMask) -> Vec<Vec<(u32, u32)>> {
    let (w, h) = (mask.width as i32, mask.height as i32);
    let inside =
        |x: i32, y: i32| x >= 0 && y >= 0 && x < w && y < h && mask.get(x as u32, y as u32);
    let mut claimed = vec![false; mask.bits.len()];
    let mut polygons = Vec::new();
    for start in 0..mask.bits.len() {
        if !mask.bits[start] || claimed[start] {
            continue;
        }
        let s = (start as i32 % w, start as i32 / w);
        // flood the 8-connected region so interior pixels are not traced again
        let mut stack = vec![start];
        claimed[start] = true;
        while let Some(i) = stack.pop() {
            let (x, y) = (i as i32 % w, i as i32 / w);
            for (dx, dy) in MOORE {
                let (nx, ny) = (x + dx, y + dy);
                if inside(nx, ny) {
                    let j = (ny * w + nx) as usize;
                    if !claimed[j] {
                        claimed[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        let mut polygon = vec![(s.0 as u32, s.1 as u32)];
        let mut p = s;
        let mut back = 0usize; // direction from p to the last background pixel
        let mut first_move: Option<(i32, i32)> = None;
        loop {
            let mut next = None;
            for k in 1..=8 {
                let dir = (back + k) % 8;
                let (nx, ny) = (p.0 + MOORE[dir].0, p.1 + MOORE[dir].1);
                if inside(nx, ny) {
                    let prev = MOORE[(back + k - 1) % 8];
                    let bg = (p.0 + prev.0, p.1 + prev.1);
                    let rel = (bg.0 - nx, bg.1 - ny);
                    let new_back = MOORE.iter().position(|&d| d == rel).unwrap_or(0);
                    next = Some(((nx, ny), new_back));
                    break;
                }
            }
            let Some((c, new_back)) = next else { break };
            if p == s {
                match first_move {
                    None => first_move = Some(c),
                    Some(m) if m == c => break,
                    Some(_) => {}
                }
            }
            p = c;
            back = new_back;
            if p != s {
                polygon.push((p.0 as u32, p.1 as u32));
            }
        }
        polygons.push(polygon);
    }
    polygons
}
