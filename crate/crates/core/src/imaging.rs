//! Images, YCbCr conversion and bicubic resampling.
//!
//! [`bicubic_resize`] reproduces the reference resizer used by the
//! super-resolution literature: Keys cubic (a = −0.5), half-pixel-centred
//! coordinates, kernel stretched by the scale when antialiasing a
//! downscale, taps renormalized to sum to one, and symmetric (mirror)
//! extension at the borders.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Interleaved 8-bit RGB, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageU8 {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl ImageU8 {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::contract(format!("image dimensions {width}×{height} must be positive")));
        }
        if pixels.len() != 3 * width * height {
            return Err(Error::contract(format!(
                "{width}×{height} RGB image needs {} bytes, got {}",
                3 * width * height,
                pixels.len()
            )));
        }
        Ok(ImageU8 { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        let pixels = rgb.iter().copied().cycle().take(3 * width * height).collect();
        Self::new(width, height, pixels)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Result<Self> {
        let mut pixels = Vec::with_capacity(3 * width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Window with top-left corner `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(Error::contract(format!(
                "crop {width}×{height}+{x0}+{y0} outside {}×{} image",
                self.width, self.height
            )));
        }
        let mut pixels = Vec::with_capacity(3 * width * height);
        for y in y0..y0 + height {
            let start = 3 * (y * self.width + x0);
            pixels.extend_from_slice(&self.pixels[start..start + 3 * width]);
        }
        Self::new(width, height, pixels)
    }

    /// Crop from the top-left so both dimensions are multiples of `scale`.
    pub fn modcrop(&self, scale: usize) -> Result<Self> {
        let (w, h) = modcrop_dims(self.width, self.height, scale)?;
        self.crop(0, 0, w, h)
    }

    /// RGB planes as `f64` in [0, 255].
    pub fn to_planar(&self) -> ImagePlanar {
        let n = self.width * self.height;
        let mut planes = vec![Vec::with_capacity(n); 3];
        for px in self.pixels.chunks_exact(3) {
            for (plane, &v) in planes.iter_mut().zip(px) {
                plane.push(v as f64);
            }
        }
        ImagePlanar {
            width: self.width,
            height: self.height,
            planes,
        }
    }

    /// Clamps to [0, 255] and rounds half away from zero. A single plane is
    /// replicated to gray.
    pub fn from_planar(img: &ImagePlanar) -> Self {
        let n = img.width * img.height;
        let mut pixels = Vec::with_capacity(3 * n);
        for i in 0..n {
            for c in 0..3 {
                let plane = &img.planes[c.min(img.planes.len() - 1)];
                pixels.push(to_u8(plane[i]));
            }
        }
        ImageU8 {
            width: img.width,
            height: img.height,
            pixels,
        }
    }
}

/// Clamp to [0, 255], round half away from zero.
pub fn to_u8(v: f64) -> u8 {
    libm::round(v.clamp(0.0, 255.0)) as u8
}

pub fn modcrop_dims(width: usize, height: usize, scale: usize) -> Result<(usize, usize)> {
    if scale == 0 {
        return Err(Error::contract("modcrop scale must be at least 1"));
    }
    let (w, h) = (width / scale * scale, height / scale * scale);
    if w == 0 || h == 0 {
        return Err(Error::contract(format!(
            "{width}×{height} image is smaller than scale {scale}"
        )));
    }
    Ok((w, h))
}

/// One or three floating-point planes, nominally in [0, 255].
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePlanar {
    width: usize,
    height: usize,
    planes: Vec<Vec<f64>>,
}

impl ImagePlanar {
    pub fn new(width: usize, height: usize, planes: Vec<Vec<f64>>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::contract(format!("image dimensions {width}×{height} must be positive")));
        }
        if planes.len() != 1 && planes.len() != 3 {
            return Err(Error::contract(format!("{} planes; expected 1 or 3", planes.len())));
        }
        for p in &planes {
            if p.len() != width * height {
                return Err(Error::contract(format!(
                    "plane of {} values for a {width}×{height} image",
                    p.len()
                )));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::contract("non-finite pixel value"));
            }
        }
        Ok(ImagePlanar { width, height, planes })
    }

    pub fn gray(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(width, height, vec![values])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn planes(&self) -> &[Vec<f64>] {
        &self.planes
    }

    pub fn plane(&self, i: usize) -> &[f64] {
        &self.planes[i]
    }

    pub fn get(&self, plane: usize, x: usize, y: usize) -> f64 {
        self.planes[plane][y * self.width + x]
    }

    /// The single plane `i` as its own image.
    pub fn take_plane(&self, i: usize) -> ImagePlanar {
        ImagePlanar {
            width: self.width,
            height: self.height,
            planes: vec![self.planes[i].clone()],
        }
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if x0 + width > self.width || y0 + height > self.height || width == 0 || height == 0 {
            return Err(Error::contract(format!(
                "crop {width}×{height}+{x0}+{y0} outside {}×{} image",
                self.width, self.height
            )));
        }
        let planes = self
            .planes
            .iter()
            .map(|p| {
                let mut out = Vec::with_capacity(width * height);
                for y in y0..y0 + height {
                    out.extend_from_slice(&p[y * self.width + x0..y * self.width + x0 + width]);
                }
                out
            })
            .collect();
        Ok(ImagePlanar { width, height, planes })
    }

    pub fn modcrop(&self, scale: usize) -> Result<Self> {
        let (w, h) = modcrop_dims(self.width, self.height, scale)?;
        self.crop(0, 0, w, h)
    }
}

const RGB_TO_YCBCR: [[f64; 3]; 3] = [
    [65.481, 128.553, 24.966],
    [-37.797, -74.203, 112.0],
    [112.0, -93.786, -18.214],
];
const YCBCR_OFFSET: [f64; 3] = [16.0, 128.0, 128.0];

/// Studio-swing BT.601: planes Y, Cb, Cr.
pub fn rgb_to_ycbcr(img: &ImageU8) -> ImagePlanar {
    let n = img.width * img.height;
    let mut planes = vec![Vec::with_capacity(n); 3];
    for px in img.pixels.chunks_exact(3) {
        let rgb = [px[0] as f64, px[1] as f64, px[2] as f64];
        for (c, plane) in planes.iter_mut().enumerate() {
            let m = RGB_TO_YCBCR[c];
            plane.push(YCBCR_OFFSET[c] + (m[0] * rgb[0] + m[1] * rgb[1] + m[2] * rgb[2]) / 255.0);
        }
    }
    ImagePlanar {
        width: img.width,
        height: img.height,
        planes,
    }
}

/// Luma plane only.
pub fn luma(img: &ImageU8) -> ImagePlanar {
    let m = RGB_TO_YCBCR[0];
    let plane = img
        .pixels
        .chunks_exact(3)
        .map(|px| 16.0 + (m[0] * px[0] as f64 + m[1] * px[1] as f64 + m[2] * px[2] as f64) / 255.0)
        .collect();
    ImagePlanar {
        width: img.width,
        height: img.height,
        planes: vec![plane],
    }
}

/// Inverse of [`rgb_to_ycbcr`], clamped and rounded to u8.
pub fn ycbcr_to_rgb(img: &ImagePlanar) -> Result<ImageU8> {
    if img.planes.len() != 3 {
        return Err(Error::contract("ycbcr_to_rgb needs three planes"));
    }
    let inv = invert3(&RGB_TO_YCBCR);
    let n = img.width * img.height;
    let mut pixels = Vec::with_capacity(3 * n);
    for i in 0..n {
        let ycc = [
            (img.planes[0][i] - YCBCR_OFFSET[0]) * 255.0,
            (img.planes[1][i] - YCBCR_OFFSET[1]) * 255.0,
            (img.planes[2][i] - YCBCR_OFFSET[2]) * 255.0,
        ];
        for row in &inv {
            pixels.push(to_u8(row[0] * ycc[0] + row[1] * ycc[1] + row[2] * ycc[2]));
        }
    }
    ImageU8::new(img.width, img.height, pixels)
}

fn invert3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
            let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
            *v = (m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]) / det;
        }
    }
    out
}

/// Keys cubic convolution kernel with a = −0.5.
pub fn cubic(x: f64) -> f64 {
    let ax = x.abs();
    let ax2 = ax * ax;
    let ax3 = ax2 * ax;
    if ax <= 1.0 {
        1.5 * ax3 - 2.5 * ax2 + 1.0
    } else if ax < 2.0 {
        -0.5 * ax3 + 2.5 * ax2 - 4.0 * ax + 2.0
    } else {
        0.0
    }
}

/// Source taps `(index, weight)` for every output sample along one axis.
#[derive(Clone, Debug)]
pub struct Taps {
    pub taps: Vec<Vec<(usize, f64)>>,
}

impl Taps {
    pub fn new(in_len: usize, out_len: usize, antialias: bool) -> Self {
        let scale = out_len as f64 / in_len as f64;
        let (kscale, width) = if scale < 1.0 && antialias {
            (scale, 4.0 / scale)
        } else {
            (1.0, 4.0)
        };
        let count = libm::ceil(width) as isize + 2;
        let taps = (0..out_len)
            .map(|i| {
                let u = (i as f64 + 0.5) / scale - 0.5;
                let left = libm::floor(u - width / 2.0) as isize;
                let mut row: Vec<(usize, f64)> = (0..count)
                    .filter_map(|j| {
                        let idx = left + j;
                        let w = kscale * cubic(kscale * (u - idx as f64));
                        (w != 0.0).then(|| (reflect(idx, in_len), w))
                    })
                    .collect();
                let total: f64 = row.iter().map(|&(_, w)| w).sum();
                for t in row.iter_mut() {
                    t.1 /= total;
                }
                row
            })
            .collect();
        Taps { taps }
    }
}

/// Symmetric extension with the edge sample repeated:
/// `… 1 0 | 0 1 … n-1 | n-1 n-2 …`.
fn reflect(idx: isize, len: usize) -> usize {
    let period = 2 * len as isize;
    let m = idx.rem_euclid(period);
    if m < len as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Separable bicubic resampling of every plane: horizontal pass, then
/// vertical, in `f64` throughout.
pub fn bicubic_resize(img: &ImagePlanar, out_w: usize, out_h: usize, antialias: bool) -> Result<ImagePlanar> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::contract(format!("output size {out_w}×{out_h} must be positive")));
    }
    let (w, h) = (img.width, img.height);
    let tx = Taps::new(w, out_w, antialias);
    let ty = Taps::new(h, out_h, antialias);
    let planes = img
        .planes
        .iter()
        .map(|src| {
            let mut mid = vec![0.0; out_w * h];
            for y in 0..h {
                let row = &src[y * w..(y + 1) * w];
                for (x, taps) in tx.taps.iter().enumerate() {
                    mid[y * out_w + x] = taps.iter().map(|&(i, wt)| wt * row[i]).sum();
                }
            }
            let mut out = vec![0.0; out_w * out_h];
            for (y, taps) in ty.taps.iter().enumerate() {
                let dst = &mut out[y * out_w..(y + 1) * out_w];
                for &(i, wt) in taps {
                    for (d, &m) in dst.iter_mut().zip(&mid[i * out_w..(i + 1) * out_w]) {
                        *d += wt * m;
                    }
                }
            }
            out
        })
        .collect();
    ImagePlanar::new(out_w, out_h, planes)
}

/// [`bicubic_resize`] on an 8-bit image, clamped and rounded back to u8.
pub fn resize_u8(img: &ImageU8, out_w: usize, out_h: usize, antialias: bool) -> Result<ImageU8> {
    let planar = bicubic_resize(&img.to_planar(), out_w, out_h, antialias)?;
    Ok(ImageU8::from_planar(&planar))
}
