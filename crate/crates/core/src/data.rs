//! Degradation, patch sampling, augmentation and mean normalization.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imaging::{bicubic_resize, to_u8, ImageU8};
use crate::tensor::{Scalar, Shape, Tensor};

/// Scales with a trained reconstruction head in the reference setup.
pub const SUPPORTED_SCALES: [usize; 3] = [2, 3, 4];

/// Mean RGB of the DIV2K training set on the 0–255 scale.
pub const DIV2K_MEAN: [f64; 3] = [114.444, 111.4605, 103.02];

pub fn check_scale(scale: usize) -> Result<()> {
    if SUPPORTED_SCALES.contains(&scale) {
        Ok(())
    } else {
        Err(Error::config("scale", format!("{scale} is not one of 2, 3, 4")))
    }
}

/// Modcrop, antialiased bicubic downscale, then clamp and round.
pub fn make_lr(hr: &ImageU8, scale: usize) -> Result<ImageU8> {
    check_scale(scale)?;
    let hr = hr.modcrop(scale)?;
    let lr = bicubic_resize(&hr.to_planar(), hr.width() / scale, hr.height() / scale, true)?;
    Ok(ImageU8::from_planar(&lr))
}

/// Bicubic upscale by `scale` without antialiasing, the baseline method.
pub fn upscale_bicubic(lr: &ImageU8, scale: usize) -> Result<ImageU8> {
    let up = bicubic_resize(&lr.to_planar(), lr.width() * scale, lr.height() * scale, false)?;
    Ok(ImageU8::from_planar(&up))
}

/// `1×3×h×w` tensor of raw 0–255 values.
pub fn image_to_tensor<T: Scalar>(img: &ImageU8) -> Tensor<T> {
    let w = img.width();
    let px = img.pixels();
    Tensor::from_fn(Shape::new(1, 3, img.height(), w), |_, c, y, x| {
        T::of(px[3 * (y * w + x) + c] as f64)
    })
}

/// Sample `n` of an `N×3×h×w` tensor on the 0–255 scale, clamped and rounded.
pub fn tensor_to_image<T: Scalar>(t: &Tensor<T>, n: usize) -> Result<ImageU8> {
    let s = t.shape();
    if s.c != 3 || n >= s.n {
        return Err(Error::InvalidShape {
            op: "tensor_to_image",
            shape: s,
            reason: format!("expected 3 channels and sample {n} in range"),
        });
    }
    ImageU8::from_fn(s.w, s.h, |x, y| {
        [0, 1, 2].map(|c| to_u8(t.at(n, c, y, x).as_f64()))
    })
}

/// Per-channel mean subtracted before the network sees a patch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormStats {
    pub mean_rgb: [f64; 3],
}

impl Default for NormStats {
    fn default() -> Self {
        NormStats { mean_rgb: DIV2K_MEAN }
    }
}

impl NormStats {
    pub fn new(mean_rgb: [f64; 3]) -> Result<Self> {
        if mean_rgb.iter().any(|m| !(0.0..=255.0).contains(m)) {
            return Err(Error::config("mean_rgb", format!("{mean_rgb:?} outside [0, 255]")));
        }
        Ok(NormStats { mean_rgb })
    }

    pub fn normalize<T: Scalar>(&self, t: &Tensor<T>) -> Tensor<T> {
        let mut out = t.clone();
        self.shift(&mut out, -1.0);
        out
    }

    /// Adds the mean back and clamps to [0, 255].
    pub fn denormalize<T: Scalar>(&self, t: &Tensor<T>) -> Tensor<T> {
        let mut out = t.clone();
        self.shift(&mut out, 1.0);
        let (lo, hi) = (T::zero(), T::of(255.0));
        for v in out.data_mut() {
            *v = v.max(lo).min(hi);
        }
        out
    }

    fn shift<T: Scalar>(&self, t: &mut Tensor<T>, sign: f64) {
        let s = t.shape();
        let plane = s.plane();
        for (i, chunk) in t.data_mut().chunks_mut(plane).enumerate() {
            let m = T::of(sign * self.mean_rgb[(i % s.c) % 3]);
            for v in chunk {
                *v = *v + m;
            }
        }
    }
}

/// Pixel-weighted running RGB mean over a stream of images.
#[derive(Clone, Debug, Default)]
pub struct MeanAccumulator {
    sums: [f64; 3],
    pixels: u64,
}

impl MeanAccumulator {
    pub fn add(&mut self, img: &ImageU8) {
        for px in img.pixels().chunks_exact(3) {
            for (s, &v) in self.sums.iter_mut().zip(px) {
                *s += v as f64;
            }
        }
        self.pixels += (img.width() * img.height()) as u64;
    }

    pub fn finish(&self) -> Result<NormStats> {
        if self.pixels == 0 {
            return Err(Error::contract("mean of an empty image set"));
        }
        NormStats::new(self.sums.map(|s| s / self.pixels as f64))
    }
}

pub fn compute_mean<'a>(images: impl IntoIterator<Item = &'a ImageU8>) -> Result<NormStats> {
    let mut acc = MeanAccumulator::default();
    for img in images {
        acc.add(img);
    }
    acc.finish()
}

/// An aligned HR/LR training crop, both on the raw 0–255 scale.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePair {
    pub hr: Tensor<f32>,
    pub lr: Tensor<f32>,
    pub source: usize,
    /// Top-left corner in LR pixels, `(x, y)`.
    pub origin: (usize, usize),
}

/// Uniformly placed `patch×patch` HR crop and its `patch/scale` LR crop.
/// `Ok(None)` when the image is too small, so the caller can draw another.
pub fn sample_patch<R: Rng + ?Sized>(
    hr: &ImageU8,
    lr: &ImageU8,
    scale: usize,
    patch: usize,
    source: usize,
    rng: &mut R,
) -> Result<Option<SamplePair>> {
    if patch == 0 || patch % scale != 0 {
        return Err(Error::config("patch", format!("{patch} is not a positive multiple of scale {scale}")));
    }
    if hr.width() < lr.width() * scale || hr.height() < lr.height() * scale {
        return Err(Error::contract(format!(
            "HR {}×{} does not cover LR {}×{} at scale {scale}",
            hr.width(),
            hr.height(),
            lr.width(),
            lr.height()
        )));
    }
    let lp = patch / scale;
    if lr.width() < lp || lr.height() < lp {
        return Ok(None);
    }
    let x = rng.gen_range(0..=lr.width() - lp);
    let y = rng.gen_range(0..=lr.height() - lp);
    let lr_crop = lr.crop(x, y, lp, lp)?;
    let hr_crop = hr.crop(x * scale, y * scale, patch, patch)?;
    Ok(Some(SamplePair {
        hr: image_to_tensor(&hr_crop),
        lr: image_to_tensor(&lr_crop),
        source,
        origin: (x, y),
    }))
}

/// Horizontal flip, vertical flip, then a 90° counter-clockwise turn, each
/// applied when set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Augmentation {
    pub hflip: bool,
    pub vflip: bool,
    pub rot90: bool,
}

impl Augmentation {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Augmentation {
            hflip: rng.gen_bool(0.5),
            vflip: rng.gen_bool(0.5),
            rot90: rng.gen_bool(0.5),
        }
    }

    pub fn apply<T: Scalar>(&self, t: &Tensor<T>) -> Tensor<T> {
        let mut out = t.clone();
        if self.hflip {
            out = hflip(&out);
        }
        if self.vflip {
            out = vflip(&out);
        }
        if self.rot90 {
            out = rot90(&out);
        }
        out
    }

    pub fn apply_pair(&self, pair: &SamplePair) -> SamplePair {
        SamplePair {
            hr: self.apply(&pair.hr),
            lr: self.apply(&pair.lr),
            ..pair.clone()
        }
    }
}

pub fn hflip<T: Scalar>(t: &Tensor<T>) -> Tensor<T> {
    let w = t.shape().w;
    Tensor::from_fn(t.shape(), |n, c, y, x| t.at(n, c, y, w - 1 - x))
}

pub fn vflip<T: Scalar>(t: &Tensor<T>) -> Tensor<T> {
    let h = t.shape().h;
    Tensor::from_fn(t.shape(), |n, c, y, x| t.at(n, c, h - 1 - y, x))
}

/// Counter-clockwise quarter turn; `h×w` becomes `w×h`.
pub fn rot90<T: Scalar>(t: &Tensor<T>) -> Tensor<T> {
    let s = t.shape();
    Tensor::from_fn(Shape::new(s.n, s.c, s.w, s.h), |n, c, y, x| t.at(n, c, x, s.w - 1 - y))
}

/// A training image with its cached LR counterpart.
#[derive(Clone, Debug)]
pub struct ImagePair {
    pub id: String,
    pub hr: ImageU8,
    pub lr: ImageU8,
}

impl ImagePair {
    pub fn from_hr(id: &str, hr: &ImageU8, scale: usize) -> Result<Self> {
        let hr = hr.modcrop(scale)?;
        let lr = make_lr(&hr, scale)?;
        Ok(ImagePair { id: id.into(), hr, lr })
    }
}

/// Generator for the sample at `(epoch, iter, index)`. Every sample has its
/// own stream, so batches can be assembled in any order or in parallel.
pub fn sample_rng(seed: u64, epoch: usize, iter: usize, index: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (chunk, v) in key
        .chunks_exact_mut(8)
        .zip([seed, epoch as u64, iter as u64, index as u64])
    {
        chunk.copy_from_slice(&v.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Attempts per sample before giving up on finding a large enough image.
const MAX_DRAWS: usize = 64;

/// One augmented sample: image chosen uniformly with replacement, uniform
/// crop, random flips and rotation.
pub fn draw_sample(
    pairs: &[ImagePair],
    scale: usize,
    patch: usize,
    seed: u64,
    epoch: usize,
    iter: usize,
    index: usize,
) -> Result<SamplePair> {
    if pairs.is_empty() {
        return Err(Error::contract("no training images"));
    }
    let mut rng = sample_rng(seed, epoch, iter, index);
    for _ in 0..MAX_DRAWS {
        let i = rng.gen_range(0..pairs.len());
        if let Some(pair) = sample_patch(&pairs[i].hr, &pairs[i].lr, scale, patch, i, &mut rng)? {
            return Ok(Augmentation::draw(&mut rng).apply_pair(&pair));
        }
    }
    Err(Error::contract(format!(
        "no training image is at least {patch}×{patch} after {MAX_DRAWS} draws"
    )))
}

/// `(hr, lr)` batch tensors for one iteration.
pub fn draw_batch(
    pairs: &[ImagePair],
    scale: usize,
    patch: usize,
    batch: usize,
    seed: u64,
    epoch: usize,
    iter: usize,
) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let samples = (0..batch)
        .map(|b| draw_sample(pairs, scale, patch, seed, epoch, iter, b))
        .collect::<Result<Vec<_>>>()?;
    let hr: Vec<_> = samples.iter().map(|s| s.hr.clone()).collect();
    let lr: Vec<_> = samples.into_iter().map(|s| s.lr).collect();
    Ok((Tensor::stack(&hr)?, Tensor::stack(&lr)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn make_lr_dims_and_constant() {
        let img = ImageU8::filled(100, 100, [40, 90, 200]).unwrap();
        let lr = make_lr(&img, 2).unwrap();
        assert_eq!((lr.width(), lr.height()), (50, 50));
        assert!(lr.pixels().chunks(3).all(|p| p == [40, 90, 200]));
        assert!(make_lr(&img, 5).is_err());
        assert!(make_lr(&ImageU8::filled(3, 3, [0; 3]).unwrap(), 4).is_err());
    }

    #[test]
    fn mean_is_pixel_weighted() {
        let one = ImageU8::filled(1, 1, [0, 0, 0]).unwrap();
        let nine = ImageU8::filled(3, 3, [100, 50, 10]).unwrap();
        let stats = compute_mean([&one, &nine]).unwrap();
        assert_eq!(stats.mean_rgb, [90.0, 45.0, 9.0]);
        assert!(compute_mean(core::iter::empty()).is_err());
    }

    #[test]
    fn normalize_roundtrip() {
        let img = ImageU8::from_fn(4, 4, |x, y| [(x * 60) as u8, (y * 60) as u8, 255]).unwrap();
        let t = image_to_tensor::<f32>(&img);
        let stats = NormStats::default();
        let back = tensor_to_image(&stats.denormalize(&stats.normalize(&t)), 0).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn patch_sizes_and_bounds() {
        let hr = ImageU8::from_fn(200, 240, |x, y| [x as u8, y as u8, 0]).unwrap();
        let lr = make_lr(&hr, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let p = sample_patch(&hr, &lr, 4, 192, 0, &mut rng).unwrap().unwrap();
            assert_eq!(p.lr.shape(), Shape::new(1, 3, 48, 48));
            assert_eq!(p.hr.shape(), Shape::new(1, 3, 192, 192));
            assert!(p.origin.0 <= lr.width() - 48 && p.origin.1 <= lr.height() - 48);
            assert_eq!(p.hr.at(0, 0, 0, 0), (p.origin.0 * 4) as f32);
        }
        let small = ImageU8::filled(40, 40, [0; 3]).unwrap();
        let small_lr = make_lr(&small, 4).unwrap();
        assert!(sample_patch(&small, &small_lr, 4, 192, 0, &mut rng).unwrap().is_none());
    }

    #[test]
    fn flips_are_involutions() {
        let t = Tensor::<f32>::from_fn(Shape::new(1, 3, 4, 4), |_, c, y, x| (c * 100 + y * 10 + x) as f32);
        assert_eq!(hflip(&hflip(&t)), t);
        assert_eq!(vflip(&vflip(&t)), t);
        assert_eq!(rot90(&rot90(&rot90(&rot90(&t)))), t);
        assert_eq!(Augmentation::default().apply(&t), t);
        assert_eq!(rot90(&t).at(0, 0, 0, 0), t.at(0, 0, 0, 3));
    }

    #[test]
    fn sample_stream_is_reproducible() {
        let hr = ImageU8::from_fn(64, 64, |x, y| [(x * 3) as u8, (y * 3) as u8, (x + y) as u8]).unwrap();
        let pairs = [ImagePair::from_hr("a", &hr, 2).unwrap()];
        let a = draw_batch(&pairs, 2, 16, 4, 9, 1, 3).unwrap();
        let b = draw_batch(&pairs, 2, 16, 4, 9, 1, 3).unwrap();
        assert_eq!(a, b);
        let c = draw_batch(&pairs, 2, 16, 4, 9, 1, 4).unwrap();
        assert_ne!(a, c);
    }
}
