//! PSNR and SSIM on the luma channel with border shaving.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::imaging::{luma, ImagePlanar, ImageU8};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
const PEAK: f64 = 255.0;

fn check_pair(op: &str, a: &ImagePlanar, b: &ImagePlanar, shave: usize) -> Result<(usize, usize)> {
    if a.planes().len() != 1 || b.planes().len() != 1 {
        return Err(Error::contract(format!("{op} expects single-plane images")));
    }
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(Error::contract(format!(
            "{op}: {}×{} vs {}×{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    if a.width() <= 2 * shave || a.height() <= 2 * shave {
        return Err(Error::contract(format!(
            "{op}: {}×{} image cannot shave {shave} pixels per border",
            a.width(),
            a.height()
        )));
    }
    Ok((a.width() - 2 * shave, a.height() - 2 * shave))
}

fn shaved(img: &ImagePlanar, shave: usize, w: usize, h: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(w * h);
    for y in shave..shave + h {
        let row = &img.plane(0)[y * img.width()..];
        out.extend_from_slice(&row[shave..shave + w]);
    }
    out
}

/// `10·log10(255²/MSE)` over the shaved region; `+∞` when identical.
pub fn psnr(a: &ImagePlanar, b: &ImagePlanar, shave: usize) -> Result<f64> {
    let (w, h) = check_pair("psnr", a, b, shave)?;
    let (pa, pb) = (shaved(a, shave, w, h), shaved(b, shave, w, h));
    let mse = pa.iter().zip(&pb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / (w * h) as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * libm::log10(PEAK * PEAK / mse))
}

/// Normalized 1-D Gaussian; the 2-D window is its outer product.
pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut g = [0.0; SSIM_WINDOW];
    let mid = (SSIM_WINDOW / 2) as f64;
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - mid;
        *v = libm::exp(-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA));
    }
    let total: f64 = g.iter().sum();
    for v in g.iter_mut() {
        *v /= total;
    }
    g
}

/// Valid-region separable filtering of a `w×h` plane.
fn filter_valid(src: &[f64], w: usize, h: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let k = SSIM_WINDOW;
    let (ow, oh) = (w + 1 - k, h + 1 - k);
    let mut mid = vec![0.0; ow * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            mid[y * ow + x] = g.iter().zip(&row[x..x + k]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|j| g[j] * mid[(y + j) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM over the valid region of the shaved images.
pub fn ssim(a: &ImagePlanar, b: &ImagePlanar, shave: usize) -> Result<f64> {
    let (w, h) = check_pair("ssim", a, b, shave)?;
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::contract(format!(
            "ssim: {w}×{h} region is smaller than the {SSIM_WINDOW}×{SSIM_WINDOW} window"
        )));
    }
    let (pa, pb) = (shaved(a, shave, w, h), shaved(b, shave, w, h));
    let g = gaussian_window();
    let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let mu_a = filter_valid(&pa, w, h, &g);
    let mu_b = filter_valid(&pb, w, h, &g);
    let aa = filter_valid(&prod(&pa, &pa), w, h, &g);
    let bb = filter_valid(&prod(&pb, &pb), w, h, &g);
    let ab = filter_valid(&prod(&pa, &pb), w, h, &g);
    let c1 = (K1 * PEAK) * (K1 * PEAK);
    let c2 = (K2 * PEAK) * (K2 * PEAK);
    let total: f64 = (0..mu_a.len())
        .map(|i| ssim_term(mu_a[i], mu_b[i], aa[i], bb[i], ab[i], c1, c2))
        .sum();
    Ok(total / mu_a.len() as f64)
}

/// SSIM of one window from its local moments.
pub fn ssim_term(mu_a: f64, mu_b: f64, aa: f64, bb: f64, ab: f64, c1: f64, c2: f64) -> f64 {
    let var_a = aa - mu_a * mu_a;
    let var_b = bb - mu_b * mu_b;
    let cov = ab - mu_a * mu_b;
    ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
        / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
}

/// One image's scores under the luma protocol.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRecord {
    pub image_id: String,
    pub psnr_db: f64,
    pub ssim: f64,
    pub scale: usize,
    pub shave: usize,
}

/// Converts both to luma and scores with `shave = scale`.
pub fn evaluate_pair(image_id: &str, hr: &ImageU8, sr: &ImageU8, scale: usize) -> Result<MetricRecord> {
    if (hr.width(), hr.height()) != (sr.width(), sr.height()) {
        return Err(Error::contract(format!(
            "{image_id}: HR {}×{} vs SR {}×{}",
            hr.width(),
            hr.height(),
            sr.width(),
            sr.height()
        )));
    }
    let (yh, ys) = (luma(hr), luma(sr));
    Ok(MetricRecord {
        image_id: image_id.into(),
        psnr_db: psnr(&yh, &ys, scale)?,
        ssim: ssim(&yh, &ys, scale)?,
        scale,
        shave: scale,
    })
}

/// Dataset means. Infinite PSNRs are left out of the PSNR mean and counted
/// in `excluded`.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub psnr_db: f64,
    pub ssim: f64,
    pub count: usize,
    pub excluded: Vec<String>,
}

pub fn aggregate(records: &[MetricRecord]) -> Aggregate {
    let finite: Vec<f64> = records.iter().map(|r| r.psnr_db).filter(|p| p.is_finite()).collect();
    let excluded = records
        .iter()
        .filter(|r| !r.psnr_db.is_finite())
        .map(|r| r.image_id.clone())
        .collect();
    let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
    let ssims: Vec<f64> = records.iter().map(|r| r.ssim).collect();
    Aggregate {
        psnr_db: mean(&finite),
        ssim: mean(&ssims),
        count: records.len(),
        excluded,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> ImagePlanar {
        let v = (0..w * h).map(|i| f(i % w, i / w)).collect();
        ImagePlanar::gray(w, h, v).unwrap()
    }

    #[test]
    fn psnr_unit_difference() {
        let a = plane(8, 8, |x, y| (x * 10 + y) as f64);
        let b = plane(8, 8, |x, y| (x * 10 + y) as f64 + 1.0);
        assert!((psnr(&a, &b, 0).unwrap() - 48.130_803_608).abs() < 1e-6);
        assert_eq!(psnr(&a, &a, 0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn shave_ignores_border() {
        let a = plane(8, 8, |_, _| 100.0);
        let b = plane(8, 8, |x, y| if (2..6).contains(&x) && (2..6).contains(&y) { 100.0 } else { 0.0 });
        assert_eq!(psnr(&a, &b, 2).unwrap(), f64::INFINITY);
        assert!(psnr(&a, &b, 1).unwrap().is_finite());
        assert!(psnr(&a, &b, 4).is_err());
    }

    #[test]
    fn window_sums_to_one() {
        let g = gaussian_window();
        assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(g[0], g[10]);
    }

    #[test]
    fn ssim_constant_offset_penalised() {
        let a = plane(16, 16, |_, _| 100.0);
        let b = plane(16, 16, |_, _| 120.0);
        let s = ssim(&a, &b, 0).unwrap();
        assert!(s > 0.0 && s < 1.0);
        assert_eq!(ssim(&a, &a, 0).unwrap(), 1.0);
    }

    #[test]
    fn ssim_region_too_small() {
        let a = plane(14, 14, |x, _| x as f64);
        assert!(ssim(&a, &a, 0).is_ok());
        assert!(ssim(&a, &a, 2).is_err());
    }

    #[test]
    fn aggregate_skips_infinite() {
        let rec = |id: &str, p: f64| MetricRecord {
            image_id: id.into(),
            psnr_db: p,
            ssim: 0.5,
            scale: 2,
            shave: 2,
        };
        let agg = aggregate(&[rec("a", 30.0), rec("b", f64::INFINITY), rec("c", 32.0)]);
        assert_eq!(agg.psnr_db, 31.0);
        assert_eq!(agg.ssim, 0.5);
        assert_eq!(agg.excluded, vec![String::from("b")]);
    }

    #[test]
    fn evaluate_pair_identity() {
        let img = ImageU8::from_fn(20, 20, |x, y| [(x * 12) as u8, (y * 12) as u8, 7]).unwrap();
        let r = evaluate_pair("img", &img, &img, 2).unwrap();
        assert_eq!(r.psnr_db, f64::INFINITY);
        assert_eq!(r.ssim, 1.0);
        assert_eq!(r.shave, 2);
    }
}
