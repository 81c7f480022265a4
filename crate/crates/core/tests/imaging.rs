use amsr_core::data::{make_lr, rot90, upscale_bicubic};
use amsr_core::imaging::{bicubic_resize, luma, ImagePlanar, ImageU8};
use amsr_core::metrics::{psnr, ssim};
use amsr_core::{Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Keys cubic with a = −0.5, written from the piecewise definition.
fn keys(x: f64) -> f64 {
    let a = -0.5;
    let t = x.abs();
    if t <= 1.0 {
        (a + 2.0) * t.powi(3) - (a + 3.0) * t.powi(2) + 1.0
    } else if t < 2.0 {
        a * t.powi(3) - 5.0 * a * t.powi(2) + 8.0 * a * t - 4.0 * a
    } else {
        0.0
    }
}

/// One-based weights and mirrored indices for output sample `i` (1-based).
fn weights(in_len: usize, out_len: usize, i: usize, antialias: bool) -> Vec<(usize, f64)> {
    let scale = out_len as f64 / in_len as f64;
    let shrink = antialias && scale < 1.0;
    let width = if shrink { 4.0 / scale } else { 4.0 };
    let x = i as f64 / scale + 0.5 * (1.0 - 1.0 / scale);
    let left = (x - width / 2.0).floor() as i64;
    let taps = width.ceil() as i64 + 2;
    let mirror: Vec<usize> = (1..=in_len).chain((1..=in_len).rev()).collect();
    let mut out: Vec<(usize, f64)> = (0..taps)
        .map(|k| {
            let idx = left + k;
            let d = x - idx as f64;
            let w = if shrink { scale * keys(scale * d) } else { keys(d) };
            let m = mirror[(idx - 1).rem_euclid(2 * in_len as i64) as usize];
            (m, w)
        })
        .collect();
    let total: f64 = out.iter().map(|p| p.1).sum();
    out.iter_mut().for_each(|p| p.1 /= total);
    out
}

/// Non-separable evaluation: every output pixel sums its full 2-D stencil.
fn oracle_resize(img: &[f64], w: usize, h: usize, ow: usize, oh: usize, antialias: bool) -> Vec<f64> {
    let mut out = vec![0.0; ow * oh];
    for oy in 1..=oh {
        let wy = weights(h, oh, oy, antialias);
        for ox in 1..=ow {
            let wx = weights(w, ow, ox, antialias);
            let mut acc = 0.0;
            for &(sy, a) in &wy {
                for &(sx, b) in &wx {
                    acc += a * b * img[(sy - 1) * w + (sx - 1)];
                }
            }
            out[(oy - 1) * ow + (ox - 1)] = acc;
        }
    }
    out
}

fn random_plane(w: usize, h: usize, seed: u64) -> ImagePlanar {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ImagePlanar::gray(w, h, (0..w * h).map(|_| rng.gen_range(0.0..255.0)).collect()).unwrap()
}

#[test]
fn resize_matches_direct_summation() {
    let cases = [
        (7, 5, 14, 10, false),
        (7, 5, 21, 15, false),
        (12, 9, 6, 3, true),
        (12, 12, 3, 3, true),
        (16, 8, 8, 4, true),
        (9, 6, 4, 2, false),
    ];
    for (i, &(w, h, ow, oh, aa)) in cases.iter().enumerate() {
        let img = random_plane(w, h, i as u64);
        let fast = bicubic_resize(&img, ow, oh, aa).unwrap();
        let slow = oracle_resize(img.plane(0), w, h, ow, oh, aa);
        for (a, b) in fast.plane(0).iter().zip(&slow) {
            assert!((a - b).abs() < 1e-6, "case {i}: {a} vs {b}");
        }
    }
}

#[test]
fn bandlimited_roundtrip_above_40db() {
    let img = ImageU8::from_fn(96, 96, |x, y| {
        let (fx, fy) = (x as f64 / 96.0, y as f64 / 96.0);
        let v = 128.0
            + 60.0 * (2.0 * std::f64::consts::PI * fx).sin()
            + 40.0 * (2.0 * std::f64::consts::PI * (fx + fy)).cos();
        let v = v.round() as u8;
        [v, v / 2 + 60, 255 - v]
    })
    .unwrap();
    for s in [2, 3, 4] {
        let back = upscale_bicubic(&make_lr(&img, s).unwrap(), s).unwrap();
        let db = psnr(&luma(&img), &luma(&back), s).unwrap();
        assert!(db > 40.0, "×{s}: {db}");
    }
}

#[test]
fn rot90_commutes_with_downscaling() {
    let ramp = ImageU8::from_fn(8, 8, |x, _| [(x * 30) as u8; 3]).unwrap();
    let to_tensor = |img: &ImageU8| amsr_core::data::image_to_tensor::<f64>(img);
    let rotate_image = |img: &ImageU8| -> ImageU8 {
        amsr_core::data::tensor_to_image(&rot90(&to_tensor(img)), 0).unwrap()
    };
    let a = make_lr(&rotate_image(&ramp), 2).unwrap();
    let b = rotate_image(&make_lr(&ramp, 2).unwrap());
    assert_eq!(a, b);
    let t = Tensor::<f64>::from_fn(Shape::new(1, 1, 3, 5), |_, _, y, x| (y * 5 + x) as f64);
    assert_eq!(rot90(&t).shape(), Shape::new(1, 1, 5, 3));
}

fn oracle_ssim(a: &[f64], b: &[f64], w: usize, h: usize) -> f64 {
    let mut g = [[0.0; 11]; 11];
    let mut total = 0.0;
    for (i, row) in g.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let d2 = ((i as f64 - 5.0).powi(2) + (j as f64 - 5.0).powi(2)) / (2.0 * 1.5 * 1.5);
            *v = (-d2).exp();
            total += *v;
        }
    }
    let c1 = (0.01f64 * 255.0).powi(2);
    let c2 = (0.03f64 * 255.0).powi(2);
    let mut sum = 0.0;
    let mut count = 0;
    for y in 0..=h - 11 {
        for x in 0..=w - 11 {
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let k = g[i][j] / total;
                    ma += k * a[(y + i) * w + x + j];
                    mb += k * b[(y + i) * w + x + j];
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let k = g[i][j] / total;
                    let (da, db) = (a[(y + i) * w + x + j] - ma, b[(y + i) * w + x + j] - mb);
                    va += k * da * da;
                    vb += k * db * db;
                    cov += k * da * db;
                }
            }
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    sum / count as f64
}

#[test]
fn ssim_matches_window_oracle() {
    for seed in 0..4 {
        let a = random_plane(32, 32, 100 + seed);
        let noise = random_plane(32, 32, 200 + seed);
        let b = ImagePlanar::gray(
            32,
            32,
            a.plane(0).iter().zip(noise.plane(0)).map(|(x, n)| 0.7 * x + 0.3 * n).collect(),
        )
        .unwrap();
        let fast = ssim(&a, &b, 0).unwrap();
        let slow = oracle_ssim(a.plane(0), b.plane(0), 32, 32);
        assert!((fast - slow).abs() < 1e-6, "{fast} vs {slow}");
        let shaved = ssim(&a, &b, 3).unwrap();
        let crop = |p: &ImagePlanar| p.crop(3, 3, 26, 26).unwrap();
        let slow = oracle_ssim(crop(&a).plane(0), crop(&b).plane(0), 26, 26);
        assert!((shaved - slow).abs() < 1e-6);
    }
}

#[test]
fn psnr_decreases_with_noise_amplitude() {
    let base = ImageU8::from_fn(48, 48, |x, y| [(x * 4) as u8, (y * 4) as u8, 128]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let unit: Vec<f64> = (0..48 * 48 * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut last = f64::INFINITY;
    for amp in [1.0, 4.0, 16.0] {
        let pixels = base
            .pixels()
            .iter()
            .zip(&unit)
            .map(|(&p, n)| (p as f64 + amp * n).round().clamp(0.0, 255.0) as u8)
            .collect();
        let noisy = ImageU8::new(48, 48, pixels).unwrap();
        let db = psnr(&luma(&base), &luma(&noisy), 2).unwrap();
        assert!(db < last, "amplitude {amp}: {db} !< {last}");
        last = db;
    }
}

fn pattern(w: usize, h: usize) -> ImagePlanar {
    let v = (0..h)
        .flat_map(|y| (0..w).map(move |x| ((37 * y * w + 11 * x * x + 5 * y * y * x) % 256) as f64))
        .collect();
    ImagePlanar::gray(w, h, v).unwrap()
}

/// Outputs of an independent MATLAB-compatible imresize port (float32
/// precision) on `pattern`.
#[test]
fn matches_reference_resizer_values() {
    let cases: [(usize, usize, usize, usize, &[f64]); 5] = [
        (8, 6, 4, 3, &[
            21.9646453857, 107.3085479736, 135.8359832764, 103.3205108643, 127.6547241211, 185.4732055664,
            140.2299194336, 156.4859008789, 173.5739898682, 184.9936370850, 98.3462066650, 95.8127288818,
        ]),
        (6, 9, 2, 3, &[
            111.3336410522, 90.2301406860, 149.2711486816, 148.0251464844, 105.2059173584, 145.3784332275,
        ]),
        (8, 8, 2, 2, &[108.4068298340, 130.3793029785, 139.6332092285, 144.5806579590]),
        (4, 3, 8, 6, &[
            -14.8623046875, -12.4982910156, -7.7702636719, 2.1640625000, 17.3046875000, 47.4265136719,
            92.5295410156, 115.0810546875, 31.5002441406, 34.1740112305, 39.5215454102, 51.9707031250,
            71.5214843750, 79.8143920898, 76.8494262695, 75.3669433594, 124.2253417969, 127.5186157227,
            134.1051635742, 151.5839843750, 179.9550781250, 144.5901489258, 45.4891967773, -4.0612792969,
            134.6501464844, 139.4387817383, 149.0160522461, 169.3574218750, 200.4628906250, 167.9605102539,
            71.8502807617, 23.7951660156, 62.7746582031, 69.9345092773, 84.2542114258, 105.2910156250,
            133.0449218750, 149.9254760742, 155.9326782227, 158.9362792969, 26.8369140625, 35.1823730469,
            51.8732910156, 73.2578125000, 99.3359375000, 140.9079589844, 197.9738769531, 226.5068359375,
        ]),
        (3, 2, 9, 6, &[
            -13.4938354492, -12.3333406448, -10.4403285980, -7.3868455887, -1.8888959885, 8.4979381561,
            21.3292198181, 30.5555496216, 34.1604919434, -1.2222229242, 0.0000000000, 2.0370442867,
            5.2962894440, 11.0000000000, 21.5925960541, 34.6296348572, 44.0000000000, 47.6666717529,
            31.5020847321, 32.8889160156, 35.3100509644, 39.1179924011, 45.3703994751, 56.5116958618,
            70.0974349976, 79.8518829346, 83.6831588745, 76.4979400635, 78.1111068726, 81.0603637695,
            85.6227645874, 92.6296310425, 104.5253829956, 118.8655853271, 129.1481475830, 133.2057647705,
            109.2222213745, 111.0000000000, 114.3333435059, 119.4444351196, 127.0000000000, 139.4444427490,
            154.3333587646, 165.0000000000, 169.2222290039, 121.4938278198, 123.3333358765, 126.8107070923,
            132.1275634766, 139.8888854980, 152.5390930176, 167.6337432861, 178.4444580078, 182.7284088135,
        ]),
    ];
    for (w, h, ow, oh, expected) in cases {
        let out = bicubic_resize(&pattern(w, h), ow, oh, true).unwrap();
        for (a, b) in out.plane(0).iter().zip(expected) {
            assert!((a - b).abs() < 1e-3, "{w}×{h}→{ow}×{oh}: {a} vs {b}");
        }
    }
}
