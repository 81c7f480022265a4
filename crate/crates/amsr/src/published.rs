//! Published reference numbers, shown in reports for comparison only.

pub const LABEL: &str = "published, not reproduced";

pub const METHODS: [&str; 6] = ["Bicubic", "SRCNN", "VDSR", "LapSRN", "MemNet", "AMMS"];
pub const DATASETS: [&str; 4] = ["set5", "set14", "bsd100", "urban100"];

/// `(psnr, ssim)` indexed by method, scale (2, 3, 4) and dataset.
#[rustfmt::skip]
const BENCHMARK: [[[(f64, f64); 4]; 3]; 6] = [
    [
        [(33.66, 0.9299), (30.24, 0.8688), (29.56, 0.8431), (26.88, 0.8403)],
        [(30.39, 0.8682), (27.55, 0.7742), (27.21, 0.7382), (24.46, 0.7349)],
        [(28.42, 0.8104), (26.00, 0.7027), (25.96, 0.6675), (23.14, 0.6577)],
    ],
    [
        [(36.66, 0.9542), (32.42, 0.9063), (31.36, 0.8879), (29.50, 0.8946)],
        [(32.75, 0.9090), (29.28, 0.8208), (28.41, 0.7863), (26.24, 0.7989)],
        [(30.48, 0.8628), (27.49, 0.7503), (26.90, 0.7101), (24.52, 0.7221)],
    ],
    [
        [(37.53, 0.9587), (33.03, 0.9124), (31.90, 0.8960), (30.76, 0.9140)],
        [(33.66, 0.9213), (29.77, 0.8314), (28.82, 0.7976), (27.14, 0.8279)],
        [(31.35, 0.8838), (28.01, 0.7674), (27.29, 0.7251), (25.18, 0.7524)],
    ],
    [
        [(37.52, 0.9591), (33.08, 0.9130), (30.41, 0.9101), (37.27, 0.9740)],
        [(33.82, 0.9227), (29.79, 0.8320), (27.07, 0.8272), (32.19, 0.9334)],
        [(31.51, 0.8855), (28.19, 0.7720), (25.21, 0.7553), (29.09, 0.8893)],
    ],
    [
        [(37.78, 0.9597), (33.28, 0.9142), (32.08, 0.8978), (31.31, 0.9195)],
        [(34.09, 0.9248), (30.00, 0.8350), (28.96, 0.8001), (27.56, 0.8376)],
        [(31.74, 0.8893), (28.26, 0.7723), (27.40, 0.7281), (25.50, 0.7630)],
    ],
    [
        [(37.92, 0.9623), (33.51, 0.9160), (32.23, 0.8997), (31.88, 0.9290)],
        [(34.23, 0.9299), (30.22, 0.8369), (29.01, 0.8056), (27.88, 0.8499)],
        [(31.95, 0.8912), (28.43, 0.7748), (27.49, 0.7334), (25.78, 0.7753)],
    ],
];

/// Ablation rows: (non-local, second-order, multi-scale, PSNR) on Set5.
pub const ABLATION: [(bool, bool, bool, f64); 4] = [
    (true, false, false, 36.32),
    (false, true, false, 36.78),
    (false, false, true, 36.54),
    (true, true, true, 37.23),
];

fn dataset_index(name: &str) -> Option<usize> {
    let lower = name.to_ascii_lowercase();
    DATASETS.iter().position(|d| *d == lower)
}

/// Every method's published `(psnr, ssim)` for a dataset and scale.
pub fn benchmark(dataset: &str, scale: usize) -> Option<Vec<(&'static str, f64, f64)>> {
    let d = dataset_index(dataset)?;
    let s = scale.checked_sub(2).filter(|&s| s < 3)?;
    Some(
        METHODS
            .iter()
            .zip(BENCHMARK.iter())
            .map(|(m, rows)| (*m, rows[s][d].0, rows[s][d].1))
            .collect(),
    )
}

/// Published bicubic `(psnr, ssim)`.
pub fn bicubic(dataset: &str, scale: usize) -> Option<(f64, f64)> {
    benchmark(dataset, scale).map(|rows| (rows[0].1, rows[0].2))
}
