//! Flat `key = value` run configuration for `train` and `ablate`.
//!
//! ```text
//! # toy run
//! preset = toy
//! scale = 2
//! train_manifest = data/train.txt
//! val_manifest = data/val.txt
//! out_dir = runs/toy
//! epochs = 2
//! iters_per_epoch = 10
//! ```
//!
//! `preset` (`toy` or `standard`) supplies model defaults; any model or
//! training field may then be overridden. Relative paths resolve against
//! the config file's directory. `mean` is `div2k`, `auto` (computed over
//! the training manifest) or three comma-separated values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use amsr_core::data::DIV2K_MEAN;
use amsr_core::model::ModelConfig;
use amsr_core::train::TrainConfig;

use crate::error::{AppError, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum MeanSource {
    Div2k,
    Auto,
    Fixed([f64; 3]),
}

impl MeanSource {
    pub fn fixed(&self) -> Option<[f64; 3]> {
        match self {
            MeanSource::Div2k => Some(DIV2K_MEAN),
            MeanSource::Auto => None,
            MeanSource::Fixed(v) => Some(*v),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Seed for weight initialization; defaults to the training seed.
    pub init_seed: u64,
    pub mean: MeanSource,
    pub train_manifest: PathBuf,
    pub val_manifest: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// LR tile side used when evaluating on the validation set.
    pub tile: usize,
    /// Canonical rendering of every resolved field, used for hashing.
    pub canonical: String,
}

const KEYS: &[&str] = &[
    "preset",
    "scale",
    "channels",
    "n_amms",
    "n_am",
    "nl_reduction",
    "so_reduction",
    "sf_layers",
    "nonlocal",
    "second_order",
    "multiscale",
    "lr0",
    "beta1",
    "beta2",
    "eps",
    "batch",
    "patch",
    "iters_per_epoch",
    "epochs",
    "lr_half_every",
    "seed",
    "init_seed",
    "checkpoint_every",
    "log_every",
    "mean",
    "train_manifest",
    "val_manifest",
    "out_dir",
    "tile",
];

/// Step count above which `train` warns that the run is far beyond desk
/// scale.
pub const LONG_RUN_STEPS: u64 = 1_000_000;

struct Fields {
    map: BTreeMap<String, String>,
}

impl Fields {
    fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn num<T: std::str::FromStr>(&self, key: &str, domain: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| AppError::config(key, format!("`{v}` is not {domain}")))
            })
            .transpose()
    }

    fn flag(&self, key: &str) -> Result<Option<bool>> {
        self.get(key)
            .map(|v| match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(AppError::config(key, format!("`{v}` is not one of true/false"))),
            })
            .transpose()
    }
}

impl RunConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| AppError::Usage(format!("config line {}: expected key = value", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(AppError::config(k, "unknown key"));
            }
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(AppError::config(k, "given more than once"));
            }
        }
        let f = Fields { map };

        let scale: usize = f
            .num("scale", "an integer in {2, 3, 4}")?
            .ok_or_else(|| AppError::config("scale", "required, one of {2, 3, 4}"))?;
        if !amsr_core::data::SUPPORTED_SCALES.contains(&scale) {
            return Err(AppError::config("scale", format!("{scale} is not one of {{2, 3, 4}}")));
        }
        let mut model = match f.get("preset").unwrap_or("toy") {
            "toy" => ModelConfig::toy(scale),
            "standard" => ModelConfig::standard(scale),
            other => return Err(AppError::config("preset", format!("`{other}` is not one of toy/standard"))),
        };
        let uint = "a non-negative integer";
        macro_rules! set {
            ($target:expr, $how:expr) => {
                if let Some(v) = $how {
                    $target = v;
                }
            };
        }
        set!(model.channels, f.num("channels", uint)?);
        set!(model.n_amms, f.num("n_amms", uint)?);
        set!(model.n_am, f.num("n_am", uint)?);
        set!(model.nl_reduction, f.num("nl_reduction", uint)?);
        set!(model.so_reduction, f.num("so_reduction", uint)?);
        set!(model.sf_layers, f.num("sf_layers", uint)?);
        set!(model.enable_nonlocal, f.flag("nonlocal")?);
        set!(model.enable_second_order, f.flag("second_order")?);
        set!(model.enable_multiscale, f.flag("multiscale")?);
        model.validate()?;

        let seed: u64 = f.num("seed", uint)?.unwrap_or(0);
        let mut train = TrainConfig::new(scale, seed);
        let real = "a real number";
        set!(train.lr0, f.num("lr0", real)?);
        set!(train.beta1, f.num("beta1", real)?);
        set!(train.beta2, f.num("beta2", real)?);
        set!(train.eps, f.num("eps", real)?);
        set!(train.batch, f.num("batch", uint)?);
        set!(train.patch, f.num("patch", uint)?);
        set!(train.iters_per_epoch, f.num("iters_per_epoch", uint)?);
        set!(train.epochs, f.num("epochs", uint)?);
        set!(train.lr_half_every, f.num("lr_half_every", uint)?);
        set!(train.checkpoint_every, f.num("checkpoint_every", uint)?);
        set!(train.log_every, f.num("log_every", uint)?);
        train.validate()?;

        let init_seed = f.num("init_seed", uint)?.unwrap_or(seed);
        let tile: usize = f.num("tile", uint)?.unwrap_or(48);
        if tile == 0 {
            return Err(AppError::config("tile", "must be positive"));
        }
        let mean = match f.get("mean").unwrap_or("div2k") {
            "div2k" => MeanSource::Div2k,
            "auto" => MeanSource::Auto,
            v => {
                let parts: Option<Vec<f64>> = v.split(',').map(|p| p.trim().parse().ok()).collect();
                let rgb: [f64; 3] = parts
                    .and_then(|p| p.try_into().ok())
                    .filter(|p: &[f64; 3]| p.iter().all(|x| (0.0..=255.0).contains(x)))
                    .ok_or_else(|| AppError::config("mean", format!("`{v}` is not div2k, auto or r,g,b in [0, 255]")))?;
                MeanSource::Fixed(rgb)
            }
        };
        let path = |key: &str| f.get(key).map(|v| base.join(v));
        let train_manifest = path("train_manifest").ok_or_else(|| AppError::config("train_manifest", "required path"))?;
        let out_dir = path("out_dir").ok_or_else(|| AppError::config("out_dir", "required path"))?;
        let val_manifest = path("val_manifest");

        let canonical = {
            let mut s = model.canonical_text();
            s += &format!(
                "lr0={}\nbeta1={}\nbeta2={}\neps={}\nbatch={}\npatch={}\niters_per_epoch={}\nepochs={}\nlr_half_every={}\nseed={}\ninit_seed={}\nmean={:?}\ntile={}\n",
                train.lr0,
                train.beta1,
                train.beta2,
                train.eps,
                train.batch,
                train.patch,
                train.iters_per_epoch,
                train.epochs,
                train.lr_half_every,
                train.seed,
                init_seed,
                mean,
                tile
            );
            s
        };
        Ok(RunConfig {
            model,
            train,
            init_seed,
            mean,
            train_manifest,
            val_manifest,
            out_dir,
            tile,
            canonical,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")))
    }

    pub fn total_steps(&self) -> u64 {
        self.train.epochs as u64 * self.train.iters_per_epoch as u64
    }
}
