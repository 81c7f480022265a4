//! Binary checkpoints.
//!
//! Layout, all integers u32 little-endian:
//!
//! ```text
//! "AMSR" | version | len | config text
//! repeated until EOF: len | path | rank | dims... | f32 LE values
//! ```
//!
//! The config text is the model's canonical text followed by a
//! `mean_rgb=r,g,b` line. Records appear in sorted path order.
//!
//! Optimizer state lives next to the checkpoint in `<file>.state` with the
//! same record encoding under magic `AMST`: step count and next epoch as
//! u64, then every `m/<path>` and `v/<path>` moment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use amsr_core::data::NormStats;
use amsr_core::model::{ModelConfig, ModelParams};
use amsr_core::train::OptimState;
use amsr_core::{Shape, Tensor};

use crate::error::{AppError, Result};

pub const MAGIC: &[u8; 4] = b"AMSR";
pub const STATE_MAGIC: &[u8; 4] = b"AMST";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub stats: NormStats,
    pub params: ModelParams<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub optim: OptimState,
    pub next_epoch: usize,
}

pub fn config_text(config: &ModelConfig, stats: &NormStats) -> String {
    let [r, g, b] = stats.mean_rgb;
    format!("{}mean_rgb={r},{g},{b}\n", config.canonical_text())
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_records<'a>(out: &mut Vec<u8>, records: impl Iterator<Item = (String, &'a Tensor<f32>)>) {
    for (path, t) in records {
        put_u32(out, path.len());
        out.extend_from_slice(path.as_bytes());
        let dims = dims_of(&path, t.shape());
        put_u32(out, dims.len());
        for d in &dims {
            put_u32(out, *d);
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

/// Stored dims: `[co]` for biases, `[co, ci, kh, kw]` otherwise.
fn dims_of(path: &str, s: Shape) -> Vec<usize> {
    if path.ends_with(".b") && s.c * s.h * s.w == 1 {
        vec![s.n]
    } else {
        vec![s.n, s.c, s.h, s.w]
    }
}

fn shape_of(dims: &[usize]) -> Option<Shape> {
    match *dims {
        [co] => Some(Shape::new(co, 1, 1, 1)),
        [n, c, h, w] => Some(Shape::new(n, c, h, w)),
        _ => None,
    }
}

pub fn encode(ck: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION as usize);
    let text = config_text(&ck.config, &ck.stats);
    put_u32(&mut out, text.len());
    out.extend_from_slice(text.as_bytes());
    put_records(&mut out, ck.params.iter().map(|(k, t)| (k.clone(), t)));
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(AppError::integrity(
                self.path,
                format!("truncated while reading {what} at byte {}", self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)?;
        let b = self.take(n, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| AppError::integrity(self.path, format!("{what} is not UTF-8")))
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        let m = self.take(4, "magic")?;
        if m != magic {
            return Err(AppError::integrity(self.path, "bad magic: not an amsr file"));
        }
        let v = self.u32("version")?;
        if v != VERSION as usize {
            return Err(AppError::integrity(self.path, format!("unsupported format version {v}")));
        }
        Ok(())
    }

    fn records(&mut self) -> Result<BTreeMap<String, Tensor<f32>>> {
        let mut out = BTreeMap::new();
        let mut last: Option<String> = None;
        while self.pos < self.bytes.len() {
            let name = self.string("parameter path")?;
            if last.as_ref().is_some_and(|l| *l >= name) {
                return Err(AppError::integrity(self.path, format!("record `{name}` out of order")));
            }
            let rank = self.u32("rank")?;
            if rank == 0 || rank > 4 {
                return Err(AppError::integrity(self.path, format!("`{name}` has rank {rank}")));
            }
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(self.u32("dims")?);
            }
            let shape = shape_of(&dims)
                .filter(|s| s.numel() > 0)
                .ok_or_else(|| AppError::integrity(self.path, format!("`{name}` has dims {dims:?}")))?;
            let raw = self.take(
                shape.numel().checked_mul(4).ok_or_else(|| AppError::integrity(self.path, "oversized record"))?,
                "values",
            )?;
            let data = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            out.insert(name.clone(), Tensor::from_vec(shape, data)?);
            last = Some(name);
        }
        Ok(out)
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0, path };
    r.header(MAGIC)?;
    let text = r.string("config")?;
    let (config, extra) = ModelConfig::parse_canonical(&text)
        .map_err(|e| AppError::integrity(path, format!("config block: {e}")))?;
    let stats = parse_mean(&extra).ok_or_else(|| AppError::integrity(path, "config block lacks a valid mean_rgb"))?;
    let params = ModelParams::from_map(r.records()?);
    params
        .check_against(&config)
        .map_err(|e| AppError::integrity(path, e.to_string()))?;
    Ok(Checkpoint { config, stats, params })
}

fn parse_mean(extra: &[(String, String)]) -> Option<NormStats> {
    let (_, v) = extra.iter().find(|(k, _)| k == "mean_rgb")?;
    let parts: Vec<f64> = v.split(',').map(|p| p.trim().parse().ok()).collect::<Option<_>>()?;
    let rgb: [f64; 3] = parts.try_into().ok()?;
    NormStats::new(rgb).ok()
}

pub fn save(path: &Path, ck: &Checkpoint) -> Result<()> {
    std::fs::write(path, encode(ck)).map_err(|e| AppError::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
    decode(&bytes, path)
}

/// Loads a checkpoint that must fit `expected`; a mismatch names the first
/// offending parameter path.
pub fn load_expecting(path: &Path, expected: &ModelConfig) -> Result<Checkpoint> {
    let ck = load(path)?;
    ck.params
        .check_against(expected)
        .map_err(|e| AppError::integrity(path, format!("checkpoint does not fit the requested model: {e}")))?;
    if ck.config != *expected {
        return Err(AppError::integrity(
            path,
            "checkpoint config differs from the requested model config",
        ));
    }
    Ok(ck)
}

pub fn state_path(ckpt: &Path) -> PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(".state");
    PathBuf::from(s)
}

pub fn encode_state(state: &TrainState) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(STATE_MAGIC);
    put_u32(&mut out, VERSION as usize);
    out.extend_from_slice(&state.optim.t.to_le_bytes());
    out.extend_from_slice(&(state.next_epoch as u64).to_le_bytes());
    let m = state.optim.m.iter().map(|(k, t)| (format!("m/{k}"), t));
    let v = state.optim.v.iter().map(|(k, t)| (format!("v/{k}"), t));
    put_records(&mut out, m.chain(v));
    out
}

pub fn decode_state(bytes: &[u8], path: &Path, config: &ModelConfig) -> Result<TrainState> {
    let mut r = Reader { bytes, pos: 0, path };
    r.header(STATE_MAGIC)?;
    let t = r.u64("step count")?;
    let next_epoch = r.u64("epoch")? as usize;
    let mut m = BTreeMap::new();
    let mut v = BTreeMap::new();
    for (k, tensor) in r.records()? {
        match k.split_once('/') {
            Some(("m", p)) => m.insert(p.to_string(), tensor),
            Some(("v", p)) => v.insert(p.to_string(), tensor),
            _ => return Err(AppError::integrity(path, format!("unexpected record `{k}`"))),
        };
    }
    let optim = OptimState {
        m: ModelParams::from_map(m),
        v: ModelParams::from_map(v),
        t,
    };
    optim
        .check_against(config)
        .map_err(|e| AppError::integrity(path, e.to_string()))?;
    Ok(TrainState { optim, next_epoch })
}

pub fn save_state(ckpt: &Path, state: &TrainState) -> Result<()> {
    let path = state_path(ckpt);
    std::fs::write(&path, encode_state(state)).map_err(|e| AppError::io(&path, e))
}

pub fn load_state(ckpt: &Path, config: &ModelConfig) -> Result<TrainState> {
    let path = state_path(ckpt);
    let bytes = std::fs::read(&path).map_err(|e| AppError::io(&path, e))?;
    decode_state(&bytes, &path, config)
}
