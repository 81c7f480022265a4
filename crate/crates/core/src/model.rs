//! The attention + multi-scale fusion network.
//!
//! ```text
//! LR ─ conv3×3 ─┬─ [1×1 conv + relu]×sf_layers ─(+)─ SF feature
//!               └──────────────────────────────┘
//! SF ─ AMMS×G ─ conv3×3 (C→3s²) ─ pixel shuffle ─ SR
//! AMMS(x)  = MSFF(LS_AM(MSFF(x))) + x
//! LS_AM(x) = AM_M(…AM_1(x)…) + x
//! AM(x)    = fuse1×1(concat(NL(x), SO(x))) + x
//! MSFF(x)  = fuse1×1(concat(relu(conv1×1 x), relu(conv3×3 x), relu(conv5×5 x))) + x
//! ```
//!
//! Weights live in [`ModelParams`], keyed by a canonical dotted path such as
//! `amms.0.lsam.am.1.nl.theta.w`. The path set and every shape are a pure
//! function of [`ModelConfig`].

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::linalg::{newton_schulz_sqrt, NEWTON_SCHULZ_ITERS};
use crate::tensor::{Scalar, Shape, Tensor};

/// Network hyperparameters.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ModelConfig {
    /// Upscaling factor, one of 2, 3, 4.
    pub scale: usize,
    /// Feature width `C`.
    pub channels: usize,
    /// Number of chained AMMS blocks `G`.
    pub n_amms: usize,
    /// Attention modules per LS_AM chain `M`.
    pub n_am: usize,
    /// `C / nl_reduction` channels in the non-local embeddings.
    pub nl_reduction: usize,
    /// `C / so_reduction` hidden units in the second-order gate.
    pub so_reduction: usize,
    /// 1×1 conv layers in the shallow feature block.
    pub sf_layers: usize,
    pub enable_nonlocal: bool,
    pub enable_second_order: bool,
    pub enable_multiscale: bool,
}

impl ModelConfig {
    /// Full-size network: C=64, M=4, G=1.
    pub fn standard(scale: usize) -> Self {
        Self::with_width(scale, 64, 4)
    }

    /// Desk-scale network used by the tests and the ablation harness:
    /// C=16, M=2, G=1.
    pub fn toy(scale: usize) -> Self {
        Self::with_width(scale, 16, 2)
    }

    fn with_width(scale: usize, channels: usize, n_am: usize) -> Self {
        ModelConfig {
            scale,
            channels,
            n_amms: 1,
            n_am,
            nl_reduction: 2,
            so_reduction: channels.min(16),
            sf_layers: 2,
            enable_nonlocal: true,
            enable_second_order: true,
            enable_multiscale: true,
        }
    }

    pub fn with_branches(mut self, nonlocal: bool, second_order: bool, multiscale: bool) -> Self {
        self.enable_nonlocal = nonlocal;
        self.enable_second_order = second_order;
        self.enable_multiscale = multiscale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=4).contains(&self.scale) {
            return Err(Error::config("scale", format!("{} not in {{2, 3, 4}}", self.scale)));
        }
        if self.channels < 4 {
            return Err(Error::config("channels", format!("{} < 4", self.channels)));
        }
        if self.n_amms == 0 {
            return Err(Error::config("n_amms", "must be at least 1"));
        }
        if self.n_am == 0 {
            return Err(Error::config("n_am", "must be at least 1"));
        }
        if self.sf_layers == 0 {
            return Err(Error::config("sf_layers", "must be at least 1"));
        }
        if self.nl_reduction == 0 || self.channels % self.nl_reduction != 0 {
            return Err(Error::config(
                "nl_reduction",
                format!("{} does not divide channels = {}", self.nl_reduction, self.channels),
            ));
        }
        if self.so_reduction == 0 || self.channels / self.so_reduction == 0 {
            return Err(Error::config(
                "so_reduction",
                format!("channels / {} must be at least 1", self.so_reduction),
            ));
        }
        if !(self.enable_nonlocal || self.enable_second_order || self.enable_multiscale) {
            return Err(Error::config("branches", "at least one branch flag must be enabled"));
        }
        Ok(())
    }

    pub fn attention_enabled(&self) -> bool {
        self.enable_nonlocal || self.enable_second_order
    }

    pub fn nl_channels(&self) -> usize {
        self.channels / self.nl_reduction
    }

    pub fn so_hidden(&self) -> usize {
        self.channels / self.so_reduction
    }

    /// `key=value` lines in a fixed order. Used in checkpoints and hashes.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "scale={}\nchannels={}\nn_amms={}\nn_am={}\nnl_reduction={}\nso_reduction={}\nsf_layers={}\nnonlocal={}\nsecond_order={}\nmultiscale={}\n",
            self.scale,
            self.channels,
            self.n_amms,
            self.n_am,
            self.nl_reduction,
            self.so_reduction,
            self.sf_layers,
            self.enable_nonlocal,
            self.enable_second_order,
            self.enable_multiscale,
        );
        s
    }

    /// Inverse of [`ModelConfig::canonical_text`]. Unknown keys are
    /// returned so callers can carry extra fields alongside.
    pub fn parse_canonical(text: &str) -> Result<(Self, Vec<(String, String)>)> {
        let mut cfg = ModelConfig::toy(2);
        let mut seen = 0u32;
        let mut extra = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::contract(format!("malformed config line `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let bit = match key {
                "scale" => {
                    cfg.scale = parse_usize("scale", value)?;
                    1
                }
                "channels" => {
                    cfg.channels = parse_usize("channels", value)?;
                    2
                }
                "n_amms" => {
                    cfg.n_amms = parse_usize("n_amms", value)?;
                    4
                }
                "n_am" => {
                    cfg.n_am = parse_usize("n_am", value)?;
                    8
                }
                "nl_reduction" => {
                    cfg.nl_reduction = parse_usize("nl_reduction", value)?;
                    16
                }
                "so_reduction" => {
                    cfg.so_reduction = parse_usize("so_reduction", value)?;
                    32
                }
                "sf_layers" => {
                    cfg.sf_layers = parse_usize("sf_layers", value)?;
                    64
                }
                "nonlocal" => {
                    cfg.enable_nonlocal = parse_bool("nonlocal", value)?;
                    128
                }
                "second_order" => {
                    cfg.enable_second_order = parse_bool("second_order", value)?;
                    256
                }
                "multiscale" => {
                    cfg.enable_multiscale = parse_bool("multiscale", value)?;
                    512
                }
                _ => {
                    extra.push((key.to_string(), value.to_string()));
                    0
                }
            };
            seen |= bit;
        }
        if seen != 1023 {
            return Err(Error::contract("model config text is missing fields"));
        }
        cfg.validate()?;
        Ok((cfg, extra))
    }

    /// Every weight and bias the network owns, sorted by path.
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let c = self.channels;
        let mut specs = Vec::new();
        conv_spec(&mut specs, "sf.coarse", c, 3, 3);
        for i in 0..self.sf_layers {
            conv_spec(&mut specs, &format!("sf.block.{i}"), c, c, 1);
        }
        for g in 0..self.n_amms {
            for j in 0..2 {
                let p = format!("amms.{g}.msff.{j}");
                let kernels: &[usize] = if self.enable_multiscale { &[1, 3, 5] } else { &[3] };
                for &k in kernels {
                    conv_spec(&mut specs, &format!("{p}.k{k}"), c, c, k);
                }
                conv_spec(&mut specs, &format!("{p}.fuse"), c, kernels.len() * c, 1);
            }
            if self.attention_enabled() {
                for m in 0..self.n_am {
                    let p = format!("amms.{g}.lsam.am.{m}");
                    let mut branches = 0;
                    if self.enable_nonlocal {
                        let cp = self.nl_channels();
                        conv_spec(&mut specs, &format!("{p}.nl.theta"), cp, c, 1);
                        conv_spec(&mut specs, &format!("{p}.nl.phi"), cp, c, 1);
                        conv_spec(&mut specs, &format!("{p}.nl.g"), cp, c, 1);
                        conv_spec(&mut specs, &format!("{p}.nl.out"), c, cp, 1);
                        branches += 1;
                    }
                    if self.enable_second_order {
                        let hidden = self.so_hidden();
                        conv_spec(&mut specs, &format!("{p}.so.down"), hidden, c, 1);
                        conv_spec(&mut specs, &format!("{p}.so.up"), c, hidden, 1);
                        branches += 1;
                    }
                    conv_spec(&mut specs, &format!("{p}.fuse"), c, branches * c, 1);
                }
            }
        }
        conv_spec(&mut specs, "recon", 3 * self.scale * self.scale, c, 3);
        specs.sort_by(|a, b| a.path.cmp(&b.path));
        specs
    }
}

fn parse_usize(field: &'static str, v: &str) -> Result<usize> {
    v.parse()
        .map_err(|_| Error::config(field, format!("`{v}` is not a non-negative integer")))
}

fn parse_bool(field: &'static str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::config(field, format!("`{v}` is not true/false"))),
    }
}

/// Path and logical dimensions of one parameter array.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub path: String,
    /// `[co, ci, k, k]` for weights, `[co]` for biases.
    pub dims: Vec<usize>,
}

impl ParamSpec {
    pub fn shape(&self) -> Shape {
        match self.dims.as_slice() {
            [co] => Shape::new(*co, 1, 1, 1),
            [co, ci, kh, kw] => Shape::new(*co, *ci, *kh, *kw),
            _ => unreachable!("parameter ranks are 1 or 4"),
        }
    }

    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_bias(&self) -> bool {
        self.dims.len() == 1
    }
}

fn conv_spec(specs: &mut Vec<ParamSpec>, prefix: &str, co: usize, ci: usize, k: usize) {
    specs.push(ParamSpec {
        path: format!("{prefix}.w"),
        dims: vec![co, ci, k, k],
    });
    specs.push(ParamSpec {
        path: format!("{prefix}.b"),
        dims: vec![co],
    });
}

/// Named weight arrays, ordered by path.
#[derive(Clone, PartialEq)]
pub struct ModelParams<T> {
    tensors: BTreeMap<String, Tensor<T>>,
}

impl<T> core::fmt::Debug for ModelParams<T> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_map()
            .entries(self.tensors.iter().map(|(k, v)| (k, v.shape())))
            .finish()
    }
}

impl<T: Scalar> ModelParams<T> {
    pub fn from_map(tensors: BTreeMap<String, Tensor<T>>) -> Self {
        ModelParams { tensors }
    }

    /// All-zero parameters for `config`.
    pub fn zeros(config: &ModelConfig) -> Self {
        let tensors = config
            .param_specs()
            .into_iter()
            .map(|s| {
                let shape = s.shape();
                (s.path, Tensor::zeros(shape))
            })
            .collect();
        ModelParams { tensors }
    }

    pub fn get(&self, path: &str) -> Option<&Tensor<T>> {
        self.tensors.get(path)
    }

    pub fn get_mut(&mut self, path: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(path)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<T>)> {
        self.tensors.iter_mut()
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn param_count(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Tensor::all_finite)
    }

    /// Checks the path set and every shape against `config`. The error
    /// names the first mismatching path in sorted order.
    pub fn check_against(&self, config: &ModelConfig) -> Result<()> {
        let specs = config.param_specs();
        let mut expected = specs.iter().peekable();
        let mut actual = self.tensors.iter().peekable();
        loop {
            match (expected.peek(), actual.peek()) {
                (None, None) => return Ok(()),
                (Some(spec), Some((path, t))) if spec.path == **path => {
                    if t.shape() != spec.shape() {
                        return Err(Error::contract(format!(
                            "parameter `{path}` has shape {} but the config expects {:?}",
                            t.shape(),
                            spec.dims
                        )));
                    }
                    expected.next();
                    actual.next();
                }
                (Some(spec), Some((path, _))) if spec.path.as_str() < path.as_str() => {
                    return Err(Error::contract(format!("parameter `{}` is missing", spec.path)));
                }
                (Some(spec), None) => {
                    return Err(Error::contract(format!("parameter `{}` is missing", spec.path)));
                }
                (_, Some((path, _))) => {
                    return Err(Error::contract(format!(
                        "parameter `{path}` is not part of this config"
                    )));
                }
            }
        }
    }
}

/// Fresh parameters: weights uniform in `±√(6/(fan_in+fan_out))` drawn in
/// path order from a ChaCha8 stream seeded with `seed`, biases zero.
pub fn build_model(config: &ModelConfig, seed: u64) -> Result<ModelParams<f32>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tensors = BTreeMap::new();
    for spec in config.param_specs() {
        let shape = spec.shape();
        let t = if spec.is_bias() {
            Tensor::zeros(shape)
        } else {
            let field = shape.h * shape.w;
            let fan_in = shape.c * field;
            let fan_out = shape.n * field;
            let a = libm::sqrt(6.0 / (fan_in + fan_out) as f64) as f32;
            let data = (0..shape.numel()).map(|_| rng.gen_range(-a..a)).collect();
            Tensor::from_vec(shape, data)?
        };
        tensors.insert(spec.path, t);
    }
    Ok(ModelParams { tensors })
}

/// Parameters bound as leaves on a tape, plus the forward blocks.
pub struct Network<'c> {
    config: &'c ModelConfig,
    vars: BTreeMap<String, Var>,
}

impl<'c> Network<'c> {
    pub fn bind<T: Scalar>(
        tape: &mut Tape<T>,
        config: &'c ModelConfig,
        params: &ModelParams<T>,
    ) -> Result<Self> {
        config.validate()?;
        params.check_against(config)?;
        let mut vars = BTreeMap::new();
        for (path, t) in params.iter() {
            vars.insert(path.clone(), tape.leaf(t.clone())?);
        }
        Ok(Network { config, vars })
    }

    /// Network over variables already on a tape, keyed by parameter path.
    pub fn from_vars(config: &'c ModelConfig, vars: BTreeMap<String, Var>) -> Self {
        Network { config, vars }
    }

    pub fn config(&self) -> &ModelConfig {
        self.config
    }

    /// Leaf variable of a parameter, by path.
    pub fn var(&self, path: &str) -> Option<Var> {
        self.vars.get(path).copied()
    }

    pub fn vars(&self) -> &BTreeMap<String, Var> {
        &self.vars
    }

    fn param(&self, path: &str) -> Result<Var> {
        self.var(path)
            .ok_or_else(|| Error::contract(format!("parameter `{path}` not bound")))
    }

    fn conv<T: Scalar>(&self, tape: &mut Tape<T>, prefix: &str, x: Var) -> Result<Var> {
        let w = self.param(&format!("{prefix}.w"))?;
        let b = self.param(&format!("{prefix}.b"))?;
        let k = tape.shape(w).h;
        tape.conv2d(x, w, b, (k - 1) / 2)
    }

    /// Coarse 3×3 conv, then `sf_layers` of 1×1 conv + relu with a local
    /// residual around the chain.
    pub fn forward_sf<T: Scalar>(&self, tape: &mut Tape<T>, lr: Var) -> Result<Var> {
        let coarse = self.conv(tape, "sf.coarse", lr)?;
        let mut y = coarse;
        for i in 0..self.config.sf_layers {
            let z = self.conv(tape, &format!("sf.block.{i}"), y)?;
            y = tape.relu(z)?;
        }
        tape.add(y, coarse)
    }

    /// Parallel conv+relu branches (1×1, 3×3, 5×5, or 3×3 alone when
    /// multi-scale is disabled), concatenated, fused by 1×1 conv, plus `x`.
    pub fn forward_msff<T: Scalar>(&self, tape: &mut Tape<T>, prefix: &str, x: Var) -> Result<Var> {
        let outs = self.msff_branches(tape, prefix, x)?;
        let merged = if outs.len() == 1 {
            outs[0]
        } else {
            tape.concat_channels(&outs)?
        };
        let fused = self.conv(tape, &format!("{prefix}.fuse"), merged)?;
        tape.add(fused, x)
    }

    /// Branch outputs of an MSFF module before fusion.
    pub fn msff_branches<T: Scalar>(&self, tape: &mut Tape<T>, prefix: &str, x: Var) -> Result<Vec<Var>> {
        let kernels: &[usize] = if self.config.enable_multiscale { &[1, 3, 5] } else { &[3] };
        let mut outs = Vec::with_capacity(kernels.len());
        for &k in kernels {
            let y = self.conv(tape, &format!("{prefix}.k{k}"), x)?;
            outs.push(tape.relu(y)?);
        }
        Ok(outs)
    }

    /// Embedded-Gaussian affinity `softmax(θ(x)ᵀ·φ(x))`, `n×1×hw×hw`.
    pub fn nonlocal_attention<T: Scalar>(&self, tape: &mut Tape<T>, prefix: &str, x: Var) -> Result<Var> {
        let s = tape.shape(x);
        let cp = self.config.nl_channels();
        let flat = Shape::new(s.n, 1, cp, s.plane());
        let theta = self.conv(tape, &format!("{prefix}.nl.theta"), x)?;
        let theta = tape.reshape(theta, flat)?;
        let theta_t = tape.transpose(theta)?;
        let phi = self.conv(tape, &format!("{prefix}.nl.phi"), x)?;
        let phi = tape.reshape(phi, flat)?;
        let affinity = tape.matmul(theta_t, phi)?;
        tape.softmax_rows(affinity)
    }

    /// Non-local block: attention-weighted `g(x)`, projected back to `C`
    /// channels, plus `x`.
    pub fn forward_nonlocal<T: Scalar>(&self, tape: &mut Tape<T>, prefix: &str, x: Var) -> Result<Var> {
        let s = tape.shape(x);
        let cp = self.config.nl_channels();
        let attention = self.nonlocal_attention(tape, prefix, x)?;
        let g = self.conv(tape, &format!("{prefix}.nl.g"), x)?;
        let g = tape.reshape(g, Shape::new(s.n, 1, cp, s.plane()))?;
        let g_t = tape.transpose(g)?;
        let y = tape.matmul(attention, g_t)?;
        let y = tape.transpose(y)?;
        let y = tape.reshape(y, Shape::new(s.n, cp, s.h, s.w))?;
        let z = self.conv(tape, &format!("{prefix}.nl.out"), y)?;
        tape.add(z, x)
    }

    /// Channel gate from the square-root-normalized covariance, `n×C×1×1`,
    /// each value in (0, 1).
    pub fn second_order_gate<T: Scalar>(&self, tape: &mut Tape<T>, prefix: &str, x: Var) -> Result<Var> {
        let s = tape.shape(x);
        let cov = tape.covariance_pool(x)?;
        let root = newton_schulz_sqrt(tape, cov, NEWTON_SCHULZ_ITERS)?;
        let desc = tape.mean_last(root)?;
        let desc = tape.reshape(desc, Shape::new(s.n, s.c, 1, 1))?;
        let hidden = self.conv(tape, &format!("{prefix}.so.down"), desc)?;
        let hidden = tape.relu(hidden)?;
        let logits = self.conv(tape, &format!("{prefix}.so.up"), hidden)?;
        tape.sigmoid(logits)
    }

    /// `x` scaled per channel by [`Network::second_order_gate`].
    pub fn forward_second_order<T: Scalar>(&self, tape: &mut Tape<T>, prefix: &str, x: Var) -> Result<Var> {
        let gate = self.second_order_gate(tape, prefix, x)?;
        tape.mul(x, gate)
    }

    /// Attention module: enabled branches concatenated, fused by 1×1 conv,
    /// plus `x`.
    pub fn forward_am<T: Scalar>(&self, tape: &mut Tape<T>, prefix: &str, x: Var) -> Result<Var> {
        if !self.config.attention_enabled() {
            return Err(Error::config("branches", "attention module with no branch enabled"));
        }
        let mut outs = Vec::with_capacity(2);
        if self.config.enable_nonlocal {
            outs.push(self.forward_nonlocal(tape, prefix, x)?);
        }
        if self.config.enable_second_order {
            outs.push(self.forward_second_order(tape, prefix, x)?);
        }
        let merged = if outs.len() == 1 {
            outs[0]
        } else {
            tape.concat_channels(&outs)?
        };
        let fused = self.conv(tape, &format!("{prefix}.fuse"), merged)?;
        tape.add(fused, x)
    }

    /// `M` chained attention modules with a long skip around them.
    pub fn forward_ls_am<T: Scalar>(&self, tape: &mut Tape<T>, prefix: &str, x: Var) -> Result<Var> {
        let mut y = x;
        for m in 0..self.config.n_am {
            y = self.forward_am(tape, &format!("{prefix}.am.{m}"), y)?;
        }
        tape.add(y, x)
    }

    /// One AMMS block: MSFF → LS_AM → MSFF plus a block residual. With
    /// both attention branches disabled the LS_AM stage is absent.
    pub fn forward_amms_block<T: Scalar>(&self, tape: &mut Tape<T>, index: usize, x: Var) -> Result<Var> {
        let p = format!("amms.{index}");
        let mut y = self.forward_msff(tape, &format!("{p}.msff.0"), x)?;
        if self.config.attention_enabled() {
            y = self.forward_ls_am(tape, &format!("{p}.lsam"), y)?;
        }
        y = self.forward_msff(tape, &format!("{p}.msff.1"), y)?;
        tape.add(y, x)
    }

    /// All `G` AMMS blocks in sequence.
    pub fn forward_amms<T: Scalar>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let mut y = x;
        for g in 0..self.config.n_amms {
            y = self.forward_amms_block(tape, g, y)?;
        }
        Ok(y)
    }

    /// 3×3 conv to `3·s²` channels, then pixel shuffle by `s`.
    pub fn forward_reconstruct<T: Scalar>(&self, tape: &mut Tape<T>, f: Var) -> Result<Var> {
        let y = self.conv(tape, "recon", f)?;
        tape.pixel_shuffle(y, self.config.scale)
    }

    /// Mean-subtracted `n×3×h×w` LR input to `n×3×sh×sw` output.
    pub fn forward_full<T: Scalar>(&self, tape: &mut Tape<T>, lr: Var) -> Result<Var> {
        let c = tape.shape(lr).c;
        if c != 3 {
            return Err(Error::InvalidShape {
                op: "forward_full",
                shape: tape.shape(lr),
                reason: format!("expected 3 input channels, got {c}"),
            });
        }
        let sf = self.forward_sf(tape, lr)?;
        let deep = self.forward_amms(tape, sf)?;
        self.forward_reconstruct(tape, deep)
    }
}

/// Forward pass without gradients.
pub fn infer<T: Scalar>(config: &ModelConfig, params: &ModelParams<T>, lr: &Tensor<T>) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let net = Network::bind(&mut tape, config, params)?;
    let x = tape.constant(lr.clone())?;
    let y = net.forward_full(&mut tape, x)?;
    Ok(tape.value(y).clone())
}

/// Overlap, in LR pixels, added around each tile by [`infer_tiled`].
pub const TILE_OVERLAP: usize = 8;

/// Forward pass over `tile×tile` LR tiles, each padded with
/// [`TILE_OVERLAP`] pixels of real context, so that the non-local
/// affinity stays bounded for large images. Inputs no larger than one tile
/// take a single pass and match [`infer`] exactly.
pub fn infer_tiled<T: Scalar>(
    config: &ModelConfig,
    params: &ModelParams<T>,
    lr: &Tensor<T>,
    tile: usize,
) -> Result<Tensor<T>> {
    let s = lr.shape();
    if tile == 0 {
        return Err(Error::contract("tile size must be positive"));
    }
    if s.h <= tile && s.w <= tile {
        return infer(config, params, lr);
    }
    let r = config.scale;
    let mut out = Tensor::zeros(Shape::new(s.n, 3, s.h * r, s.w * r));
    for y0 in (0..s.h).step_by(tile) {
        for x0 in (0..s.w).step_by(tile) {
            let y1 = (y0 + tile).min(s.h);
            let x1 = (x0 + tile).min(s.w);
            let cy0 = y0.saturating_sub(TILE_OVERLAP);
            let cx0 = x0.saturating_sub(TILE_OVERLAP);
            let cy1 = (y1 + TILE_OVERLAP).min(s.h);
            let cx1 = (x1 + TILE_OVERLAP).min(s.w);
            let patch = lr.crop(cy0, cx0, cy1 - cy0, cx1 - cx0);
            let sr = infer(config, params, &patch)?;
            for n in 0..s.n {
                for c in 0..3 {
                    for y in (y0 * r)..(y1 * r) {
                        for x in (x0 * r)..(x1 * r) {
                            let v = sr.at(n, c, y - cy0 * r, x - cx0 * r);
                            out.set(n, c, y, x, v);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}
