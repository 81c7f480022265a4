//! Central-difference verification of tape gradients.
//!
//! Each case reduces its output to a scalar with a fixed random projection
//! `Σ out ⊙ R`, so every output element contributes to the checked
//! gradient. Probes whose `±h` perturbation flips the sign of any relu
//! input are discarded and replaced, since the derivative is undefined
//! across the kink. A probe where both derivatives sit below the rounding
//! floor of the difference quotient, `64·ε·|f|/h`, counts as agreeing:
//! such a gradient is zero up to noise (the φ bias of the non-local block,
//! for one, cancels inside the row softmax).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{OpKind, Tape, Var};
use crate::error::Result;
use crate::linalg::{newton_schulz_sqrt, NEWTON_SCHULZ_ITERS};
use crate::model::{build_model, ModelConfig, Network};
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckOptions {
    pub h: f64,
    pub op_tol: f64,
    pub model_tol: f64,
    /// Probed elements per input tensor for single ops.
    pub op_probes: usize,
    /// Probed elements per parameter tensor for network blocks.
    pub model_probes: usize,
    pub seed: u64,
    pub include_model: bool,
    /// Corrupt the backward of one op kind; the suite should then fail.
    pub fault: Option<OpKind>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            h: 1e-4,
            op_tol: 1e-5,
            model_tol: 1e-4,
            op_probes: 32,
            model_probes: 4,
            seed: 0,
            include_model: true,
            fault: None,
        }
    }
}

/// Worst probe for one input of one case.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub case: String,
    pub input: String,
    pub max_rel_err: f64,
    pub tol: f64,
    pub probes: usize,
    pub skipped: usize,
    pub passed: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradcheckReport {
    pub results: Vec<CheckResult>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        !self.results.is_empty() && self.results.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.results.iter().filter(|r| !r.passed)
    }

    /// Distinct case names, in order of first appearance.
    pub fn names(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.results {
            if !out.contains(&r.name.as_str()) {
                out.push(&r.name);
            }
        }
        out
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

type Build<'a> = dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var> + 'a;

struct Case<'a> {
    name: &'a str,
    label: String,
    inputs: Vec<(String, Tensor<f64>)>,
    tol: f64,
    probes: usize,
}

/// Candidate probes per input before the check gives up on finding
/// kink-free positions.
const PROBE_ATTEMPTS: usize = 4;

struct Checker {
    opts: GradcheckOptions,
    rng: ChaCha8Rng,
    report: GradcheckReport,
}

impl Checker {
    fn uniform(&mut self, shape: Shape, lo: f64, hi: f64) -> Tensor<f64> {
        Tensor::from_fn(shape, |_, _, _, _| self.rng.gen_range(lo..hi))
    }

    /// Uniform in ±1 with magnitudes below `gap` pushed away from zero.
    fn away_from_zero(&mut self, shape: Shape, gap: f64) -> Tensor<f64> {
        Tensor::from_fn(shape, |_, _, _, _| loop {
            let v: f64 = self.rng.gen_range(-1.0..1.0);
            if v.abs() >= gap {
                break v;
            }
        })
    }

    fn objective(
        inputs: &[(String, Tensor<f64>)],
        build: &Build,
        projection: &Tensor<f64>,
    ) -> Result<(f64, Vec<bool>)> {
        let mut tape = Tape::new();
        tape.set_check_finite(false);
        let vars = inputs
            .iter()
            .map(|(_, t)| tape.leaf(t.clone()))
            .collect::<Result<Vec<_>>>()?;
        let out = build(&mut tape, &vars)?;
        let f = tape
            .value(out)
            .data()
            .iter()
            .zip(projection.data())
            .map(|(a, b)| a * b)
            .sum();
        let signs = tape
            .vars_of(OpKind::Relu)
            .flat_map(|v| tape.value(v).data().iter().map(|&x| x > 0.0))
            .collect();
        Ok((f, signs))
    }

    fn run(&mut self, case: Case, build: &Build) -> Result<()> {
        let mut tape = Tape::new();
        tape.set_check_finite(false);
        if let Some(kind) = self.opts.fault {
            tape.inject_backward_fault(kind);
        }
        let vars = case
            .inputs
            .iter()
            .map(|(_, t)| tape.leaf(t.clone()))
            .collect::<Result<Vec<_>>>()?;
        let out = build(&mut tape, &vars)?;
        let projection = self.uniform(tape.shape(out), -1.0, 1.0);
        let r = tape.constant(projection.clone())?;
        let weighted = tape.mul(out, r)?;
        let loss = tape.sum(weighted)?;
        let grads = tape.backward(loss)?;

        let h = self.opts.h;
        let mut inputs = case.inputs.clone();
        for (i, var) in vars.iter().enumerate() {
            let analytic = grads.get(*var);
            let mut order: Vec<usize> = (0..analytic.numel()).collect();
            order.shuffle(&mut self.rng);
            let (mut probes, mut skipped, mut worst) = (0, 0, 0.0f64);
            for &j in order.iter().take(case.probes * PROBE_ATTEMPTS) {
                if probes == case.probes {
                    break;
                }
                let x0 = inputs[i].1.data()[j];
                inputs[i].1.data_mut()[j] = x0 + h;
                let (fp, sp) = Self::objective(&inputs, build, &projection)?;
                inputs[i].1.data_mut()[j] = x0 - h;
                let (fm, sm) = Self::objective(&inputs, build, &projection)?;
                inputs[i].1.data_mut()[j] = x0;
                if sp != sm {
                    skipped += 1;
                    continue;
                }
                let numeric = (fp - fm) / (2.0 * h);
                let a = analytic.data()[j];
                let floor = 64.0 * f64::EPSILON * fp.abs().max(fm.abs()) / h;
                if a.abs().max(numeric.abs()) >= floor {
                    worst = worst.max(rel_err(a, numeric));
                }
                probes += 1;
            }
            self.report.results.push(CheckResult {
                name: case.name.to_string(),
                case: case.label.clone(),
                input: inputs[i].0.clone(),
                max_rel_err: worst,
                tol: case.tol,
                probes,
                skipped,
                passed: probes > 0 && worst < case.tol,
            });
        }
        Ok(())
    }

    fn op(&mut self, name: &str, inputs: Vec<(&str, Tensor<f64>)>, build: &Build) -> Result<()> {
        let label = inputs
            .iter()
            .map(|(_, t)| format!("{}", t.shape()))
            .collect::<Vec<_>>()
            .join(", ");
        let case = Case {
            name,
            label,
            inputs: inputs.into_iter().map(|(n, t)| (n.to_string(), t)).collect(),
            tol: self.opts.op_tol,
            probes: self.opts.op_probes,
        };
        self.run(case, build)
    }
}

fn s(n: usize, c: usize, h: usize, w: usize) -> Shape {
    Shape::new(n, c, h, w)
}

/// Symmetric positive definite matrices `B·Bᵀ/q + 0.1·I`.
fn spd(ck: &mut Checker, n: usize, c: usize) -> Tensor<f64> {
    let q = c + 2;
    let b = ck.uniform(s(n, 1, c, q), -1.0, 1.0);
    Tensor::from_fn(s(n, 1, c, c), |k, _, i, j| {
        let dot: f64 = (0..q).map(|t| b.at(k, 0, i, t) * b.at(k, 0, j, t)).sum();
        dot / q as f64 + if i == j { 0.1 } else { 0.0 }
    })
}

fn op_cases(ck: &mut Checker) -> Result<()> {
    for (x, co, k) in [(s(1, 1, 5, 5), 1, 3), (s(2, 3, 8, 8), 2, 3), (s(1, 2, 6, 7), 3, 5), (s(1, 4, 4, 4), 2, 1)] {
        let inputs = vec![
            ("x", ck.uniform(x, -1.0, 1.0)),
            ("w", ck.uniform(s(co, x.c, k, k), -1.0, 1.0)),
            ("b", ck.uniform(s(co, 1, 1, 1), -1.0, 1.0)),
        ];
        ck.op("conv2d", inputs, &move |t, v| t.conv2d(v[0], v[1], v[2], (k - 1) / 2))?;
    }
    for (a, b) in [(s(1, 2, 3, 3), s(1, 2, 3, 3)), (s(2, 3, 2, 4), s(2, 3, 1, 1)), (s(1, 1, 1, 5), s(1, 1, 1, 5))] {
        let inputs = vec![("a", ck.uniform(a, -1.0, 1.0)), ("b", ck.uniform(b, -1.0, 1.0))];
        ck.op("add", inputs.clone(), &|t, v| t.add(v[0], v[1]))?;
        ck.op("mul", inputs, &|t, v| t.mul(v[0], v[1]))?;
    }
    for shape in [s(1, 1, 2, 2), s(2, 3, 3, 3), s(1, 4, 2, 5)] {
        let x = ck.uniform(shape, -1.0, 1.0);
        ck.op("scale", vec![("x", x.clone())], &|t, v| t.scale(v[0], -0.75))?;
        ck.op("sigmoid", vec![("x", x.map(|v| 3.0 * v))], &|t, v| t.sigmoid(v[0]))?;
        let kinked = ck.away_from_zero(shape, 1e-3);
        ck.op("relu", vec![("x", kinked)], &|t, v| t.relu(v[0]))?;
        ck.op("sum", vec![("x", x.clone())], &|t, v| t.sum(v[0]))?;
        ck.op("mean", vec![("x", x.clone())], &|t, v| t.mean(v[0]))?;
        ck.op("mean_last", vec![("x", x.clone())], &|t, v| t.mean_last(v[0]))?;
        ck.op("transpose", vec![("x", x)], &|t, v| t.transpose(v[0]))?;
        let pred = ck.uniform(shape, -1.0, 1.0);
        let gap = ck.away_from_zero(shape, 1e-3);
        let mut target = pred.clone();
        target.add_assign(&gap);
        ck.op("l1_loss", vec![("pred", pred), ("target", target)], &|t, v| t.l1_loss(v[0], v[1]))?;
    }
    for parts in [[1usize, 2], [3, 1], [2, 2]] {
        let inputs = vec![
            ("a", ck.uniform(s(1, parts[0], 3, 2), -1.0, 1.0)),
            ("b", ck.uniform(s(1, parts[1], 3, 2), -1.0, 1.0)),
        ];
        ck.op("concat_channels", inputs, &|t, v| t.concat_channels(&[v[0], v[1]]))?;
    }
    for (shape, start, len) in [(s(1, 3, 2, 2), 0, 1), (s(2, 5, 3, 3), 1, 3), (s(1, 4, 1, 6), 2, 2)] {
        let x = ck.uniform(shape, -1.0, 1.0);
        ck.op("slice_channels", vec![("x", x)], &move |t, v| t.slice_channels(v[0], start, len))?;
    }
    for (from, to) in [(s(1, 2, 3, 4), s(1, 1, 6, 4)), (s(2, 3, 2, 2), s(2, 1, 3, 4)), (s(1, 4, 1, 1), s(1, 1, 2, 2))] {
        let x = ck.uniform(from, -1.0, 1.0);
        ck.op("reshape", vec![("x", x)], &move |t, v| t.reshape(v[0], to))?;
    }
    for (a, b) in [(s(1, 1, 2, 3), s(1, 1, 3, 4)), (s(2, 1, 4, 4), s(2, 1, 4, 2)), (s(1, 3, 3, 5), s(1, 3, 5, 1))] {
        let inputs = vec![("a", ck.uniform(a, -1.0, 1.0)), ("b", ck.uniform(b, -1.0, 1.0))];
        ck.op("matmul", inputs, &|t, v| t.matmul(v[0], v[1]))?;
    }
    for shape in [s(1, 1, 3, 4), s(2, 1, 5, 5), s(1, 2, 4, 3)] {
        let x = ck.uniform(shape, -2.0, 2.0);
        ck.op("softmax_rows", vec![("x", x)], &|t, v| t.softmax_rows(v[0]))?;
    }
    for (shape, r) in [(s(1, 4, 2, 3), 2), (s(1, 9, 2, 2), 3), (s(2, 8, 3, 3), 2)] {
        let x = ck.uniform(shape, -1.0, 1.0);
        ck.op("pixel_shuffle", vec![("x", x)], &move |t, v| t.pixel_shuffle(v[0], r))?;
        let y = ck.uniform(s(shape.n, shape.c / (r * r), shape.h * r, shape.w * r), -1.0, 1.0);
        ck.op("pixel_unshuffle", vec![("x", y)], &move |t, v| t.pixel_unshuffle(v[0], r))?;
    }
    for shape in [s(1, 2, 3, 3), s(2, 3, 4, 2), s(1, 4, 5, 5)] {
        let x = ck.uniform(shape, -1.0, 1.0);
        ck.op("covariance_pool", vec![("x", x)], &|t, v| t.covariance_pool(v[0]))?;
    }
    for (n, c) in [(1, 1), (2, 3), (1, 4)] {
        let a = ck.uniform(s(n, 1, c, c), -1.0, 1.0);
        ck.op("trace", vec![("a", a)], &|t, v| t.trace(v[0]))?;
        let a = spd(ck, n, c);
        ck.op("newton_schulz_sqrt", vec![("a", a)], &|t, v| {
            newton_schulz_sqrt(t, v[0], NEWTON_SCHULZ_ITERS)
        })?;
    }
    for shape in [s(1, 1, 1, 1), s(2, 1, 1, 1), s(1, 3, 2, 2)] {
        let x = ck.uniform(shape, 0.5, 2.0);
        ck.op("guarded_recip", vec![("x", x.clone())], &|t, v| t.guarded_recip(v[0]))?;
        ck.op("guarded_sqrt", vec![("x", x)], &|t, v| t.guarded_sqrt(v[0]))?;
    }
    Ok(())
}

/// A block of the toy network: its input plus the parameters under `prefix`.
fn block_case(
    ck: &mut Checker,
    name: &str,
    config: &ModelConfig,
    prefix: &str,
    input: Shape,
    forward: &dyn Fn(&Network, &mut Tape<f64>, Var) -> Result<Var>,
) -> Result<()> {
    let params = build_model(config, ck.opts.seed ^ 0x5eed)?.cast::<f64>();
    let mut inputs = vec![(String::from("input"), ck.uniform(input, -1.0, 1.0))];
    let selected: Vec<String> = params.paths().filter(|p| p.starts_with(prefix)).map(String::from).collect();
    for path in &selected {
        let t = params.get(path).expect("listed path").clone();
        inputs.push((path.clone(), t));
    }
    let case = Case {
        name,
        label: format!("{input}"),
        inputs,
        tol: ck.opts.model_tol,
        probes: ck.opts.model_probes,
    };
    let build = |tape: &mut Tape<f64>, vars: &[Var]| -> Result<Var> {
        let mut map: BTreeMap<String, Var> = params
            .iter()
            .filter(|(p, _)| !selected.contains(p))
            .map(|(p, t)| tape.constant(t.clone()).map(|v| (p.clone(), v)))
            .collect::<Result<_>>()?;
        for (path, &v) in selected.iter().zip(&vars[1..]) {
            map.insert(path.clone(), v);
        }
        let net = Network::from_vars(config, map);
        forward(&net, tape, vars[0])
    };
    ck.run(case, &build)
}

fn model_cases(ck: &mut Checker) -> Result<()> {
    let cfg = ModelConfig::toy(2);
    let c = cfg.channels;
    let am = "amms.0.lsam.am.0";
    block_case(ck, "sf_block", &cfg, "sf.", s(1, 3, 6, 6), &|n, t, x| n.forward_sf(t, x))?;
    block_case(ck, "msff_block", &cfg, "amms.0.msff.0.", s(1, c, 5, 5), &|n, t, x| {
        n.forward_msff(t, "amms.0.msff.0", x)
    })?;
    block_case(ck, "nonlocal_block", &cfg, &format!("{am}.nl."), s(1, c, 4, 5), &|n, t, x| {
        n.forward_nonlocal(t, am, x)
    })?;
    block_case(ck, "second_order_block", &cfg, &format!("{am}.so."), s(1, c, 4, 4), &|n, t, x| {
        n.forward_second_order(t, am, x)
    })?;
    block_case(ck, "attention_module", &cfg, &format!("{am}."), s(1, c, 4, 4), &|n, t, x| {
        n.forward_am(t, am, x)
    })?;
    block_case(ck, "end_to_end", &cfg, "", s(1, 3, 6, 6), &|n, t, x| n.forward_full(t, x))?;
    Ok(())
}

/// Every differentiable op on at least three shapes, then the network
/// blocks and the whole toy model.
pub fn run_suite(opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let mut ck = Checker {
        rng: ChaCha8Rng::seed_from_u64(opts.seed),
        opts: opts.clone(),
        report: GradcheckReport::default(),
    };
    op_cases(&mut ck)?;
    if opts.include_model {
        model_cases(&mut ck)?;
    }
    Ok(ck.report)
}
