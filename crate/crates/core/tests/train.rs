use std::collections::BTreeMap;

use amsr_core::data::{ImagePair, NormStats};
use amsr_core::imaging::ImageU8;
use amsr_core::model::{build_model, ModelConfig, ModelParams};
use amsr_core::train::{adam_step, LossRecord, OptimState, TrainConfig, TrainHooks, Trainer};
use amsr_core::{Shape, Tape, Tensor};

fn single(v: &[f32]) -> ModelParams<f32> {
    let t = Tensor::from_vec(Shape::new(1, 1, 1, v.len()), v.to_vec()).unwrap();
    ModelParams::from_map(BTreeMap::from([("w".to_string(), t)]))
}

fn zeros_like(p: &ModelParams<f32>) -> ModelParams<f32> {
    ModelParams::from_map(p.iter().map(|(k, t)| (k.clone(), Tensor::zeros(t.shape()))).collect())
}

fn grad(v: &[f32]) -> BTreeMap<String, Tensor<f32>> {
    BTreeMap::from([("w".to_string(), Tensor::from_vec(Shape::new(1, 1, 1, v.len()), v.to_vec()).unwrap())])
}

#[test]
fn adam_matches_textbook_recurrence() {
    let cfg = TrainConfig::new(2, 0);
    let mut p = single(&[0.25, -1.0]);
    let mut st = OptimState { m: zeros_like(&p), v: zeros_like(&p), t: 0 };
    let gs = [[0.5f32, -0.1], [0.3, 0.2], [-0.7, 0.05]];
    let (mut w, mut m, mut v) = ([0.25f64, -1.0], [0.0f64; 2], [0.0f64; 2]);
    for (t, g) in gs.iter().enumerate() {
        adam_step(&mut p, &grad(g), &mut st, 1e-3, &cfg).unwrap();
        for i in 0..2 {
            let gi = g[i] as f64;
            m[i] = 0.9 * m[i] + 0.1 * gi;
            v[i] = 0.999 * v[i] + 0.001 * gi * gi;
            let mh = m[i] / (1.0 - 0.9f64.powi(t as i32 + 1));
            let vh = v[i] / (1.0 - 0.999f64.powi(t as i32 + 1));
            w[i] -= 1e-3 * mh / (vh.sqrt() + 1e-8);
        }
        let got = p.get("w").unwrap().data();
        for i in 0..2 {
            assert!((got[i] as f64 - w[i]).abs() < 1e-6, "step {t}: {} vs {}", got[i], w[i]);
        }
    }
    assert_eq!(st.t, 3);
}

#[test]
fn adam_first_step_moves_by_lr_against_gradient() {
    let cfg = TrainConfig::new(2, 0);
    let mut p = single(&[1.0, 1.0]);
    let mut st = OptimState { m: zeros_like(&p), v: zeros_like(&p), t: 0 };
    adam_step(&mut p, &grad(&[0.5, -2.0]), &mut st, 1e-4, &cfg).unwrap();
    let d = p.get("w").unwrap().data();
    assert!((d[0] as f64 - (1.0 - 1e-4)).abs() < 1e-7);
    assert!((d[1] as f64 - (1.0 + 1e-4)).abs() < 1e-7);
}

#[test]
fn adam_zero_gradient_keeps_params() {
    let cfg = TrainConfig::new(2, 0);
    let mut p = single(&[0.3, -0.7]);
    let before = p.clone();
    let mut st = OptimState { m: zeros_like(&p), v: zeros_like(&p), t: 0 };
    adam_step(&mut p, &grad(&[0.0, 0.0]), &mut st, 1e-4, &cfg).unwrap();
    assert_eq!(p, before);
    assert_eq!(st.t, 1);
}

#[test]
fn adam_rejects_missing_gradient() {
    let cfg = TrainConfig::new(2, 0);
    let mut p = single(&[0.3]);
    let mut st = OptimState { m: zeros_like(&p), v: zeros_like(&p), t: 0 };
    assert!(adam_step(&mut p, &BTreeMap::new(), &mut st, 1e-4, &cfg).is_err());
}

#[test]
fn l1_loss_value_and_gradient() {
    let mut tape = Tape::<f64>::new();
    let shape = Shape::new(1, 1, 1, 4);
    let p = tape.leaf(Tensor::from_vec(shape, vec![1.0, 2.0, 3.0, -1.0]).unwrap()).unwrap();
    let t = tape.constant(Tensor::from_vec(shape, vec![0.0, 4.0, 3.0, 1.0]).unwrap()).unwrap();
    let loss = tape.l1_loss(p, t).unwrap();
    assert_eq!(tape.value(loss).data(), &[1.25]);
    let g = tape.backward(loss).unwrap().get(p);
    assert_eq!(&g.data()[..2], &[0.25, -0.25]);
    assert_eq!(g.data()[3], -0.25);
}

fn scene() -> ImageU8 {
    ImageU8::from_fn(40, 40, |x, y| {
        let v = ((x * 7 + y * 3) % 64 * 4) as u8;
        [v, 255 - v, ((x / 5 + y / 5) % 2 * 200) as u8]
    })
    .unwrap()
}

#[derive(Default)]
struct Collect(Vec<LossRecord>);

impl TrainHooks for Collect {
    fn on_step(&mut self, record: &LossRecord, _logged: bool) -> Result<(), String> {
        self.0.push(*record);
        Ok(())
    }
}

fn small_cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        lr0: 1e-3,
        batch: 2,
        patch: 16,
        iters_per_epoch: 3,
        epochs,
        seed: 9,
        ..TrainConfig::new(2, 9)
    }
}

#[test]
fn resume_reproduces_uninterrupted_run() {
    let model = ModelConfig::toy(2);
    let pairs = [ImagePair::from_hr("a", &scene(), 2).unwrap()];
    let stats = NormStats::default();
    let init = build_model(&model, 5).unwrap();

    let mut full = Collect::default();
    let mut tr = Trainer::new(model.clone(), small_cfg(2), stats, &pairs, init.clone()).unwrap();
    tr.fit(&mut full).unwrap();

    let mut first = Collect::default();
    let mut tr1 = Trainer::new(model.clone(), small_cfg(1), stats, &pairs, init).unwrap();
    tr1.fit(&mut first).unwrap();
    let optim = tr1.optim().clone();
    let mut rest = Collect::default();
    let mut tr2 = Trainer::resume(model, small_cfg(2), stats, &pairs, tr1.into_params(), optim, 1).unwrap();
    tr2.fit(&mut rest).unwrap();

    let stitched: Vec<LossRecord> = first.0.into_iter().chain(rest.0).collect();
    assert_eq!(stitched, full.0);
    assert_eq!(tr2.params(), tr.params());
}

#[test]
fn trainer_rejects_scale_mismatch_and_empty_data() {
    let model = ModelConfig::toy(3);
    let params = build_model(&model, 0).unwrap();
    let pairs = [ImagePair::from_hr("a", &scene(), 2).unwrap()];
    assert!(Trainer::new(model.clone(), small_cfg(1), NormStats::default(), &pairs, params.clone()).is_err());
    let cfg = TrainConfig { patch: 18, ..TrainConfig::new(3, 0) };
    assert!(Trainer::new(model, cfg, NormStats::default(), &[], params).is_err());
}
