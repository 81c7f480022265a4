#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use amsr::png;
use amsr_core::imaging::ImageU8;

/// Shapes and gradients on a colored background, deterministic in `seed`.
pub fn scene(w: usize, h: usize, seed: u64) -> ImageU8 {
    let s = seed as usize;
    ImageU8::from_fn(w, h, |x, y| {
        let (cx, cy) = ((w / 3 + s * 7) % w, (h / 2 + s * 5) % h);
        let d = (x as isize - cx as isize).pow(2) + (y as isize - cy as isize).pow(2);
        if d < (w * w / 16) as isize {
            [220, (40 + s * 30 % 200) as u8, 60]
        } else if (x / 6 + y / 9 + s) % 3 == 0 {
            [30, 90, 200]
        } else {
            [(x * 255 / w) as u8, (y * 255 / h) as u8, ((x + y + s * 13) % 256) as u8]
        }
    })
    .unwrap()
}

/// Building facade: a regular grid of framed windows.
pub fn facade(w: usize, h: usize) -> ImageU8 {
    ImageU8::from_fn(w, h, |x, y| {
        let wall = if y < h / 2 { [200u8, 190, 170] } else { [150, 160, 180] };
        let (px, py) = if y < h / 2 { (x % 7, y % 9) } else { (x % 5, y % 6) };
        if px >= 2 && py >= 3 {
            [40, 60, 90]
        } else if px == 0 || py == 0 {
            [90, 80, 70]
        } else {
            wall
        }
    })
    .unwrap()
}

/// Saves each image as `<dir>/<id>.png` and lists them in `<dir>/<name>.txt`.
pub fn write_dataset(dir: &Path, name: &str, images: &[(&str, ImageU8)]) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let mut text = String::from("# generated\n");
    for (id, img) in images {
        png::save(&dir.join(format!("{id}.png")), img).unwrap();
        text += &format!("{id}.png\n");
    }
    let path = dir.join(format!("{name}.txt"));
    std::fs::write(&path, text).unwrap();
    path
}

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_amsr"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

pub fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Toy training config over `train`/`val` manifests, writing to `out`.
pub fn toy_config(dir: &Path, train: &Path, val: &Path, out: &Path, extra: &str) -> PathBuf {
    let text = format!(
        "preset = toy\nscale = 2\ntrain_manifest = {}\nval_manifest = {}\nout_dir = {}\nbatch = 2\npatch = 24\nepochs = 2\niters_per_epoch = 10\nlog_every = 1\ncheckpoint_every = 1\nlr0 = 0.001\nseed = 3\n{extra}",
        train.display(),
        val.display(),
        out.display()
    );
    let path = dir.join("run.cfg");
    std::fs::write(&path, text).unwrap();
    path
}
