#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use muce_core::experiment::ExperimentConfig;
use muce_core::numerics::Schedule;

/// A configuration small enough to run the whole pipeline in seconds.
pub fn tiny_config(out: &Path, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        seed,
        output_dir: out.to_path_buf(),
        ..ExperimentConfig::default()
    };
    cfg.sizes.contrastive = 300;
    cfg.sizes.downstream = 90;
    cfg.sizes.test = 20;
    cfg.contrastive.d = 8.0;
    cfg.clnet.hidden = 32;
    cfg.clnet.epochs = 2;
    cfg.downstream.dsnet = Schedule::new(2, 16);
    cfg.downstream.joint = Schedule::new(2, 16);
    cfg.baselines.schedule = Schedule::new(2, 16);
    cfg.sweep.snr_db = vec![10.0, 20.0, 30.0];
    cfg.sweep.pilot_len = vec![16, 24];
    cfg.sweep.labels = vec![45, 90];
    cfg
}

/// Every regular file under `root`, relative and sorted.
pub fn tree(root: &Path) -> Vec<PathBuf> {
    fn walk(dir: &Path, root: &Path, out: &mut Vec<PathBuf>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}

/// Parsed CSV body rows.
pub fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}
