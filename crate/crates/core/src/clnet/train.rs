use std::collections::HashMap;

use super::loss::ContrastiveLoss;
use super::sampling::{sample_positives_negatives, ContrastiveBatch, NeighborIndex};
use super::{ClnetArch, ClnetModel, ContrastiveConfig};
use crate::channel_sim::Dataset;
use crate::error::{Error, Result};
use crate::numerics::rng::{shuffle, stream};
use crate::numerics::{AdamState, AdamConfig, Graph, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean anchor loss over the epoch.
    pub loss: f64,
    pub anchors_used: usize,
    pub anchors_skipped: usize,
}

#[derive(Debug, Clone)]
pub struct ClnetTraining {
    pub model: ClnetModel,
    pub trace: Vec<EpochStats>,
}

/// Adam minimization of the contrastive loss over minibatches of
/// `config.batch_anchors` anchors. Anchors without a neighbor inside the
/// positive radius are skipped every epoch.
pub fn train_clnet(
    data: &Dataset,
    arch: ClnetArch,
    config: &ContrastiveConfig,
    epochs: usize,
    adam: AdamConfig,
    seed: u64,
) -> Result<ClnetTraining> {
    config.validate()?;
    adam.validate()?;
    if data.len() < 2 {
        return Err(Error::Config("contrastive training needs at least 2 samples".into()));
    }
    if arch.input_len != data.system.input_len() || arch.m != config.m {
        return Err(Error::Dimension(format!(
            "feature network {arch:?} does not fit inputs of length {} and m = {}",
            data.system.input_len(),
            config.m
        )));
    }
    let mut model = ClnetModel::init(arch, seed)?;
    let spec = model.arch.spec();
    let index = NeighborIndex::new(&data.positions, config.d);
    let inputs: Vec<Vec<f64>> = (0..data.len()).map(|i| data.y_real(i)).collect();
    let mut adam = AdamState::new(&model.params, adam);
    let mut trace = Vec::with_capacity(epochs);

    for epoch in 0..epochs {
        let mut rng = stream(seed, "clnet/epoch", epoch as u64);
        let mut order: Vec<usize> = (0..data.len()).collect();
        shuffle(&mut order, &mut rng);
        let mut batches = Vec::with_capacity(order.len());
        let mut skipped = 0;
        for &a in &order {
            match sample_positives_negatives(&index, a, config, &mut rng)? {
                Some(b) => batches.push(b),
                None => skipped += 1,
            }
        }
        if batches.is_empty() {
            return Err(Error::Training(format!(
                "epoch {epoch}: every anchor lacks a positive within d = {} m",
                config.d
            )));
        }
        let mut total = 0.0;
        for chunk in batches.chunks(config.batch_anchors) {
            let (rows, local) = localize(chunk);
            let mut x = Vec::with_capacity(rows.len() * spec.input_len);
            for &r in &rows {
                x.extend_from_slice(&inputs[r]);
            }
            let mut g = Graph::new();
            let vars = g.bind(&model.params);
            let xv = g.input(Tensor::new(vec![rows.len(), spec.input_len], x)?);
            let feats = spec.forward(&mut g, &vars, xv)?;
            let loss = g.apply(
                Box::new(ContrastiveLoss {
                    batches: local,
                    tau: config.tau,
                }),
                &[feats],
            )?;
            let lv = g.value(loss).data()[0];
            if !lv.is_finite() {
                return Err(Error::Training(format!("contrastive loss diverged at epoch {epoch}")));
            }
            total += lv * chunk.len() as f64;
            let grads = g.backward(loss)?.collect(&g, &vars);
            adam.step(&mut model.params, &grads)?;
        }
        let stats = EpochStats {
            epoch,
            loss: total / batches.len() as f64,
            anchors_used: batches.len(),
            anchors_skipped: skipped,
        };
        log::debug!("clnet epoch {epoch}: loss {:.6}", stats.loss);
        trace.push(stats);
    }
    Ok(ClnetTraining { model, trace })
}

/// Maps dataset indices of `chunk` onto rows of a gathered input block.
fn localize(chunk: &[ContrastiveBatch]) -> (Vec<usize>, Vec<ContrastiveBatch>) {
    let mut rows = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    let mut at = |i: usize, rows: &mut Vec<usize>| {
        *slot.entry(i).or_insert_with(|| {
            rows.push(i);
            rows.len() - 1
        })
    };
    let local = chunk
        .iter()
        .map(|b| ContrastiveBatch {
            anchor: at(b.anchor, &mut rows),
            positives: b.positives.iter().map(|&j| at(j, &mut rows)).collect(),
            negatives: b.negatives.iter().map(|&j| at(j, &mut rows)).collect(),
        })
        .collect();
    (rows, local)
}
