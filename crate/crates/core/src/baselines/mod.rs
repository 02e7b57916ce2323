//! Comparison schemes: per-user supervised estimation from raw
//! measurements, location-clustered supervised estimation, and joint
//! orthogonal matching pursuit (the standard simultaneous OMP formulation
//! on an angular grid).

mod jomp;
mod kmeans;

use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;

pub use jomp::{jomp, jomp_estimate, AngularDictionary, JompConfig, SparseRecovery};
pub use kmeans::{kmeans, KMeans, KMEANS_MAX_ITER};

use crate::adaptive_pipeline::{assemble, EstimationReport, UserGrouping};
use crate::channel_sim::SystemConfig;
use crate::dnet::{train_dsnet, DsnetArch, DsnetModel, DsnetTraining, GroupedSet};
use crate::error::{Error, Result};
use crate::numerics::{Schedule, Tensor};

/// Labeled samples as raw `ν(y)` rows with positions and channels.
#[derive(Debug, Clone, Copy)]
pub struct LabeledView<'a> {
    pub positions: &'a [[f64; 2]],
    pub inputs: &'a [Vec<f64>],
    pub channels: &'a [Vec<Complex64>],
}

fn singletons(n: usize) -> Vec<Vec<usize>> {
    (0..n).map(|i| vec![i]).collect()
}

/// DSNet-1 layout trained on raw `ν(y)` one user at a time.
pub fn single_user_ce(
    system: &SystemConfig,
    train: LabeledView,
    val: Option<LabeledView>,
    schedule: &Schedule,
    seed: u64,
) -> Result<DsnetTraining> {
    let t = GroupedSet {
        inputs: train.inputs,
        channels: train.channels,
        groups: singletons(train.inputs.len()),
    };
    let v = val.map(|v| GroupedSet {
        inputs: v.inputs,
        channels: v.channels,
        groups: singletons(v.inputs.len()),
    });
    train_dsnet(DsnetArch::for_raw(system, 1), &t, v.as_ref(), schedule, seed)
}

/// Per-user estimates of a raw-input DSNet-1.
pub fn single_user_apply(model: &DsnetModel, inputs: &[Vec<f64>]) -> Result<EstimationReport> {
    let started = Instant::now();
    let k = inputs.len();
    let w = model.arch.input_per_user;
    let est = model.predict_rows(Tensor::new(vec![k, w], inputs.concat())?)?;
    let grouping = UserGrouping {
        groups: singletons(k),
        min_gamma: vec![f64::INFINITY; k],
    };
    assemble("single-user", k, grouping, est.into_iter().map(|h| vec![h]).collect(), started)
}

/// K-Means on positions with `ceil(n/q)` clusters; each cluster is cut into
/// consecutive chunks of at most `q` members (ascending index), and groups
/// are ordered by their first member.
pub fn location_groups(positions: &[[f64; 2]], q: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if q == 0 {
        return Err(Error::Config("group size must be >= 1".into()));
    }
    if positions.is_empty() {
        return Ok(Vec::new());
    }
    let k = positions.len().div_ceil(q);
    let km = kmeans(positions, k, seed)?;
    let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &a) in km.assignments.iter().enumerate() {
        clusters[a].push(i);
    }
    let mut groups: Vec<Vec<usize>> = clusters
        .into_iter()
        .flat_map(|c| c.chunks(q).map(|g| g.to_vec()).collect::<Vec<_>>())
        .collect();
    groups.sort();
    Ok(groups)
}

/// One raw-input network per group size `1..=q`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationModel {
    /// `nets[s − 1]` serves groups of size `s`; `None` when training had no
    /// such group.
    pub nets: Vec<Option<DsnetModel>>,
    pub seed: u64,
}

impl LocationModel {
    pub fn q(&self) -> usize {
        self.nets.len()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        for n in self.nets.iter().flatten() {
            n.save(dir, &format!("location{}", n.arch.q))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path, q: usize, seed: u64) -> Result<Self> {
        let nets = (1..=q)
            .map(|s| {
                let stem = format!("location{s}");
                if crate::storage::meta_path(dir, &stem).exists() {
                    DsnetModel::load(dir, &stem).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LocationModel { nets, seed })
    }

    /// Groups `K` users by position and dispatches each group by size.
    pub fn apply(&self, positions: &[[f64; 2]], inputs: &[Vec<f64>]) -> Result<EstimationReport> {
        let started = Instant::now();
        let k = inputs.len();
        let groups = location_groups(positions, self.q(), self.seed)?;
        let mut per_group = Vec::with_capacity(groups.len());
        for g in &groups {
            let net = self
                .nets
                .get(g.len() - 1)
                .and_then(|n| n.as_ref())
                .ok_or_else(|| Error::Dispatch(format!("no location-based network for groups of {}", g.len())))?;
            let members: Vec<Vec<f64>> = g.iter().map(|&u| inputs[u].clone()).collect();
            per_group.push(crate::dnet::dsnet_forward(net, &members)?);
        }
        let grouping = UserGrouping {
            min_gamma: vec![f64::NAN; groups.len()],
            groups,
        };
        assemble("location-based", k, grouping, per_group, started)
    }
}

/// Location-clustered supervised estimation: groups from [`location_groups`]
/// train one raw-input DSNet per group size. With `q = 1` this is exactly
/// [`single_user_ce`].
pub fn location_based_ce(
    system: &SystemConfig,
    train: LabeledView,
    val: Option<LabeledView>,
    q: usize,
    schedule: &Schedule,
    seed: u64,
) -> Result<(LocationModel, Vec<DsnetTraining>)> {
    let tg = location_groups(train.positions, q, seed)?;
    let vg = match val {
        Some(v) => location_groups(v.positions, q, seed)?,
        None => Vec::new(),
    };
    let mut nets = Vec::with_capacity(q);
    let mut runs = Vec::new();
    for s in 1..=q {
        let t = GroupedSet {
            inputs: train.inputs,
            channels: train.channels,
            groups: tg.iter().filter(|g| g.len() == s).cloned().collect(),
        };
        if t.groups.is_empty() {
            nets.push(None);
            continue;
        }
        let v = val.map(|v| GroupedSet {
            inputs: v.inputs,
            channels: v.channels,
            groups: vg.iter().filter(|g| g.len() == s).cloned().collect(),
        });
        let v = v.filter(|v| !v.groups.is_empty());
        let run = train_dsnet(DsnetArch::for_raw(system, s), &t, v.as_ref(), schedule, seed)?;
        nets.push(Some(run.model.clone()));
        runs.push(run);
    }
    Ok((LocationModel { nets, seed }, runs))
}
