//! Downstream channel estimation.
//!
//! Labeled samples are clustered by the learned metric `γ` into groups of
//! `q` similar users; DSNet-q maps the `q` member features, interleaved
//! element by element into one 1-D signal, to all `q` channels at once.
//! DSNet-Q may then be trained jointly with the feature network under
//! `(1/T)·Σ_t (α·L_sim + ‖H_t − Ĥ_t‖²_F)`.

mod cluster;
mod loss;
mod train;

use std::path::Path;

use num_complex::Complex64;

pub use cluster::{cluster_training_data, greedy_groups, min_pairwise_gamma, plan_sizes, ClusterGroup, GroupOrder};
pub use loss::{mse_loss, sim_regularizer, SimPenalty};
pub use train::{joint_objective, train_dsnet, train_joint, DsnetTraining, EpochRecord, GroupedSet, JointTraining};

use crate::channel_sim::SystemConfig;
use crate::clnet::nu;
use crate::error::{Error, Result};
use crate::numerics::{Conv1dSpec, ConvNetSpec, Graph, ModelParams, ParamVars, Tensor, Var};
use crate::storage;

/// `ν⁻¹`: `z[k] = x[k] + j·x[M + k]`.
pub fn nu_inv(x: &[f64]) -> Result<Vec<Complex64>> {
    if x.len() % 2 != 0 {
        return Err(Error::Dimension(format!("nu_inv needs an even length, got {}", x.len())));
    }
    let m = x.len() / 2;
    Ok((0..m).map(|k| Complex64::new(x[k], x[m + k])).collect())
}

/// Joint-training weight of the similarity term.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointConfig {
    pub alpha: f64,
}

impl Default for JointConfig {
    fn default() -> Self {
        JointConfig { alpha: 0.8 }
    }
}

impl JointConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha >= 0.0 && self.alpha.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("alpha must be >= 0, got {}", self.alpha)))
        }
    }
}

/// Layout of a size-`q` downstream network.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DsnetArch {
    pub q: usize,
    /// Length of one member's input vector (`m` for features).
    pub input_per_user: usize,
    /// `2·N_r·N_t·N_c`.
    pub output_per_user: usize,
}

impl DsnetArch {
    pub const STRIDES: [usize; 5] = [2, 1, 1, 1, 1];
    pub const PADS: [usize; 5] = [1, 1, 1, 0, 0];
    pub const CHANNELS: [usize; 5] = [8, 16, 32, 64, 64];

    /// DSNet-q consuming `m`-dimensional features.
    pub fn for_features(system: &SystemConfig, m: usize, q: usize) -> Self {
        DsnetArch {
            q,
            input_per_user: m,
            output_per_user: 2 * system.channel_len(),
        }
    }

    /// Same layout consuming raw `ν(y)` vectors.
    pub fn for_raw(system: &SystemConfig, q: usize) -> Self {
        DsnetArch {
            q,
            input_per_user: system.input_len(),
            output_per_user: 2 * system.channel_len(),
        }
    }

    pub fn spec(&self) -> ConvNetSpec {
        let kernels = [self.q, 2, 2, 2, 2];
        ConvNetSpec {
            input_len: self.q * self.input_per_user,
            convs: (0..5)
                .map(|i| Conv1dSpec::new(kernels[i], Self::STRIDES[i], Self::PADS[i], Self::CHANNELS[i]))
                .collect(),
            dense: vec![self.q * self.output_per_user],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.q == 0 {
            return Err(Error::Config("DSNet group size must be >= 1".into()));
        }
        self.spec().validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsnetModel {
    pub arch: DsnetArch,
    pub params: ModelParams,
}

impl DsnetModel {
    pub const KIND: &'static str = "dsnet";

    pub fn init(arch: DsnetArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = crate::numerics::rng::stream(seed, "dsnet/init", arch.q as u64);
        let params = arch.spec().init(&mut rng)?;
        Ok(DsnetModel { arch, params })
    }

    /// Records the forward pass for `x: [G·q, input_per_user]` (members of
    /// each group in consecutive rows); returns `[G, q·output_per_user]`.
    pub fn forward(&self, g: &mut Graph, vars: &ParamVars, x: Var) -> Result<Var> {
        let groups = g.value(x).shape()[0] / self.arch.q;
        let inter = g.interleave(x, self.arch.q)?;
        let flat = g.reshape(inter, vec![groups, self.arch.q * self.arch.input_per_user])?;
        self.arch.spec().forward(g, vars, flat)
    }

    /// Estimates for consecutive groups of `q` input rows, one channel per row.
    pub fn predict_rows(&self, x: Tensor) -> Result<Vec<Vec<Complex64>>> {
        let rows = x.shape()[0];
        if rows % self.arch.q != 0 || x.shape().get(1) != Some(&self.arch.input_per_user) {
            return Err(Error::Dispatch(format!(
                "DSNet-{} cannot take input of shape {:?}",
                self.arch.q,
                x.shape()
            )));
        }
        let mut g = Graph::new();
        let vars = g.bind_frozen(&self.params);
        let xv = g.input(x);
        let out = self.forward(&mut g, &vars, xv)?;
        let out = g.value(out);
        let w = self.arch.output_per_user;
        let mut est = Vec::with_capacity(rows);
        for r in 0..rows / self.arch.q {
            for j in 0..self.arch.q {
                est.push(nu_inv(&out.row(r)[j * w..(j + 1) * w])?);
            }
        }
        Ok(est)
    }

    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        storage::save_model(dir, stem, Self::KIND, &self.arch, &self.params)
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let (arch, params): (DsnetArch, ModelParams) = storage::load_model(dir, stem, Self::KIND)?;
        DsnetModel::init(arch.clone(), 0)?.params.check_conforms(&params)?;
        Ok(DsnetModel { arch, params })
    }
}

/// `Ĥ = ν⁻¹(g_φ(R))` for the `q` columns of `R`, given as member vectors.
pub fn dsnet_forward(model: &DsnetModel, members: &[Vec<f64>]) -> Result<Vec<Vec<Complex64>>> {
    if members.len() != model.arch.q {
        return Err(Error::Dispatch(format!(
            "a group of {} users was routed to DSNet-{}",
            members.len(),
            model.arch.q
        )));
    }
    let w = model.arch.input_per_user;
    if members.iter().any(|r| r.len() != w) {
        return Err(Error::Dimension(format!("DSNet-{} expects member inputs of length {w}", model.arch.q)));
    }
    model.predict_rows(Tensor::new(vec![members.len(), w], members.concat())?)
}

/// Concatenated `ν(h)` of each group's members, one row per group.
pub(crate) fn group_targets(channels: &[Vec<Complex64>], groups: &[Vec<usize>]) -> Result<Tensor> {
    let q = groups.first().map_or(0, |g| g.len());
    let w = channels.first().map_or(0, |h| 2 * h.len());
    let mut data = Vec::with_capacity(groups.len() * q * w);
    for g in groups {
        for &i in g {
            data.extend(nu(&channels[i]));
        }
    }
    Tensor::new(vec![groups.len(), q * w], data)
}

/// Member input rows of `groups`, stacked.
pub(crate) fn group_inputs(inputs: &[Vec<f64>], groups: &[Vec<usize>]) -> Result<Tensor> {
    let w = inputs.first().map_or(0, |r| r.len());
    let rows: usize = groups.iter().map(|g| g.len()).sum();
    let mut data = Vec::with_capacity(rows * w);
    for g in groups {
        for &i in g {
            data.extend_from_slice(&inputs[i]);
        }
    }
    Tensor::new(vec![rows, w], data)
}
