//! Contrastive feature extraction.
//!
//! A small 1-D convolutional network `f_θ` maps the real-vectorized received
//! pilot block `ỹ = ν(vec(Y))` to an `m`-dimensional feature `r`. It is
//! trained without channel labels: samples recorded within `d` meters of an
//! anchor are its positives, samples farther away its negatives, and the
//! multi-positive contrastive loss pulls positives together under
//! `s(r_i, r_j) = exp(r_i·r_j / τ)`. The learned metric
//! `γ = 1/‖r_i − r_j‖` then drives grouping downstream.

mod curve;
mod loss;
mod sampling;
mod train;

use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;

pub use curve::{similarity_curve, similarity_curve_from_vectors, CurveBin, CurveConfig, SimilarityMode};
pub use loss::{contrastive_loss, ContrastiveLoss};
pub use sampling::{sample_positives_negatives, ContrastiveBatch, NeighborIndex};
pub use train::{train_clnet, ClnetTraining, EpochStats};

use crate::channel_sim::SystemConfig;
use crate::error::{Error, Result};
use crate::numerics::{Conv1dSpec, ConvNetSpec, Graph, ModelParams, Tensor};
use crate::storage;

/// Lower bound on `‖r_i − r_j‖` inside `γ`, so identical features give `1e12`.
pub const GAMMA_EPS: f64 = 1e-12;

/// `ν(z) = [Re z; Im z]`.
pub fn nu(z: &[Complex64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * z.len());
    out.extend(z.iter().map(|c| c.re));
    out.extend(z.iter().map(|c| c.im));
    out
}

/// `exp(r_i·r_j / τ)`.
pub fn pair_similarity(ri: &[f64], rj: &[f64], tau: f64) -> f64 {
    (dot(ri, rj) / tau).exp()
}

/// `γ = 1/max(‖r_i − r_j‖, ε)`.
pub fn csi_similarity(ri: &[f64], rj: &[f64]) -> f64 {
    1.0 / dist(ri, rj).max(GAMMA_EPS)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Sampling and loss settings of contrastive training.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContrastiveConfig {
    /// Positive radius, meters.
    pub d: f64,
    pub tau: f64,
    pub n_negatives: usize,
    /// At most this many nearest neighbors inside the radius become positives.
    pub max_positives: usize,
    /// Feature dimension.
    pub m: usize,
    /// Anchors per optimizer step.
    pub batch_anchors: usize,
}

impl ContrastiveConfig {
    pub fn for_system(system: &SystemConfig) -> Self {
        ContrastiveConfig {
            d: 2.0,
            tau: 0.1,
            n_negatives: 16,
            max_positives: 8,
            m: 2 * system.channel_len(),
            batch_anchors: 32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !(self.d > 0.0) || self.m == 0 {
            return Err(Error::Config(format!("need tau > 0, d > 0, m >= 1: {self:?}")));
        }
        if self.n_negatives == 0 || self.max_positives == 0 || self.batch_anchors == 0 {
            return Err(Error::Config(format!(
                "negatives, positive cap and anchor batch must be >= 1: {self:?}"
            )));
        }
        Ok(())
    }
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        ContrastiveConfig::for_system(&SystemConfig::default())
    }
}

/// Layer layout of the feature network.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClnetArch {
    pub input_len: usize,
    pub hidden: usize,
    pub m: usize,
}

impl ClnetArch {
    pub const KERNELS: [usize; 4] = [4, 2, 2, 2];
    pub const STRIDES: [usize; 4] = [2, 1, 1, 1];
    pub const PADS: [usize; 4] = [1, 1, 1, 0];
    pub const CHANNELS: [usize; 4] = [8, 16, 16, 32];

    pub fn for_system(system: &SystemConfig, hidden: usize) -> Self {
        ClnetArch {
            input_len: system.input_len(),
            hidden,
            m: 2 * system.channel_len(),
        }
    }

    pub fn spec(&self) -> ConvNetSpec {
        let convs = (0..4)
            .map(|i| Conv1dSpec::new(Self::KERNELS[i], Self::STRIDES[i], Self::PADS[i], Self::CHANNELS[i]))
            .collect();
        ConvNetSpec {
            input_len: self.input_len,
            convs,
            dense: vec![self.hidden, self.m],
        }
    }
}

/// Trained feature network.
#[derive(Debug, Clone, PartialEq)]
pub struct ClnetModel {
    pub arch: ClnetArch,
    pub params: ModelParams,
}

/// Feature of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub r: Vec<f64>,
    pub position: Option<[f64; 2]>,
}

/// Rows per parallel inference chunk.
const FEATURE_CHUNK: usize = 256;

impl ClnetModel {
    pub const KIND: &'static str = "clnet";

    pub fn init(arch: ClnetArch, seed: u64) -> Result<Self> {
        let params = arch.spec().init(&mut crate::numerics::rng::stream(seed, "clnet/init", 0))?;
        Ok(ClnetModel { arch, params })
    }

    /// `r = f_θ(ỹ)` for one input.
    pub fn extract_features(&self, y_real: &[f64]) -> Result<FeatureVector> {
        if y_real.len() != self.arch.input_len {
            return Err(Error::Dimension(format!(
                "feature network expects input length {}, got {}",
                self.arch.input_len,
                y_real.len()
            )));
        }
        let x = Tensor::new(vec![1, y_real.len()], y_real.to_vec())?;
        let r = self.arch.spec().predict(&self.params, x)?.into_data();
        Ok(FeatureVector { r, position: None })
    }

    /// Features of every row of `x: [B, input_len]`, computed in parallel
    /// chunks; rows are independent so the result matches row-by-row calls.
    pub fn extract_batch(&self, x: &Tensor) -> Result<Tensor> {
        let spec = self.arch.spec();
        let w = self.arch.input_len;
        if x.shape().len() != 2 || x.shape()[1] != w {
            return Err(Error::Dimension(format!(
                "feature network expects [B, {w}] inputs, got {:?}",
                x.shape()
            )));
        }
        let rows = x.shape()[0];
        let chunks: Vec<Result<Vec<f64>>> = x
            .data()
            .par_chunks(FEATURE_CHUNK * w)
            .map(|c| {
                let t = Tensor::new(vec![c.len() / w, w], c.to_vec())?;
                Ok(spec.predict(&self.params, t)?.into_data())
            })
            .collect();
        let mut data = Vec::with_capacity(rows * self.arch.m);
        for c in chunks {
            data.extend(c?);
        }
        Tensor::new(vec![rows, self.arch.m], data)
    }

    /// Forward pass recorded on `g` with trainable or frozen `vars`.
    pub fn forward(&self, g: &mut Graph, vars: &crate::numerics::ParamVars, x: crate::numerics::Var) -> Result<crate::numerics::Var> {
        self.arch.spec().forward(g, vars, x)
    }

    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        storage::save_model(dir, stem, Self::KIND, &self.arch, &self.params)
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let (arch, params): (ClnetArch, ModelParams) = storage::load_model(dir, stem, Self::KIND)?;
        arch.spec().init(&mut crate::numerics::rng::stream(0, "shape", 0))?.check_conforms(&params)?;
        Ok(ClnetModel { arch, params })
    }
}
