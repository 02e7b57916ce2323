//! Convolutional stack followed by dense layers, the shape shared by every
//! network in the crate.

use rand::Rng;

use super::graph::{Graph, ParamVars, Var};
use super::layers::Conv1dSpec;
use super::params::ModelParams;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Architecture of a 1-channel 1-D conv stack + dense head.
///
/// Hidden layers use LeakyReLU; the last dense layer is linear.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ConvNetSpec {
    pub input_len: usize,
    pub convs: Vec<Conv1dSpec>,
    /// Widths of the dense layers; the last entry is the output width.
    pub dense: Vec<usize>,
}

impl ConvNetSpec {
    /// Output lengths of each conv layer.
    pub fn conv_lengths(&self) -> Result<Vec<usize>> {
        let mut n = self.input_len;
        let mut out = Vec::with_capacity(self.convs.len());
        for (i, c) in self.convs.iter().enumerate() {
            n = c.output_len(n).map_err(|e| {
                Error::Config(format!("conv layer {i} on input length {n}: {e}"))
            })?;
            out.push(n);
        }
        Ok(out)
    }

    pub fn flat_len(&self) -> Result<usize> {
        let lens = self.conv_lengths()?;
        Ok(match (lens.last(), self.convs.last()) {
            (Some(n), Some(c)) => n * c.out_ch,
            _ => self.input_len,
        })
    }

    pub fn output_len(&self) -> usize {
        *self.dense.last().unwrap_or(&self.input_len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_len == 0 {
            return Err(Error::Config("network input length must be positive".into()));
        }
        if self.dense.is_empty() || self.dense.contains(&0) {
            return Err(Error::Config(format!(
                "dense widths must be non-empty and positive: {:?}",
                self.dense
            )));
        }
        self.conv_lengths().map(|_| ())
    }

    /// Uniform `±sqrt(1/fan_in)` initialization for weights and biases.
    pub fn init<R: Rng>(&self, rng: &mut R) -> Result<ModelParams> {
        self.validate()?;
        let mut params = ModelParams::new();
        let mut in_ch = 1;
        for (i, c) in self.convs.iter().enumerate() {
            let fan_in = in_ch * c.kernel;
            params.insert(format!("conv{i}.weight"), uniform(&[c.out_ch, in_ch, c.kernel], fan_in, rng));
            params.insert(format!("conv{i}.bias"), uniform(&[c.out_ch], fan_in, rng));
            in_ch = c.out_ch;
        }
        let mut width = self.flat_len()?;
        for (i, &d) in self.dense.iter().enumerate() {
            params.insert(format!("dense{i}.weight"), uniform(&[d, width], width, rng));
            params.insert(format!("dense{i}.bias"), uniform(&[d], width, rng));
            width = d;
        }
        Ok(params)
    }

    /// Forward pass on a batch `x: [B, input_len]`; returns `[B, output_len]`.
    pub fn forward(&self, g: &mut Graph, p: &ParamVars, x: Var) -> Result<Var> {
        let batch = g.value(x).shape()[0];
        if g.value(x).len() != batch * self.input_len {
            return Err(Error::Dimension(format!(
                "network expects inputs of length {}, got shape {:?}",
                self.input_len,
                g.value(x).shape()
            )));
        }
        let mut h = g.reshape(x, vec![batch, 1, self.input_len])?;
        for (i, c) in self.convs.iter().enumerate() {
            h = g.conv1d(h, p.get(&format!("conv{i}.weight"))?, p.get(&format!("conv{i}.bias"))?, *c)?;
            h = g.leaky_relu(h)?;
        }
        let flat = g.value(h).len() / batch;
        h = g.reshape(h, vec![batch, flat])?;
        let last = self.dense.len() - 1;
        for i in 0..self.dense.len() {
            h = g.dense(h, p.get(&format!("dense{i}.weight"))?, p.get(&format!("dense{i}.bias"))?)?;
            if i < last {
                h = g.leaky_relu(h)?;
            }
        }
        Ok(h)
    }

    /// Inference on `[B, input_len]` rows with frozen parameters.
    pub fn predict(&self, params: &ModelParams, x: Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = g.bind_frozen(params);
        let xv = g.input(x);
        let y = self.forward(&mut g, &p, xv)?;
        Ok(g.value(y).clone())
    }
}

fn uniform<R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    let bound = (1.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| (2.0 * super::rng::unit_f64(rng) - 1.0) * bound)
        .collect();
    Tensor::new(shape.to_vec(), data).expect("init shape")
}
