use num_complex::Complex64;

use crate::clnet::pair_similarity;
use crate::error::{Error, Result};
use crate::numerics::{Function, Tensor};

/// `L_sim` summed over consecutive groups of `group_size` rows of a
/// `[G·J, m]` feature input: `−Σ_g Σ_{j<i} exp(r_i·r_j/τ)`.
pub struct SimPenalty {
    pub group_size: usize,
    pub tau: f64,
}

impl SimPenalty {
    fn groups(&self, x: &Tensor) -> Result<usize> {
        if x.shape().len() != 2 || self.group_size == 0 || x.shape()[0] % self.group_size != 0 {
            return Err(Error::Dimension(format!(
                "sim penalty: {:?} rows are not groups of {}",
                x.shape(),
                self.group_size
            )));
        }
        Ok(x.shape()[0] / self.group_size)
    }
}

impl Function for SimPenalty {
    fn name(&self) -> &'static str {
        "sim_penalty"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let x = inputs[0];
        let groups = self.groups(x)?;
        let j = self.group_size;
        let mut total = 0.0;
        for g in 0..groups {
            for a in 0..j {
                for b in a + 1..j {
                    total -= pair_similarity(x.row(g * j + a), x.row(g * j + b), self.tau);
                }
            }
        }
        Ok(Tensor::scalar(total))
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, gy: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        let x = inputs[0];
        let m = x.shape()[1];
        let j = self.group_size;
        let mut dx = Tensor::zeros(x.shape());
        let gy = gy.data()[0];
        for g in 0..x.shape()[0] / j {
            for a in 0..j {
                for b in a + 1..j {
                    let (ra, rb) = (g * j + a, g * j + b);
                    let s = pair_similarity(x.row(ra), x.row(rb), self.tau);
                    let c = -gy * s / self.tau;
                    let (va, vb) = (x.row(ra).to_vec(), x.row(rb).to_vec());
                    let d = dx.data_mut();
                    for t in 0..m {
                        d[ra * m + t] += c * vb[t];
                        d[rb * m + t] += c * va[t];
                    }
                }
            }
        }
        vec![Some(dx)]
    }
}

/// `L_sim` of one group of features; `0` for a single member.
pub fn sim_regularizer(features: &[Vec<f64>], tau: f64) -> f64 {
    let mut s = 0.0;
    for j in 0..features.len() {
        for i in j + 1..features.len() {
            s -= pair_similarity(&features[i], &features[j], tau);
        }
    }
    s
}

/// `(1/T)·Σ_t ‖H_t − Ĥ_t‖²_F` for groups given as per-member channel lists.
pub fn mse_loss(truth: &[Vec<Vec<Complex64>>], estimate: &[Vec<Vec<Complex64>>]) -> Result<f64> {
    if truth.len() != estimate.len() || truth.is_empty() {
        return Err(Error::Dimension(format!(
            "mse over {} true and {} estimated groups",
            truth.len(),
            estimate.len()
        )));
    }
    let mut total = 0.0;
    for (ht, he) in truth.iter().zip(estimate) {
        if ht.len() != he.len() {
            return Err(Error::Dimension("group sizes differ".into()));
        }
        for (a, b) in ht.iter().zip(he) {
            if a.len() != b.len() {
                return Err(Error::Dimension("channel lengths differ".into()));
            }
            total += a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>();
        }
    }
    Ok(total / truth.len() as f64)
}
