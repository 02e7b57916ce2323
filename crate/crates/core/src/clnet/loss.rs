use super::sampling::ContrastiveBatch;
use crate::error::{Error, Result};
use crate::numerics::{Function, Tensor};

/// Log-sum-exp of `z`.
fn logsumexp(z: &[f64]) -> f64 {
    let mx = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return mx;
    }
    mx + z.iter().map(|v| (v - mx).exp()).sum::<f64>().ln()
}

/// Logits `r_i·r_j/τ` of an anchor against its positives then negatives.
fn logits(x: &Tensor, b: &ContrastiveBatch, tau: f64) -> Vec<f64> {
    let ri = x.row(b.anchor);
    b.positives
        .iter()
        .chain(&b.negatives)
        .map(|&j| super::dot(ri, x.row(j)) / tau)
        .collect()
}

/// Anchor term `−Σ_a log(s_a / Σ_{A∪B} s) = |A|·lse(z) − Σ_a z_a`.
fn anchor_term(z: &[f64], n_pos: usize) -> f64 {
    n_pos as f64 * logsumexp(z) - z[..n_pos].iter().sum::<f64>()
}

fn check(x: &Tensor, batches: &[ContrastiveBatch]) -> Result<()> {
    if batches.is_empty() {
        return Err(Error::Training("contrastive loss over zero anchors".into()));
    }
    if x.shape().len() != 2 {
        return Err(Error::Dimension(format!("features must be [n, m], got {:?}", x.shape())));
    }
    let n = x.shape()[0];
    for b in batches {
        if b.positives.is_empty() {
            return Err(Error::Usage(format!("anchor {} has no positives", b.anchor)));
        }
        if b.anchor >= n || b.positives.iter().chain(&b.negatives).any(|&j| j >= n) {
            return Err(Error::Dimension(format!(
                "batch for anchor {} indexes outside {n} feature rows",
                b.anchor
            )));
        }
    }
    Ok(())
}

/// Mean multi-positive contrastive loss over `batches`, whose indices refer
/// to rows of the `[n, m]` feature input.
pub struct ContrastiveLoss {
    pub batches: Vec<ContrastiveBatch>,
    pub tau: f64,
}

impl Function for ContrastiveLoss {
    fn name(&self) -> &'static str {
        "contrastive_loss"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let x = inputs[0];
        check(x, &self.batches)?;
        let total: f64 = self
            .batches
            .iter()
            .map(|b| anchor_term(&logits(x, b, self.tau), b.positives.len()))
            .sum();
        Ok(Tensor::scalar(total / self.batches.len() as f64))
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, gy: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        let x = inputs[0];
        let m = x.shape()[1];
        let scale = gy.data()[0] / self.batches.len() as f64;
        let mut dx = Tensor::zeros(x.shape());
        for b in &self.batches {
            let z = logits(x, b, self.tau);
            let lse = logsumexp(&z);
            let n_pos = b.positives.len();
            let ri = x.row(b.anchor).to_vec();
            let mut dri = vec![0.0; m];
            for (k, &j) in b.positives.iter().chain(&b.negatives).enumerate() {
                let p = (z[k] - lse).exp();
                let dz = n_pos as f64 * p - if k < n_pos { 1.0 } else { 0.0 };
                let c = scale * dz / self.tau;
                let rj = x.row(j).to_vec();
                let dst = &mut dx.data_mut()[j * m..(j + 1) * m];
                for t in 0..m {
                    dst[t] += c * ri[t];
                    dri[t] += c * rj[t];
                }
            }
            let dst = &mut dx.data_mut()[b.anchor * m..(b.anchor + 1) * m];
            for t in 0..m {
                dst[t] += dri[t];
            }
        }
        vec![Some(dx)]
    }
}

/// Value of the contrastive loss on plain feature rows.
pub fn contrastive_loss(features: &[Vec<f64>], batches: &[ContrastiveBatch], tau: f64) -> Result<f64> {
    let m = features.first().map_or(0, |r| r.len());
    if features.iter().any(|r| r.len() != m) {
        return Err(Error::Dimension("feature rows differ in length".into()));
    }
    let x = Tensor::new(vec![features.len(), m], features.concat())?;
    let out = ContrastiveLoss {
        batches: batches.to_vec(),
        tau,
    }
    .forward(&[&x])?;
    Ok(out.data()[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(anchor: usize, p: &[usize], n: &[usize]) -> ContrastiveBatch {
        ContrastiveBatch {
            anchor,
            positives: p.to_vec(),
            negatives: n.to_vec(),
        }
    }

    #[test]
    fn symmetric_case_is_log2() {
        let f = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]];
        let l = contrastive_loss(&f, &[batch(0, &[1], &[2])], 0.1).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn dominant_positive_goes_to_zero() {
        let f = vec![vec![1.0, 0.0], vec![50.0, 0.0], vec![-50.0, 0.0]];
        let l = contrastive_loss(&f, &[batch(0, &[1], &[2])], 0.1).unwrap();
        assert!(l >= 0.0 && l < 1e-12);
    }

    #[test]
    fn no_anchors_is_training_error() {
        assert!(matches!(
            contrastive_loss(&[vec![1.0]], &[], 0.1),
            Err(Error::Training(_))
        ));
    }
}
