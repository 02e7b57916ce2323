//! Layer functions (dense, 1-D convolution, LeakyReLU) and the small set of
//! structural ops the estimation networks need.

use super::gemm::{gemm, MatRef};
use super::graph::{Function, Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Negative slope of the hidden-layer activation.
pub const LEAKY_SLOPE: f64 = 0.01;

/// Hyperparameters of one 1-D convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Conv1dSpec {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_ch: usize,
}

impl Conv1dSpec {
    pub const fn new(kernel: usize, stride: usize, pad: usize, out_ch: usize) -> Self {
        Conv1dSpec {
            kernel,
            stride,
            pad,
            out_ch,
        }
    }

    /// `floor((n + 2p - k) / s) + 1`, or a configuration error when no window fits.
    pub fn output_len(&self, n: usize) -> Result<usize> {
        if self.kernel == 0 || self.stride == 0 {
            return Err(Error::Config(format!(
                "conv kernel and stride must be positive: {self:?}"
            )));
        }
        let padded = n + 2 * self.pad;
        if padded < self.kernel {
            return Err(Error::Config(format!(
                "conv kernel {} does not fit input of length {} with padding {}",
                self.kernel, n, self.pad
            )));
        }
        Ok((padded - self.kernel) / self.stride + 1)
    }
}

/// `y = x W^T + b` for `x: [B, n]`, `W: [out, n]`, `b: [out]`.
pub struct Dense;

impl Function for Dense {
    fn name(&self) -> &'static str {
        "dense"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let (x, w, b) = (inputs[0], inputs[1], inputs[2]);
        let (batch, n) = as_matrix(x);
        if w.shape().len() != 2 || w.shape()[1] != n || b.len() != w.shape()[0] {
            return Err(Error::Dimension(format!(
                "dense: input x {:?}, weight W {:?}, bias b {:?} do not conform",
                x.shape(),
                w.shape(),
                b.shape()
            )));
        }
        let out = w.shape()[0];
        let mut y = vec![0.0; batch * out];
        for row in y.chunks_mut(out) {
            row.copy_from_slice(b.data());
        }
        gemm(
            MatRef::row_major(x.data(), batch, n),
            MatRef::row_major(w.data(), out, n).t(),
            &mut y,
            1.0,
        );
        Tensor::new(vec![batch, out], y)
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, gy: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>> {
        let (x, w) = (inputs[0], inputs[1]);
        let (batch, n) = as_matrix(x);
        let out = w.shape()[0];
        let gy_m = MatRef::row_major(gy.data(), batch, out);
        let dx = needs[0].then(|| {
            let mut dx = vec![0.0; batch * n];
            gemm(gy_m, MatRef::row_major(w.data(), out, n), &mut dx, 0.0);
            Tensor::new(x.shape().to_vec(), dx).expect("dx shape")
        });
        let dw = needs[1].then(|| {
            let mut dw = vec![0.0; out * n];
            gemm(gy_m.t(), MatRef::row_major(x.data(), batch, n), &mut dw, 0.0);
            Tensor::new(w.shape().to_vec(), dw).expect("dw shape")
        });
        let db = needs[2].then(|| {
            let mut db = vec![0.0; out];
            for row in gy.data().chunks(out) {
                for (d, g) in db.iter_mut().zip(row) {
                    *d += g;
                }
            }
            Tensor::vector(db)
        });
        vec![dx, dw, db]
    }
}

fn as_matrix(x: &Tensor) -> (usize, usize) {
    match x.shape() {
        [n] => (1, *n),
        [b, rest @ ..] => (*b, rest.iter().product()),
        [] => (1, 1),
    }
}

/// Zero-padded cross-correlation for `x: [B, C, N]`, `W: [O, C, K]`, `b: [O]`.
pub struct Conv1d {
    pub spec: Conv1dSpec,
}

impl Conv1d {
    fn dims(&self, x: &Tensor, w: &Tensor, b: &Tensor) -> Result<(usize, usize, usize, usize)> {
        let [batch, ch, n] = *x.shape() else {
            return Err(Error::Dimension(format!(
                "conv1d: input x must be [batch, channels, length], got {:?}",
                x.shape()
            )));
        };
        let s = self.spec;
        if w.shape() != [s.out_ch, ch, s.kernel] || b.len() != s.out_ch {
            return Err(Error::Dimension(format!(
                "conv1d: weight W {:?} / bias b {:?} do not match input x {:?} and {:?}",
                w.shape(),
                b.shape(),
                x.shape(),
                s
            )));
        }
        let n_out = s.output_len(n)?;
        Ok((batch, ch, n, n_out))
    }

    /// Unfolds sample `x` (`[C, N]`) into `[C*K, n_out]`.
    fn im2col(&self, x: &[f64], ch: usize, n: usize, n_out: usize, cols: &mut [f64]) {
        let s = self.spec;
        for c in 0..ch {
            for k in 0..s.kernel {
                let row = &mut cols[(c * s.kernel + k) * n_out..(c * s.kernel + k + 1) * n_out];
                for (o, v) in row.iter_mut().enumerate() {
                    let pos = (o * s.stride + k) as isize - s.pad as isize;
                    *v = if pos >= 0 && (pos as usize) < n {
                        x[c * n + pos as usize]
                    } else {
                        0.0
                    };
                }
            }
        }
    }
}

impl Function for Conv1d {
    fn name(&self) -> &'static str {
        "conv1d"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let (x, w, b) = (inputs[0], inputs[1], inputs[2]);
        let (batch, ch, n, n_out) = self.dims(x, w, b)?;
        let o = self.spec.out_ch;
        let ck = ch * self.spec.kernel;
        let mut y = vec![0.0; batch * o * n_out];
        let mut cols = vec![0.0; ck * n_out];
        for bi in 0..batch {
            self.im2col(&x.data()[bi * ch * n..(bi + 1) * ch * n], ch, n, n_out, &mut cols);
            let yb = &mut y[bi * o * n_out..(bi + 1) * o * n_out];
            for (oc, row) in yb.chunks_mut(n_out).enumerate() {
                row.fill(b.data()[oc]);
            }
            gemm(
                MatRef::row_major(w.data(), o, ck),
                MatRef::row_major(&cols, ck, n_out),
                yb,
                1.0,
            );
        }
        Tensor::new(vec![batch, o, n_out], y)
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, gy: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>> {
        let (x, w, b) = (inputs[0], inputs[1], inputs[2]);
        let (batch, ch, n, n_out) = self.dims(x, w, b).expect("validated in forward");
        let s = self.spec;
        let o = s.out_ch;
        let ck = ch * s.kernel;
        let mut dx = needs[0].then(|| vec![0.0; batch * ch * n]);
        let mut dw = needs[1].then(|| vec![0.0; o * ck]);
        let mut cols = vec![0.0; ck * n_out];
        let mut dcols = vec![0.0; ck * n_out];
        for bi in 0..batch {
            let gyb = MatRef::row_major(&gy.data()[bi * o * n_out..(bi + 1) * o * n_out], o, n_out);
            if let Some(dw) = dw.as_mut() {
                self.im2col(&x.data()[bi * ch * n..(bi + 1) * ch * n], ch, n, n_out, &mut cols);
                gemm(gyb, MatRef::row_major(&cols, ck, n_out).t(), dw, 1.0);
            }
            if let Some(dx) = dx.as_mut() {
                gemm(MatRef::row_major(w.data(), o, ck).t(), gyb, &mut dcols, 0.0);
                let dxb = &mut dx[bi * ch * n..(bi + 1) * ch * n];
                for c in 0..ch {
                    for k in 0..s.kernel {
                        let row = &dcols[(c * s.kernel + k) * n_out..(c * s.kernel + k + 1) * n_out];
                        for (oi, v) in row.iter().enumerate() {
                            let pos = (oi * s.stride + k) as isize - s.pad as isize;
                            if pos >= 0 && (pos as usize) < n {
                                dxb[c * n + pos as usize] += v;
                            }
                        }
                    }
                }
            }
        }
        let db = needs[2].then(|| {
            let mut db = vec![0.0; o];
            for (i, row) in gy.data().chunks(n_out).enumerate() {
                db[i % o] += row.iter().sum::<f64>();
            }
            Tensor::vector(db)
        });
        vec![
            dx.map(|d| Tensor::new(x.shape().to_vec(), d).expect("dx shape")),
            dw.map(|d| Tensor::new(w.shape().to_vec(), d).expect("dw shape")),
            db,
        ]
    }
}

/// Elementwise `max(x, slope * x)`.
pub struct LeakyRelu {
    pub slope: f64,
}

impl Function for LeakyRelu {
    fn name(&self) -> &'static str {
        "leaky_relu"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let x = inputs[0];
        let data = x
            .data()
            .iter()
            .map(|&v| if v > 0.0 { v } else { self.slope * v })
            .collect();
        Tensor::new(x.shape().to_vec(), data)
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, gy: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        let x = inputs[0];
        let data = x
            .data()
            .iter()
            .zip(gy.data())
            .map(|(&v, &g)| if v > 0.0 { g } else { self.slope * g })
            .collect();
        vec![Some(Tensor::new(x.shape().to_vec(), data).expect("shape"))]
    }
}

/// Shape-only change.
pub struct Reshape {
    pub shape: Vec<usize>,
}

impl Function for Reshape {
    fn name(&self) -> &'static str {
        "reshape"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        inputs[0].clone().reshaped(self.shape.clone())
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, gy: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        vec![Some(
            gy.clone()
                .reshaped(inputs[0].shape().to_vec())
                .expect("reshape back"),
        )]
    }
}

/// Interleaves rows of `x: [G*q, m]` group-wise into `[G, 1, q*m]`, so that
/// `out[g, 0, i*q + j] = x[g*q + j, i]`.
pub struct Interleave {
    pub q: usize,
}

impl Function for Interleave {
    fn name(&self) -> &'static str {
        "interleave"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let x = inputs[0];
        let (rows, m) = as_matrix(x);
        if self.q == 0 || rows % self.q != 0 {
            return Err(Error::Dimension(format!(
                "interleave: {} rows are not a multiple of group size {}",
                rows, self.q
            )));
        }
        let groups = rows / self.q;
        let q = self.q;
        let mut out = vec![0.0; rows * m];
        for g in 0..groups {
            for j in 0..q {
                let src = x.row(g * q + j);
                for (i, v) in src.iter().enumerate() {
                    out[g * q * m + i * q + j] = *v;
                }
            }
        }
        Tensor::new(vec![groups, 1, q * m], out)
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, gy: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        let x = inputs[0];
        let (rows, m) = as_matrix(x);
        let q = self.q;
        let mut dx = vec![0.0; rows * m];
        for g in 0..rows / q {
            for j in 0..q {
                for i in 0..m {
                    dx[(g * q + j) * m + i] = gy.data()[g * q * m + i * q + j];
                }
            }
        }
        vec![Some(Tensor::new(x.shape().to_vec(), dx).expect("shape"))]
    }
}

/// Sum of two same-shaped tensors.
pub struct Add;

impl Function for Add {
    fn name(&self) -> &'static str {
        "add"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let (a, b) = (inputs[0], inputs[1]);
        if a.shape() != b.shape() {
            return Err(Error::Dimension(format!(
                "add: operands a {:?} and b {:?} differ",
                a.shape(),
                b.shape()
            )));
        }
        let mut out = a.clone();
        out.add_assign(b);
        Ok(out)
    }

    fn backward(&self, _: &[&Tensor], _: &Tensor, gy: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>> {
        vec![needs[0].then(|| gy.clone()), needs[1].then(|| gy.clone())]
    }
}

/// Multiplication by a constant.
pub struct Scale {
    pub factor: f64,
}

impl Function for Scale {
    fn name(&self) -> &'static str {
        "scale"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let x = inputs[0];
        Tensor::new(
            x.shape().to_vec(),
            x.data().iter().map(|v| v * self.factor).collect(),
        )
    }

    fn backward(&self, _: &[&Tensor], _: &Tensor, gy: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        vec![Some(
            Tensor::new(
                gy.shape().to_vec(),
                gy.data().iter().map(|v| v * self.factor).collect(),
            )
            .expect("shape"),
        )]
    }
}

/// Sum of squared differences `Σ (x - target)²` against a constant target.
pub struct SquaredError {
    pub target: Tensor,
}

impl Function for SquaredError {
    fn name(&self) -> &'static str {
        "squared_error"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let x = inputs[0];
        if x.len() != self.target.len() {
            return Err(Error::Dimension(format!(
                "squared_error: prediction {:?} vs target {:?}",
                x.shape(),
                self.target.shape()
            )));
        }
        let s = x
            .data()
            .iter()
            .zip(self.target.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(Tensor::scalar(s))
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, gy: &Tensor, _: &[bool]) -> Vec<Option<Tensor>> {
        let x = inputs[0];
        let g = gy.data()[0];
        let d = x
            .data()
            .iter()
            .zip(self.target.data())
            .map(|(a, b)| 2.0 * g * (a - b))
            .collect();
        vec![Some(Tensor::new(x.shape().to_vec(), d).expect("shape"))]
    }
}

/// Convenience wrappers that record layer functions on a graph.
impl Graph {
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        self.apply(Box::new(Dense), &[x, w, b])
    }

    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, spec: Conv1dSpec) -> Result<Var> {
        self.apply(Box::new(Conv1d { spec }), &[x, w, b])
    }

    pub fn leaky_relu(&mut self, x: Var) -> Result<Var> {
        self.apply(Box::new(LeakyRelu { slope: LEAKY_SLOPE }), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        self.apply(Box::new(Reshape { shape }), &[x])
    }

    pub fn interleave(&mut self, x: Var, q: usize) -> Result<Var> {
        self.apply(Box::new(Interleave { q }), &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Box::new(Add), &[a, b])
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        self.apply(Box::new(Scale { factor }), &[x])
    }

    pub fn squared_error(&mut self, x: Var, target: Tensor) -> Result<Var> {
        self.apply(Box::new(SquaredError { target }), &[x])
    }
}

/// Elementwise activation used by the networks: LeakyReLU on hidden layers,
/// identity on output layers.
pub fn activation_forward(x: &[f64], hidden: bool) -> Vec<f64> {
    if hidden {
        x.iter()
            .map(|&v| if v > 0.0 { v } else { LEAKY_SLOPE * v })
            .collect()
    } else {
        x.to_vec()
    }
}
