use num_complex::Complex64;

use crate::channel_sim::{steering_vector, PilotMatrix, SystemConfig};
use crate::error::{Error, Result};

/// Steering vectors on a uniform `sin θ` grid over `[−1, 1)`, stored column
/// by column.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularDictionary {
    pub n_tx: usize,
    pub grid: Vec<f64>,
    pub columns: Vec<Vec<Complex64>>,
}

impl AngularDictionary {
    pub fn new(n_tx: usize, size: usize) -> Result<Self> {
        if n_tx == 0 || size == 0 {
            return Err(Error::Config("dictionary needs N_t >= 1 and G >= 1".into()));
        }
        let grid: Vec<f64> = (0..size).map(|g| -1.0 + 2.0 * g as f64 / size as f64).collect();
        let columns = grid.iter().map(|&s| steering_vector(n_tx, s)).collect();
        Ok(AngularDictionary { n_tx, grid, columns })
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// `h = A·x`.
    pub fn synthesize(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut h = vec![Complex64::new(0.0, 0.0); self.n_tx];
        for (col, &c) in self.columns.iter().zip(x) {
            if c != Complex64::new(0.0, 0.0) {
                for (hv, a) in h.iter_mut().zip(col) {
                    *hv += c * a;
                }
            }
        }
        h
    }

    /// Measurement-domain dictionary `Φ = Sᵀ·A` (`L × G`, column by column).
    pub fn measurement_dictionary(&self, pilot: &PilotMatrix, subcarrier: usize) -> Vec<Vec<Complex64>> {
        self.columns
            .iter()
            .map(|a| {
                (0..pilot.pilot_len)
                    .map(|l| (0..self.n_tx).map(|t| pilot.entry(subcarrier, t, l) * a[t]).sum())
                    .collect()
            })
            .collect()
    }
}

/// Outcome of joint sparse recovery.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRecovery {
    /// Grid indices in selection order.
    pub support: Vec<usize>,
    /// Per signal, a `G`-vector that is zero off the support.
    pub coefficients: Vec<Vec<Complex64>>,
    /// `residual_norms[t][k]`: residual norm of signal `k` after `t` atoms.
    pub residual_norms: Vec<Vec<f64>>,
    pub rank_deficient: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JompConfig {
    /// Grid size `G`; `0` means `2·N_t`.
    pub grid: usize,
    pub sparsity: usize,
    pub tol: f64,
}

impl Default for JompConfig {
    fn default() -> Self {
        JompConfig {
            grid: 0,
            sparsity: 8,
            tol: 1e-6,
        }
    }
}

impl JompConfig {
    pub fn grid_size(&self, n_tx: usize) -> usize {
        if self.grid == 0 {
            2 * n_tx
        } else {
            self.grid
        }
    }
}

fn cdot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn cnorm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Eigen-decomposition of a real symmetric matrix by cyclic Jacobi sweeps.
fn jacobi_eigen(mut a: Vec<f64>, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        let scale: f64 = (0..n).map(|i| a[i * n + i] * a[i * n + i]).sum::<f64>().max(f64::MIN_POSITIVE);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i * n + i]).collect(), v)
}

/// Minimum-norm least squares `x = argmin ‖y − Φ_S x‖` for each signal via
/// the pseudo-inverse of the Gram matrix. Returns the solutions and whether
/// the Gram matrix was numerically singular.
fn least_squares(atoms: &[&Vec<Complex64>], ys: &[Vec<Complex64>]) -> (Vec<Vec<Complex64>>, bool) {
    let s = atoms.len();
    let n = 2 * s;
    let mut gram = vec![0.0; n * n];
    for i in 0..s {
        for j in 0..s {
            let g = cdot(atoms[i], atoms[j]);
            gram[i * n + j] = g.re;
            gram[i * n + s + j] = -g.im;
            gram[(s + i) * n + j] = g.im;
            gram[(s + i) * n + s + j] = g.re;
        }
    }
    let (w, v) = jacobi_eigen(gram, n);
    let wmax = w.iter().copied().fold(0.0, f64::max);
    let cutoff = wmax * 1e-12 * n as f64;
    let deficient = w.iter().any(|&x| x <= cutoff);
    let sols = ys
        .iter()
        .map(|y| {
            let mut b = vec![0.0; n];
            for i in 0..s {
                let c = cdot(atoms[i], y);
                b[i] = c.re;
                b[s + i] = c.im;
            }
            let mut x = vec![0.0; n];
            for k in 0..n {
                if w[k] > cutoff {
                    let proj: f64 = (0..n).map(|i| v[i * n + k] * b[i]).sum::<f64>() / w[k];
                    for i in 0..n {
                        x[i] += v[i * n + k] * proj;
                    }
                }
            }
            (0..s).map(|i| Complex64::new(x[i], x[s + i])).collect()
        })
        .collect();
    (sols, deficient)
}

/// Simultaneous OMP with a support shared by all signals.
///
/// Each iteration picks the unused atom maximizing
/// `Σ_k |φ_gᴴ r_k| / ‖φ_g‖`, re-solves least squares on the whole support
/// for every signal and updates the residuals. Stops after `sparsity`
/// atoms or once every residual norm is below `tol`.
pub fn jomp(phi: &[Vec<Complex64>], ys: &[Vec<Complex64>], sparsity: usize, tol: f64) -> Result<SparseRecovery> {
    let g = phi.len();
    let l = phi.first().map_or(0, |c| c.len());
    if ys.is_empty() {
        return Err(Error::Config("JOMP needs at least one signal".into()));
    }
    if ys.iter().any(|y| y.len() != l) || phi.iter().any(|c| c.len() != l) {
        return Err(Error::Dimension(format!("JOMP signals must have length {l}")));
    }
    if sparsity > l {
        return Err(Error::Config(format!("sparsity {sparsity} exceeds the pilot length {l}")));
    }
    let norms: Vec<f64> = phi.iter().map(|c| cnorm(c)).collect();
    let mut residuals: Vec<Vec<Complex64>> = ys.to_vec();
    let mut residual_norms = vec![residuals.iter().map(|r| cnorm(r)).collect::<Vec<f64>>()];
    let mut support: Vec<usize> = Vec::new();
    let mut coeffs: Vec<Vec<Complex64>> = vec![Vec::new(); ys.len()];
    let mut rank_deficient = false;
    while support.len() < sparsity && residual_norms.last().unwrap().iter().any(|&r| r >= tol) {
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for (k, col) in phi.iter().enumerate() {
            if support.contains(&k) || norms[k] == 0.0 {
                continue;
            }
            let score: f64 = residuals.iter().map(|r| cdot(col, r).norm()).sum::<f64>() / norms[k];
            if score > best.0 {
                best = (score, k);
            }
        }
        if best.1 == usize::MAX {
            break;
        }
        support.push(best.1);
        let atoms: Vec<&Vec<Complex64>> = support.iter().map(|&k| &phi[k]).collect();
        let (sols, deficient) = least_squares(&atoms, ys);
        rank_deficient |= deficient;
        for (k, x) in sols.into_iter().enumerate() {
            let mut r = ys[k].clone();
            for (atom, c) in atoms.iter().zip(&x) {
                for (rv, a) in r.iter_mut().zip(atom.iter()) {
                    *rv -= c * a;
                }
            }
            residuals[k] = r;
            coeffs[k] = x;
        }
        residual_norms.push(residuals.iter().map(|r| cnorm(r)).collect());
    }
    let coefficients = coeffs
        .into_iter()
        .map(|x| {
            let mut full = vec![Complex64::new(0.0, 0.0); g];
            for (&k, c) in support.iter().zip(x) {
                full[k] = c;
            }
            full
        })
        .collect();
    Ok(SparseRecovery {
        support,
        coefficients,
        residual_norms,
        rank_deficient,
    })
}

/// JOMP channel estimates `ĥ_k = A·x̂_k` for `K` users from their `vec(Y)`.
/// Every receive antenna of every user contributes one signal with the
/// shared support.
pub fn jomp_estimate(
    system: &SystemConfig,
    pilot: &PilotMatrix,
    dict: &AngularDictionary,
    measurements: &[Vec<Complex64>],
    config: &JompConfig,
) -> Result<(Vec<Vec<Complex64>>, SparseRecovery)> {
    if system.n_sc != 1 {
        return Err(Error::Config("JOMP is implemented for a single subcarrier".into()));
    }
    let (nr, l) = (system.n_rx, system.pilot_len);
    let phi = dict.measurement_dictionary(pilot, 0);
    let mut ys = Vec::with_capacity(measurements.len() * nr);
    for y in measurements {
        if y.len() != nr * l {
            return Err(Error::Dimension(format!("measurement of length {} expected {}", y.len(), nr * l)));
        }
        for r in 0..nr {
            ys.push((0..l).map(|li| y[li * nr + r]).collect());
        }
    }
    let rec = jomp(&phi, &ys, config.sparsity.min(l), config.tol)?;
    let est = measurements
        .iter()
        .enumerate()
        .map(|(u, _)| {
            let mut h = vec![Complex64::new(0.0, 0.0); system.channel_len()];
            for r in 0..nr {
                let hr = dict.synthesize(&rec.coefficients[u * nr + r]);
                for (t, v) in hr.into_iter().enumerate() {
                    h[t * nr + r] = v;
                }
            }
            h
        })
        .collect();
    Ok((est, rec))
}
