//! Direct-evaluation oracles for the closed-form quantities. Every case
//! returns the worst relative error over its random instances.

use muce_core::adaptive_pipeline::nmse;
use muce_core::clnet::{contrastive_loss, csi_similarity, nu, pair_similarity, ContrastiveBatch};
use muce_core::dnet::{mse_loss, nu_inv, sim_regularizer, SimPenalty};
use muce_core::numerics::rng::{index, shuffle, stream, unit_f64, StreamRng};
use muce_core::numerics::{Function, Tensor};
use muce_core::Complex64;

pub const INSTANCES: u64 = 60;
pub const TOL: f64 = 1e-12;

/// Largest relative error seen and the instance that produced it.
#[derive(Debug, Clone, Copy, Default)]
pub struct Worst {
    pub rel: f64,
    pub instance: u64,
    pub instances: u64,
}

impl Worst {
    fn add(&mut self, instance: u64, got: f64, want: f64) {
        let rel = if got == want {
            0.0
        } else {
            (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
        };
        // a NaN sticks as a failure
        if rel.is_nan() || (!self.rel.is_nan() && rel > self.rel) {
            self.rel = rel;
            self.instance = instance;
        }
        self.instances = self.instances.max(instance + 1);
    }
}

fn reals(rng: &mut StreamRng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * (2.0 * unit_f64(rng) - 1.0)).collect()
}

fn complexes(rng: &mut StreamRng, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::new(2.0 * unit_f64(rng) - 1.0, 2.0 * unit_f64(rng) - 1.0))
        .collect()
}

fn oracle_dot(a: &[f64], b: &[f64]) -> f64 {
    // summed back to front so the oracle does not share the forward order
    a.iter().rev().zip(b.iter().rev()).fold(0.0, |s, (x, y)| s + x * y)
}

pub fn nu_and_inverse() -> Worst {
    let mut w = Worst::default();
    for seed in 0..INSTANCES {
        let mut rng = stream(seed, "oracle/nu", 0);
        let n = 1 + index(&mut rng, 60);
        let z = complexes(&mut rng, n);
        let x = nu(&z);
        w.add(seed, x.len() as f64, (2 * n) as f64);
        let back = nu_inv(&x).unwrap();
        for k in 0..n {
            w.add(seed, x[k], z[k].re);
            w.add(seed, x[n + k], z[k].im);
            w.add(seed, back[k].re, z[k].re);
            w.add(seed, back[k].im, z[k].im);
        }
        let v = reals(&mut rng, 2 * n, 3.0);
        for (a, b) in nu(&nu_inv(&v).unwrap()).iter().zip(&v) {
            w.add(seed, *a, *b);
        }
    }
    w
}

pub fn pair_similarity_oracle() -> Worst {
    let mut w = Worst::default();
    for seed in 0..INSTANCES {
        let mut rng = stream(seed, "oracle/pair", 0);
        let m = 1 + index(&mut rng, 112);
        let (a, b) = (reals(&mut rng, m, 0.2), reals(&mut rng, m, 0.2));
        let tau = 0.05 + unit_f64(&mut rng);
        w.add(seed, pair_similarity(&a, &b, tau), (oracle_dot(&a, &b) / tau).exp());
    }
    w
}

pub fn csi_similarity_oracle() -> Worst {
    let mut w = Worst::default();
    for seed in 0..INSTANCES {
        let mut rng = stream(seed, "oracle/gamma", 0);
        let m = 1 + index(&mut rng, 112);
        let (a, b) = (reals(&mut rng, m, 2.0), reals(&mut rng, m, 2.0));
        let d = a.iter().zip(&b).fold(0.0f64, |acc, (x, y)| acc.hypot(x - y));
        w.add(seed, csi_similarity(&a, &b), 1.0 / d);
    }
    w
}

/// `(1/B)·Σ_b −Σ_{a∈P} ln(s_a / Σ_{j∈P∪N} s_j)` with plain exponentials.
fn oracle_contrastive(r: &[Vec<f64>], batches: &[ContrastiveBatch], tau: f64) -> f64 {
    let mut total = 0.0;
    for b in batches {
        let s = |j: usize| (oracle_dot(&r[b.anchor], &r[j]) / tau).exp();
        let denom: f64 = b.positives.iter().chain(&b.negatives).map(|&j| s(j)).sum();
        total -= b.positives.iter().map(|&a| (s(a) / denom).ln()).sum::<f64>();
    }
    total / batches.len() as f64
}

pub fn contrastive_loss_oracle() -> Worst {
    let mut w = Worst::default();
    for seed in 0..INSTANCES {
        let mut rng = stream(seed, "oracle/contrastive", 0);
        let n = 6 + index(&mut rng, 20);
        let m = 1 + index(&mut rng, 16);
        let r: Vec<Vec<f64>> = (0..n).map(|_| reals(&mut rng, m, 0.4)).collect();
        let tau = 0.1 + unit_f64(&mut rng);
        let batches: Vec<ContrastiveBatch> = (0..1 + index(&mut rng, 5))
            .map(|_| {
                let mut ids: Vec<usize> = (0..n).collect();
                shuffle(&mut ids, &mut rng);
                let p = 1 + index(&mut rng, (n - 1) / 2);
                let q = 1 + index(&mut rng, n - 1 - p);
                ContrastiveBatch {
                    anchor: ids[0],
                    positives: ids[1..1 + p].to_vec(),
                    negatives: ids[1 + p..1 + p + q].to_vec(),
                }
            })
            .collect();
        let got = contrastive_loss(&r, &batches, tau).unwrap();
        w.add(seed, got, oracle_contrastive(&r, &batches, tau));
    }
    w
}

pub fn mse_loss_oracle() -> Worst {
    let mut w = Worst::default();
    for seed in 0..INSTANCES {
        let mut rng = stream(seed, "oracle/mse", 0);
        let (t, j, n) = (1 + index(&mut rng, 6), 1 + index(&mut rng, 3), 1 + index(&mut rng, 56));
        let truth: Vec<Vec<Vec<Complex64>>> =
            (0..t).map(|_| (0..j).map(|_| complexes(&mut rng, n)).collect()).collect();
        let est: Vec<Vec<Vec<Complex64>>> =
            (0..t).map(|_| (0..j).map(|_| complexes(&mut rng, n)).collect()).collect();
        let mut want = 0.0;
        for g in 0..t {
            for u in 0..j {
                for k in 0..n {
                    let d = truth[g][u][k] - est[g][u][k];
                    want += d.re * d.re + d.im * d.im;
                }
            }
        }
        w.add(seed, mse_loss(&truth, &est).unwrap(), want / t as f64);
    }
    w
}

pub fn sim_regularizer_oracle() -> Worst {
    let mut w = Worst::default();
    for seed in 0..INSTANCES {
        let mut rng = stream(seed, "oracle/sim", 0);
        let (g, j, m) = (1 + index(&mut rng, 4), 2 + index(&mut rng, 3), 1 + index(&mut rng, 32));
        let tau = 0.1 + unit_f64(&mut rng);
        let rows: Vec<Vec<f64>> = (0..g * j).map(|_| reals(&mut rng, m, 0.3)).collect();
        // half of the ordered-pair sum
        let group_oracle = |rs: &[Vec<f64>]| {
            let mut s = 0.0;
            for a in 0..rs.len() {
                for b in 0..rs.len() {
                    if a != b {
                        s -= (oracle_dot(&rs[a], &rs[b]) / tau).exp();
                    }
                }
            }
            s / 2.0
        };
        let want: f64 = rows.chunks(j).map(group_oracle).sum();
        let one: f64 = group_oracle(&rows[..j]);
        w.add(seed, sim_regularizer(&rows[..j], tau), one);
        let x = Tensor::new(vec![g * j, m], rows.concat()).unwrap();
        let got = SimPenalty { group_size: j, tau }.forward(&[&x]).unwrap().data()[0];
        w.add(seed, got, want);
    }
    w
}

pub fn nmse_oracle() -> Worst {
    let mut w = Worst::default();
    for seed in 0..INSTANCES {
        let mut rng = stream(seed, "oracle/nmse", 0);
        let (n, len) = (1 + index(&mut rng, 40), 1 + index(&mut rng, 56));
        let truth: Vec<Vec<Complex64>> = (0..n).map(|_| complexes(&mut rng, len)).collect();
        let est: Vec<Vec<Complex64>> = (0..n).map(|_| complexes(&mut rng, len)).collect();
        let mut acc = 0.0;
        for (h, e) in truth.iter().zip(&est) {
            let err: f64 = h.iter().zip(e).map(|(a, b)| (a.re - b.re).powi(2) + (a.im - b.im).powi(2)).sum();
            let pow: f64 = h.iter().map(|a| a.re.powi(2) + a.im.powi(2)).sum();
            acc += err / pow;
        }
        let want = acc / n as f64;
        let got = nmse(&truth, &est).unwrap();
        w.add(seed, got.count as f64, n as f64);
        w.add(seed, got.linear, want);
        w.add(seed, got.db, 10.0 * want.log10());
    }
    w
}


pub const CASES: [(&str, fn() -> Worst); 7] = [
    ("nu / nu_inv", nu_and_inverse),
    ("pair similarity", pair_similarity_oracle),
    ("csi similarity", csi_similarity_oracle),
    ("contrastive loss", contrastive_loss_oracle),
    ("mse loss", mse_loss_oracle),
    ("L_sim", sim_regularizer_oracle),
    ("nmse", nmse_oracle),
];
