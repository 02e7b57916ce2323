//! Central finite-difference checks of every layer and loss, 20 random
//! configurations each. Every case returns one result per configuration.

use muce_core::channel_sim::SystemConfig;
use muce_core::clnet::{ClnetArch, ClnetModel, ContrastiveBatch, ContrastiveLoss};
use muce_core::dnet::{joint_objective, DsnetArch, DsnetModel, GroupedSet, SimPenalty};
use muce_core::numerics::gradcheck::{check, rel_error, GradCheck};
use muce_core::numerics::rng::{index, stream, unit_f64, StreamRng};
use muce_core::numerics::{Conv1dSpec, Graph, ModelParams, Tensor, Var};
use muce_core::{Complex64, Result};

pub const CONFIGS: u64 = 20;
pub const TOL: f64 = 1e-5;
const STEP: f64 = 1e-6;
/// Denominator floor for entries whose gradient is numerically zero.
const FLOOR: f64 = 1e-6;
/// The joint objective is O(1), so central-difference roundoff at the
/// smallest retry step reaches 1e-8; entries below this floor are held to an
/// absolute 3e-8.
const JOINT_FLOOR: f64 = 3e-3;
/// Steps retried on entries whose first difference straddles a leaky-relu
/// kink somewhere in the conv stack.
const RETRY_STEPS: [f64; 2] = [1e-7, 3e-8];
const JOINT_ENTRIES: usize = 1500;

fn uniform(rng: &mut StreamRng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| scale * (2.0 * unit_f64(rng) - 1.0)).collect()).unwrap()
}

/// Analytic gradient of `build` against central differences.
fn grad_check<F>(params: &ModelParams, build: F) -> GradCheck
where
    F: Fn(&mut Graph, &ModelParams) -> Result<(Var, Vec<(String, Var)>)>,
{
    let mut g = Graph::new();
    let (loss, vars) = build(&mut g, params).unwrap();
    let grads = g.backward(loss).unwrap();
    let mut analytic = ModelParams::new();
    for (name, v) in vars {
        let t = grads.wrt(v).cloned().unwrap_or_else(|| Tensor::zeros(g.value(v).shape()));
        analytic.insert(name, t);
    }
    check(params, &analytic, STEP, FLOOR, |p| {
        let mut g = Graph::new();
        let (loss, _) = build(&mut g, p).unwrap();
        g.value(loss).data()[0]
    })
}

/// Binds every entry of `p` as a leaf and returns the vars by name.
fn leaves(g: &mut Graph, p: &ModelParams) -> Vec<(String, Var)> {
    p.iter().map(|(k, t)| (k.clone(), g.leaf(t.clone()))).collect()
}

fn var(vars: &[(String, Var)], name: &str) -> Var {
    vars.iter().find(|(k, _)| k == name).unwrap().1
}

pub fn dense_layer() -> Vec<GradCheck> {
    let mut out = Vec::new();
    for seed in 0..CONFIGS {
        let mut rng = stream(seed, "grad/dense", 0);
        let (b, n, o) = (1 + index(&mut rng, 4), 1 + index(&mut rng, 7), 1 + index(&mut rng, 6));
        let mut p = ModelParams::new();
        p.insert("x", uniform(&mut rng, &[b, n], 1.0));
        p.insert("w", uniform(&mut rng, &[o, n], 1.0));
        p.insert("b", uniform(&mut rng, &[o], 1.0));
        let target = uniform(&mut rng, &[b, o], 1.0);
        let r = grad_check(&p, |g, p| {
            let v = leaves(g, p);
            let y = g.dense(var(&v, "x"), var(&v, "w"), var(&v, "b"))?;
            Ok((g.squared_error(y, target.clone())?, v))
        });
        out.push(r);
    }
    out
}

pub fn conv1d_layer() -> Vec<GradCheck> {
    let mut out = Vec::new();
    for seed in 0..CONFIGS {
        let mut rng = stream(seed, "grad/conv1d", 0);
        let kernel = 1 + index(&mut rng, 4);
        let spec = Conv1dSpec::new(kernel, 1 + index(&mut rng, 2), index(&mut rng, 2), 1 + index(&mut rng, 4));
        let (b, c) = (1 + index(&mut rng, 3), 1 + index(&mut rng, 3));
        let n = kernel + index(&mut rng, 6);
        let n_out = spec.output_len(n).unwrap();
        let mut p = ModelParams::new();
        p.insert("x", uniform(&mut rng, &[b, c, n], 1.0));
        p.insert("w", uniform(&mut rng, &[spec.out_ch, c, kernel], 1.0));
        p.insert("b", uniform(&mut rng, &[spec.out_ch], 1.0));
        let target = uniform(&mut rng, &[b, spec.out_ch, n_out], 1.0);
        let r = grad_check(&p, |g, p| {
            let v = leaves(g, p);
            let y = g.conv1d(var(&v, "x"), var(&v, "w"), var(&v, "b"), spec)?;
            Ok((g.squared_error(y, target.clone())?, v))
        });
        out.push(r);
    }
    out
}

pub fn leaky_relu_activation() -> Vec<GradCheck> {
    let mut out = Vec::new();
    for seed in 0..CONFIGS {
        let mut rng = stream(seed, "grad/act", 0);
        let n = 2 + index(&mut rng, 20);
        // keep inputs away from the kink so the central difference is smooth
        let x: Vec<f64> = (0..n)
            .map(|_| {
                let v = 2.0 * unit_f64(&mut rng) - 1.0;
                if v.abs() < 0.05 { v.signum() * 0.05 + v } else { v }
            })
            .collect();
        let mut p = ModelParams::new();
        p.insert("x", Tensor::new(vec![1, n], x).unwrap());
        let target = uniform(&mut rng, &[1, n], 1.0);
        let r = grad_check(&p, |g, p| {
            let v = leaves(g, p);
            let y = g.leaky_relu(var(&v, "x"))?;
            Ok((g.squared_error(y, target.clone())?, v))
        });
        out.push(r);
    }
    out
}

fn random_batches(rng: &mut StreamRng, n: usize) -> Vec<ContrastiveBatch> {
    let anchors = 1 + index(rng, 3);
    (0..anchors)
        .map(|_| {
            let mut ids: Vec<usize> = (0..n).collect();
            muce_core::numerics::rng::shuffle(&mut ids, rng);
            let n_pos = 1 + index(rng, 3);
            let n_neg = 1 + index(rng, 3);
            ContrastiveBatch {
                anchor: ids[0],
                positives: ids[1..1 + n_pos].to_vec(),
                negatives: ids[1 + n_pos..1 + n_pos + n_neg].to_vec(),
            }
        })
        .collect()
}

pub fn contrastive_loss_gradient() -> Vec<GradCheck> {
    let mut out = Vec::new();
    for seed in 0..CONFIGS {
        let mut rng = stream(seed, "grad/contrastive", 0);
        let (n, m) = (8, 2 + index(&mut rng, 5));
        let tau = 0.1 + unit_f64(&mut rng);
        let batches = random_batches(&mut rng, n);
        let mut p = ModelParams::new();
        p.insert("r", uniform(&mut rng, &[n, m], 0.7));
        let r = grad_check(&p, |g, p| {
            let v = leaves(g, p);
            let loss = g.apply(
                Box::new(ContrastiveLoss {
                    batches: batches.clone(),
                    tau,
                }),
                &[var(&v, "r")],
            )?;
            Ok((loss, v))
        });
        out.push(r);
    }
    out
}

pub fn mse_loss_gradient() -> Vec<GradCheck> {
    let mut out = Vec::new();
    for seed in 0..CONFIGS {
        let mut rng = stream(seed, "grad/mse", 0);
        let (groups, w) = (1 + index(&mut rng, 4), 2 * (1 + index(&mut rng, 6)));
        let target = uniform(&mut rng, &[groups, w], 2.0);
        let mut p = ModelParams::new();
        p.insert("h", uniform(&mut rng, &[groups, w], 2.0));
        let r = grad_check(&p, |g, p| {
            let v = leaves(g, p);
            let se = g.squared_error(var(&v, "h"), target.clone())?;
            Ok((g.scale(se, 1.0 / groups as f64)?, v))
        });
        out.push(r);
    }
    out
}

pub fn sim_regularizer_gradient() -> Vec<GradCheck> {
    let mut out = Vec::new();
    for seed in 0..CONFIGS {
        let mut rng = stream(seed, "grad/sim", 0);
        let j = 2 + index(&mut rng, 3);
        let groups = 1 + index(&mut rng, 3);
        let m = 2 + index(&mut rng, 5);
        let tau = 0.2 + unit_f64(&mut rng);
        let mut p = ModelParams::new();
        p.insert("r", uniform(&mut rng, &[groups * j, m], 0.5));
        let r = grad_check(&p, |g, p| {
            let v = leaves(g, p);
            let loss = g.apply(Box::new(SimPenalty { group_size: j, tau }), &[var(&v, "r")])?;
            Ok((loss, v))
        });
        out.push(r);
    }
    out
}

fn tiny_system(rng: &mut StreamRng) -> SystemConfig {
    SystemConfig {
        n_tx: 3 + index(rng, 3),
        pilot_len: 3 + index(rng, 3),
        ..SystemConfig::default()
    }
}

pub fn joint_loss_gradient() -> Vec<GradCheck> {
    let mut out = Vec::new();
    for seed in 0..CONFIGS {
        let mut rng = stream(seed, "grad/joint", 0);
        let system = tiny_system(&mut rng);
        let q = 1 + index(&mut rng, 3);
        let alpha = if seed % 4 == 0 { 0.0 } else { unit_f64(&mut rng) };
        let tau = 1.0 + unit_f64(&mut rng);
        let clnet = ClnetModel::init(ClnetArch::for_system(&system, 5), seed).unwrap();
        let dsnet = DsnetModel::init(DsnetArch::for_features(&system, clnet.arch.m, q), seed).unwrap();
        let n_groups = 1 + index(&mut rng, 2);
        let n = n_groups * q;
        let inputs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..system.input_len()).map(|_| 2.0 * unit_f64(&mut rng) - 1.0).collect())
            .collect();
        let channels: Vec<Vec<Complex64>> = (0..n)
            .map(|_| {
                (0..system.channel_len())
                    .map(|_| Complex64::new(unit_f64(&mut rng) - 0.5, unit_f64(&mut rng) - 0.5))
                    .collect()
            })
            .collect();
        let groups: Vec<Vec<usize>> = (0..n_groups).map(|t| (t * q..(t + 1) * q).collect()).collect();
        let set = GroupedSet {
            inputs: &inputs,
            channels: &channels,
            groups: groups.clone(),
        };
        let p = clnet.params.prefixed("c.").merged(&dsnet.params.prefixed("d."));
        let build = |g: &mut Graph, p: &ModelParams| -> Result<(Var, Vec<(String, Var)>)> {
            let cv = g.bind(&p.strip_prefix("c."));
            let dv = g.bind(&p.strip_prefix("d."));
            let loss = joint_objective(g, &clnet, &cv, &dsnet, &dv, &set, &groups, alpha, tau)?;
            let mut vars: Vec<(String, Var)> = cv.iter().map(|(k, v)| (format!("c.{k}"), *v)).collect();
            vars.extend(dv.iter().map(|(k, v)| (format!("d.{k}"), *v)));
            Ok((loss, vars))
        };
        let r = kink_tolerant_check(&p, &mut rng, build);
        out.push(r);
    }
    out
}

/// Central differences on `JOINT_ENTRIES` sampled entries. An entry that
/// misses at [`STEP`] is re-differenced at each of [`RETRY_STEPS`] and kept
/// at its best agreement.
fn kink_tolerant_check<F>(params: &ModelParams, rng: &mut StreamRng, build: F) -> GradCheck
where
    F: Fn(&mut Graph, &ModelParams) -> Result<(Var, Vec<(String, Var)>)>,
{
    let mut g = Graph::new();
    let (loss, vars) = build(&mut g, params).unwrap();
    let grads = g.backward(loss).unwrap();
    let eval = |p: &ModelParams| {
        let mut g = Graph::new();
        let (loss, _) = build(&mut g, p).unwrap();
        g.value(loss).data()[0]
    };
    let entries: Vec<(String, usize)> = vars
        .iter()
        .flat_map(|(name, _)| (0..params.get(name).unwrap().len()).map(move |i| (name.clone(), i)))
        .collect();
    let mut res = GradCheck {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        checked: 0,
    };
    let mut work = params.clone();
    let mut diff = |name: &str, i: usize, h: f64| {
        let orig = params.get(name).unwrap().data()[i];
        work.get_mut(name).unwrap().data_mut()[i] = orig + h;
        let fp = eval(&work);
        work.get_mut(name).unwrap().data_mut()[i] = orig - h;
        let fm = eval(&work);
        work.get_mut(name).unwrap().data_mut()[i] = orig;
        (fp - fm) / (2.0 * h)
    };
    for _ in 0..JOINT_ENTRIES {
        let (name, i) = &entries[index(rng, entries.len())];
        let v = var(&vars, name);
        let av = grads.wrt(v).map_or(0.0, |t| t.data()[*i]);
        let (mut rel, mut abs) = (f64::INFINITY, f64::INFINITY);
        for h in std::iter::once(STEP).chain(RETRY_STEPS) {
            if rel < TOL {
                break;
            }
            let nh = diff(name, *i, h);
            rel = rel.min(rel_error(av, nh, JOINT_FLOOR));
            abs = abs.min((av - nh).abs());
        }
        res.max_rel_error = res.max_rel_error.max(rel);
        res.max_abs_error = res.max_abs_error.max(abs);
        res.checked += 1;
    }
    res
}

pub const CASES: [(&str, fn() -> Vec<GradCheck>); 7] = [
    ("dense", dense_layer),
    ("conv1d", conv1d_layer),
    ("leaky relu", leaky_relu_activation),
    ("contrastive loss", contrastive_loss_gradient),
    ("mse loss", mse_loss_gradient),
    ("L_sim", sim_regularizer_gradient),
    ("joint loss", joint_loss_gradient),
];
