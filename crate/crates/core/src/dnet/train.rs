use num_complex::Complex64;

use super::loss::SimPenalty;
use super::{group_inputs, group_targets, DsnetArch, DsnetModel, JointConfig};
use crate::clnet::ClnetModel;
use crate::error::{Error, Result};
use crate::numerics::rng::{shuffle, stream};
use crate::numerics::{AdamState, Graph, Schedule};
use crate::adaptive_pipeline::nmse;

/// Per-sample inputs and labels with a grouping over them.
#[derive(Debug, Clone)]
pub struct GroupedSet<'a> {
    pub inputs: &'a [Vec<f64>],
    pub channels: &'a [Vec<Complex64>],
    pub groups: Vec<Vec<usize>>,
}

impl GroupedSet<'_> {
    fn check(&self, q: usize, width: usize) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::Training(format!("no groups of size {q} to train on")));
        }
        if self.groups.iter().any(|g| g.len() != q) {
            return Err(Error::Training(format!("every group must have exactly {q} members")));
        }
        let n = self.inputs.len();
        if self.channels.len() != n || self.groups.iter().flatten().any(|&i| i >= n) {
            return Err(Error::Dimension("group indices exceed the sample count".into()));
        }
        if self.inputs.iter().any(|r| r.len() != width) {
            return Err(Error::Dimension(format!("inputs must have length {width}")));
        }
        Ok(())
    }

    fn truth(&self) -> Vec<Vec<Complex64>> {
        self.groups.iter().flatten().map(|&i| self.channels[i].clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-group training loss; `NaN` for the untrained checkpoint.
    pub loss: f64,
    pub val_nmse: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct DsnetTraining {
    pub model: DsnetModel,
    pub trace: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (0 means untrained).
    pub best_epoch: usize,
}

fn batch_order(n: usize, seed: u64, label: &str, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    shuffle(&mut order, &mut stream(seed, label, epoch as u64));
    order
}

/// Validation NMSE of DSNet-q alone on `val`.
fn dsnet_val(model: &DsnetModel, val: &GroupedSet) -> Result<f64> {
    let est = model.predict_rows(group_inputs(val.inputs, &val.groups)?)?;
    Ok(nmse(&val.truth(), &est)?.linear)
}

/// Adam on the group MSE with frozen inputs. With a validation set the
/// parameters of the epoch with the lowest validation NMSE are kept.
pub fn train_dsnet(
    arch: DsnetArch,
    train: &GroupedSet,
    val: Option<&GroupedSet>,
    schedule: &Schedule,
    seed: u64,
) -> Result<DsnetTraining> {
    schedule.validate()?;
    let q = arch.q;
    train.check(q, arch.input_per_user)?;
    if let Some(v) = val {
        v.check(q, arch.input_per_user)?;
    }
    let mut model = DsnetModel::init(arch, seed)?;
    let mut adam = AdamState::new(&model.params, schedule.adam);
    let mut trace = Vec::with_capacity(schedule.epochs);
    let mut best = (f64::INFINITY, 0, model.params.clone());
    if let Some(v) = val {
        let score = dsnet_val(&model, v)?;
        trace.push(EpochRecord { epoch: 0, loss: f64::NAN, val_nmse: Some(score) });
        best.0 = score;
    }
    let label = format!("dsnet/{q}/epoch");
    for epoch in 1..=schedule.epochs {
        let order = batch_order(train.groups.len(), seed, &label, epoch);
        let mut total = 0.0;
        for chunk in order.chunks(schedule.batch_size) {
            let groups: Vec<Vec<usize>> = chunk.iter().map(|&k| train.groups[k].clone()).collect();
            let mut g = Graph::new();
            let vars = g.bind(&model.params);
            let x = g.input(group_inputs(train.inputs, &groups)?);
            let out = model.forward(&mut g, &vars, x)?;
            let se = g.squared_error(out, group_targets(train.channels, &groups)?)?;
            let loss = g.scale(se, 1.0 / groups.len() as f64)?;
            let lv = g.value(loss).data()[0];
            if !lv.is_finite() {
                return Err(Error::Training(format!("DSNet-{q} loss diverged at epoch {epoch}")));
            }
            total += lv * groups.len() as f64;
            let grads = g.backward(loss)?.collect(&g, &vars);
            adam.step(&mut model.params, &grads)?;
        }
        let val_nmse = match val {
            Some(v) => Some(dsnet_val(&model, v)?),
            None => None,
        };
        if let Some(s) = val_nmse {
            if s < best.0 {
                best = (s, epoch, model.params.clone());
            }
        }
        log::debug!("dsnet-{q} epoch {epoch}: loss {:.6} val {:?}", total / train.groups.len() as f64, val_nmse);
        trace.push(EpochRecord {
            epoch,
            loss: total / train.groups.len() as f64,
            val_nmse,
        });
    }
    let best_epoch = if val.is_some() {
        model.params = best.2;
        best.1
    } else {
        schedule.epochs
    };
    Ok(DsnetTraining { model, trace, best_epoch })
}

#[derive(Debug, Clone)]
pub struct JointTraining {
    pub clnet: ClnetModel,
    pub dsnet: DsnetModel,
    pub trace: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// Epoch whose loss became non-finite; training stopped there.
    pub diverged_at: Option<usize>,
}

/// Cascade NMSE of feature network plus DSNet on raw-input groups.
fn cascade_val(clnet: &ClnetModel, dsnet: &DsnetModel, val: &GroupedSet) -> Result<f64> {
    let feats = clnet.extract_batch(&group_inputs(val.inputs, &val.groups)?)?;
    let est = dsnet.predict_rows(feats)?;
    Ok(nmse(&val.truth(), &est)?.linear)
}

/// Records `(1/G)·Σ_t (α·L_sim + ‖H_t − Ĥ_t‖²)` through the live cascade.
#[allow(clippy::too_many_arguments)]
pub fn joint_objective(
    g: &mut Graph,
    clnet: &ClnetModel,
    cvars: &crate::numerics::ParamVars,
    dsnet: &DsnetModel,
    dvars: &crate::numerics::ParamVars,
    set: &GroupedSet,
    groups: &[Vec<usize>],
    alpha: f64,
    tau: f64,
) -> Result<crate::numerics::Var> {
    let x = g.input(group_inputs(set.inputs, groups)?);
    let feats = clnet.forward(g, cvars, x)?;
    let out = dsnet.forward(g, dvars, feats)?;
    let se = g.squared_error(out, group_targets(set.channels, groups)?)?;
    let total = if alpha > 0.0 {
        let sim = g.apply(
            Box::new(SimPenalty {
                group_size: dsnet.arch.q,
                tau,
            }),
            &[feats],
        )?;
        let weighted = g.scale(sim, alpha)?;
        g.add(weighted, se)?
    } else {
        se
    };
    g.scale(total, 1.0 / groups.len() as f64)
}

/// Refines the feature network and DSNet-Q together on raw-input groups of
/// size Q. With a validation set the best epoch (including the untrained
/// starting point, epoch 0) is kept.
#[allow(clippy::too_many_arguments)]
pub fn train_joint(
    clnet: &ClnetModel,
    dsnet: &DsnetModel,
    train: &GroupedSet,
    val: Option<&GroupedSet>,
    joint: JointConfig,
    tau: f64,
    schedule: &Schedule,
    seed: u64,
) -> Result<JointTraining> {
    joint.validate()?;
    schedule.validate()?;
    let q = dsnet.arch.q;
    if dsnet.arch.input_per_user != clnet.arch.m {
        return Err(Error::Dimension(format!(
            "DSNet-{q} expects inputs of length {}, features have {}",
            dsnet.arch.input_per_user, clnet.arch.m
        )));
    }
    train.check(q, clnet.arch.input_len)?;
    if let Some(v) = val {
        v.check(q, clnet.arch.input_len)?;
    }
    let mut cl = clnet.clone();
    let mut ds = dsnet.clone();
    let mut adam_c = AdamState::new(&cl.params, schedule.adam);
    let mut adam_d = AdamState::new(&ds.params, schedule.adam);
    let mut trace = Vec::with_capacity(schedule.epochs + 1);
    let mut best = (f64::INFINITY, 0, cl.params.clone(), ds.params.clone());
    if let Some(v) = val {
        let s = cascade_val(&cl, &ds, v)?;
        trace.push(EpochRecord { epoch: 0, loss: f64::NAN, val_nmse: Some(s) });
        best.0 = s;
    }
    let mut diverged_at = None;
    'epochs: for epoch in 1..=schedule.epochs {
        let order = batch_order(train.groups.len(), seed, "joint/epoch", epoch);
        let mut total = 0.0;
        for chunk in order.chunks(schedule.batch_size) {
            let groups: Vec<Vec<usize>> = chunk.iter().map(|&k| train.groups[k].clone()).collect();
            let mut g = Graph::new();
            let cvars = g.bind(&cl.params);
            let dvars = g.bind(&ds.params);
            let loss = joint_objective(&mut g, &cl, &cvars, &ds, &dvars, train, &groups, joint.alpha, tau)?;
            let lv = g.value(loss).data()[0];
            if !lv.is_finite() {
                if val.is_none() {
                    return Err(Error::Training(format!("joint loss diverged at epoch {epoch}")));
                }
                log::warn!("joint loss diverged at epoch {epoch}; keeping the best checkpoint so far");
                diverged_at = Some(epoch);
                break 'epochs;
            }
            total += lv * groups.len() as f64;
            let grads = g.backward(loss)?;
            adam_c.step(&mut cl.params, &grads.collect(&g, &cvars))?;
            adam_d.step(&mut ds.params, &grads.collect(&g, &dvars))?;
        }
        let val_nmse = match val {
            Some(v) => Some(cascade_val(&cl, &ds, v)?),
            None => None,
        };
        if let Some(s) = val_nmse {
            if s < best.0 {
                best = (s, epoch, cl.params.clone(), ds.params.clone());
            }
        }
        log::debug!("joint epoch {epoch}: loss {:.6} val {:?}", total / train.groups.len() as f64, val_nmse);
        trace.push(EpochRecord {
            epoch,
            loss: total / train.groups.len() as f64,
            val_nmse,
        });
    }
    let best_epoch = if val.is_some() {
        cl.params = best.2;
        ds.params = best.3;
        best.1
    } else {
        schedule.epochs
    };
    Ok(JointTraining {
        clnet: cl,
        dsnet: ds,
        trace,
        best_epoch,
        diverged_at,
    })
}
