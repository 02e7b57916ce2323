//! Test-time adaptive estimation: features for `K` users, grouping by `γ`,
//! dispatch of each group to the DSNet of its size, and NMSE scoring.

use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;

use crate::clnet::ClnetModel;
use crate::dnet::{greedy_groups, plan_sizes, DsnetModel, GroupOrder};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::storage;

/// NMSE with its dB value and the number of excluded zero-norm samples.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Nmse {
    pub linear: f64,
    pub db: f64,
    pub count: usize,
    pub excluded: usize,
}

/// `(1/N)·Σ ‖h_n − ĥ_n‖²/‖h_n‖²`; samples with `‖h_n‖ = 0` are skipped and
/// counted.
pub fn nmse(truth: &[Vec<Complex64>], est: &[Vec<Complex64>]) -> Result<Nmse> {
    if truth.len() != est.len() {
        return Err(Error::Dimension(format!(
            "nmse over {} true and {} estimated channels",
            truth.len(),
            est.len()
        )));
    }
    let mut acc = 0.0;
    let mut count = 0;
    let mut excluded = 0;
    for (h, e) in truth.iter().zip(est) {
        if h.len() != e.len() {
            return Err(Error::Dimension(format!("channel lengths {} and {} differ", h.len(), e.len())));
        }
        let p: f64 = h.iter().map(|z| z.norm_sqr()).sum();
        if p == 0.0 {
            excluded += 1;
            continue;
        }
        acc += h.iter().zip(e).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / p;
        count += 1;
    }
    if excluded > 0 {
        log::warn!("nmse: excluded {excluded} zero-norm channels");
    }
    let linear = if count > 0 { acc / count as f64 } else { f64::NAN };
    Ok(Nmse {
        linear,
        db: 10.0 * linear.log10(),
        count,
        excluded,
    })
}

/// Partition of `K` users into groups of at most `Q`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct UserGrouping {
    /// User indices per group, ascending.
    pub groups: Vec<Vec<usize>>,
    /// Smallest pairwise `γ` per group (`inf` for singletons).
    pub min_gamma: Vec<f64>,
}

impl UserGrouping {
    /// Whether the groups partition `0..k` with every size in `1..=q`.
    pub fn is_valid_partition(&self, k: usize, q: usize) -> bool {
        let mut seen = vec![false; k];
        for g in &self.groups {
            if g.is_empty() || g.len() > q {
                return false;
            }
            for &u in g {
                if u >= k || seen[u] {
                    return false;
                }
                seen[u] = true;
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Groups `K` users by feature similarity; groups below `floor` become
/// singletons.
pub fn group_users(features: &[Vec<f64>], q: usize, floor: f64, order: GroupOrder) -> UserGrouping {
    let sizes = plan_sizes(features.len(), q.max(1), order);
    let groups = greedy_groups(features, &sizes, floor);
    UserGrouping {
        min_gamma: groups.iter().map(|g| g.min_gamma).collect(),
        groups: groups.into_iter().map(|g| g.members).collect(),
    }
}

/// Feature network, DSNets `1..=Q` and the grouping rule.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposedModel {
    pub clnet: ClnetModel,
    /// `dsnets[q − 1]` is DSNet-q.
    pub dsnets: Vec<DsnetModel>,
    pub floor: f64,
    pub order: GroupOrder,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct ProposedMeta {
    q_max: usize,
    floor: f64,
    order: GroupOrder,
}

impl ProposedModel {
    pub fn q_max(&self) -> usize {
        self.dsnets.len()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.clnet.save(dir, "clnet")?;
        for d in &self.dsnets {
            d.save(dir, &format!("dsnet{}", d.arch.q))?;
        }
        let meta = ProposedMeta {
            q_max: self.q_max(),
            floor: self.floor,
            order: self.order,
        };
        storage::write_meta(&dir.join("grouping.toml"), &meta)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: ProposedMeta = storage::read_meta(&dir.join("grouping.toml"))?;
        let clnet = ClnetModel::load(dir, "clnet")?;
        let dsnets = (1..=meta.q_max)
            .map(|q| DsnetModel::load(dir, &format!("dsnet{q}")))
            .collect::<Result<Vec<_>>>()?;
        Ok(ProposedModel {
            clnet,
            dsnets,
            floor: meta.floor,
            order: meta.order,
        })
    }
}

/// One user's row of an [`EstimationReport`].
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct UserEstimate {
    pub user: usize,
    pub group: usize,
    #[serde(skip)]
    pub h_est: Vec<Complex64>,
    pub nmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EstimationReport {
    pub method: String,
    pub users: Vec<UserEstimate>,
    pub grouping: UserGrouping,
    pub elapsed_s: f64,
}

impl EstimationReport {
    pub fn estimates(&self) -> Vec<Vec<Complex64>> {
        self.users.iter().map(|u| u.h_est.clone()).collect()
    }

    /// Attaches per-user NMSE against `truth`.
    pub fn score(&mut self, truth: &[Vec<Complex64>]) -> Result<()> {
        if truth.len() != self.users.len() {
            return Err(Error::Dimension("one true channel per user is required".into()));
        }
        for (u, h) in self.users.iter_mut().zip(truth) {
            u.nmse = Some(nmse(std::slice::from_ref(h), std::slice::from_ref(&u.h_est))?.linear);
        }
        Ok(())
    }

    /// `user,group,nmse` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("user,group,nmse\n");
        for u in &self.users {
            let v = u.nmse.map_or(String::new(), |x| format!("{x}"));
            s.push_str(&format!("{},{},{}\n", u.user, u.group, v));
        }
        s
    }
}

/// Builds a report from a grouping and per-group estimates (members in
/// group order).
pub(crate) fn assemble(
    method: &str,
    k: usize,
    grouping: UserGrouping,
    per_group: Vec<Vec<Vec<Complex64>>>,
    started: Instant,
) -> Result<EstimationReport> {
    let mut slots: Vec<Option<UserEstimate>> = vec![None; k];
    for (gi, (g, est)) in grouping.groups.iter().zip(per_group).enumerate() {
        for (&u, h) in g.iter().zip(est) {
            slots[u] = Some(UserEstimate {
                user: u,
                group: gi,
                h_est: h,
                nmse: None,
            });
        }
    }
    let users = slots
        .into_iter()
        .enumerate()
        .map(|(u, s)| s.ok_or_else(|| Error::Dispatch(format!("user {u} received no estimate"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(EstimationReport {
        method: method.into(),
        users,
        grouping,
        elapsed_s: started.elapsed().as_secs_f64(),
    })
}

/// Estimates the channels of `K` users from their `ν(y)` rows.
pub fn estimate_multi_user(model: &ProposedModel, y_real: &[Vec<f64>]) -> Result<EstimationReport> {
    let started = Instant::now();
    let k = y_real.len();
    let w = model.clnet.arch.input_len;
    if y_real.iter().any(|r| r.len() != w) {
        return Err(Error::Dimension(format!("measurements must have length {w}")));
    }
    let x = Tensor::new(vec![k, w], y_real.concat())?;
    let f = model.clnet.extract_batch(&x)?;
    let features: Vec<Vec<f64>> = (0..k).map(|i| f.row(i).to_vec()).collect();
    let grouping = group_users(&features, model.q_max(), model.floor, model.order);
    let mut per_group = Vec::with_capacity(grouping.groups.len());
    for g in &grouping.groups {
        let net = model.dsnets.get(g.len().wrapping_sub(1)).ok_or_else(|| {
            Error::Dispatch(format!("no DSNet-{} for a group of {} users", g.len(), g.len()))
        })?;
        let members: Vec<Vec<f64>> = g.iter().map(|&u| features[u].clone()).collect();
        per_group.push(crate::dnet::dsnet_forward(net, &members)?);
    }
    assemble("proposed", k, grouping, per_group, started)
}
