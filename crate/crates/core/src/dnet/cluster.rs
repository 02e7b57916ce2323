use crate::clnet::csi_similarity;
use crate::error::{Error, Result};

/// Order in which group sizes are planned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupOrder {
    /// As many full groups of size `q` as possible, then one leftover group.
    #[default]
    LargestFirst,
    /// The same number of groups with sizes as even as possible, smallest
    /// groups formed first.
    SmallestFirst,
}

/// Group sizes for `n` points with cap `q`.
pub fn plan_sizes(n: usize, q: usize, order: GroupOrder) -> Vec<usize> {
    if n == 0 || q == 0 {
        return Vec::new();
    }
    match order {
        GroupOrder::LargestFirst => {
            let mut s = vec![q; n / q];
            if n % q != 0 {
                s.push(n % q);
            }
            s
        }
        GroupOrder::SmallestFirst => {
            let g = n.div_ceil(q);
            let (base, extra) = (n / g, n % g);
            let mut s = vec![base; g - extra];
            s.extend(std::iter::repeat_n(base + 1, extra));
            s
        }
    }
}

/// One group of sample indices, sorted ascending.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClusterGroup {
    pub members: Vec<usize>,
    /// Smallest pairwise `γ` inside the group (`inf` for a singleton).
    pub min_gamma: f64,
}

impl ClusterGroup {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Smallest pairwise `γ` among `members`.
pub fn min_pairwise_gamma(features: &[Vec<f64>], members: &[usize]) -> f64 {
    let mut m = f64::INFINITY;
    for (k, &a) in members.iter().enumerate() {
        for &b in &members[k + 1..] {
            m = m.min(csi_similarity(&features[a], &features[b]));
        }
    }
    m
}

/// Greedy agglomeration into groups of the planned sizes.
///
/// For each planned size the unassigned pair with the largest `γ` seeds a
/// group, which then grows by the unassigned point of highest mean `γ` to
/// its members. A planned singleton takes the unassigned point whose best
/// `γ` to the other unassigned points is smallest. Groups whose smallest
/// pairwise `γ` is below `floor` are split into singletons.
pub fn greedy_groups(features: &[Vec<f64>], sizes: &[usize], floor: f64) -> Vec<ClusterGroup> {
    let n = features.len();
    if sizes.iter().all(|&s| s == 1) {
        return (0..n.min(sizes.len()))
            .map(|i| ClusterGroup {
                members: vec![i],
                min_gamma: f64::INFINITY,
            })
            .collect();
    }
    let gamma = |a: usize, b: usize| csi_similarity(&features[a], &features[b]);
    let mut g = vec![0.0; n * n];
    for a in 0..n {
        for b in a + 1..n {
            let v = gamma(a, b);
            g[a * n + b] = v;
            g[b * n + a] = v;
        }
    }
    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    pairs.sort_by(|x, y| g[y.0 * n + y.1].total_cmp(&g[x.0 * n + x.1]).then(x.cmp(y)));
    let mut cursor = 0;
    let mut assigned = vec![false; n];
    let mut out = Vec::new();
    for &size in sizes {
        let mut members: Vec<usize> = Vec::with_capacity(size);
        if size == 1 {
            let pick = (0..n).filter(|&i| !assigned[i]).min_by(|&a, &b| {
                let best = |i: usize| {
                    (0..n)
                        .filter(|&j| j != i && !assigned[j])
                        .map(|j| g[i * n + j])
                        .fold(f64::NEG_INFINITY, f64::max)
                };
                best(a).total_cmp(&best(b)).then(a.cmp(&b))
            });
            if let Some(i) = pick {
                members.push(i);
            }
        } else {
            while cursor < pairs.len() && (assigned[pairs[cursor].0] || assigned[pairs[cursor].1]) {
                cursor += 1;
            }
            if cursor < pairs.len() {
                let (a, b) = pairs[cursor];
                members.extend([a, b]);
            }
            while !members.is_empty() && members.len() < size {
                let best = (0..n)
                    .filter(|&i| !assigned[i] && !members.contains(&i))
                    .map(|i| (members.iter().map(|&m| g[i * n + m]).sum::<f64>() / members.len() as f64, i))
                    .max_by(|x, y| x.0.total_cmp(&y.0).then(y.1.cmp(&x.1)));
                match best {
                    Some((_, i)) => members.push(i),
                    None => break,
                }
            }
        }
        if members.is_empty() {
            break;
        }
        for &m in &members {
            assigned[m] = true;
        }
        members.sort_unstable();
        let min_gamma = min_pairwise_gamma(features, &members);
        if members.len() > 1 && min_gamma < floor {
            out.extend(members.into_iter().map(|m| ClusterGroup {
                members: vec![m],
                min_gamma: f64::INFINITY,
            }));
        } else {
            out.push(ClusterGroup { members, min_gamma });
        }
    }
    out
}

/// Clusters labeled samples by feature similarity into groups of size `q`
/// (largest first); the leftover points form one smaller group.
pub fn cluster_training_data(features: &[Vec<f64>], q: usize, floor: f64) -> Result<Vec<ClusterGroup>> {
    if q == 0 {
        return Err(Error::Config("group size q must be >= 1".into()));
    }
    if features.len() < q {
        return Err(Error::Config(format!(
            "cannot form groups of {q} from {} samples",
            features.len()
        )));
    }
    Ok(greedy_groups(features, &plan_sizes(features.len(), q, GroupOrder::LargestFirst), floor))
}
