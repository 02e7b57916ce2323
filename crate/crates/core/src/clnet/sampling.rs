use std::collections::HashMap;

use rand::RngCore;

use super::ContrastiveConfig;
use crate::error::{Error, Result};
use crate::numerics::rng::index;

/// Anchor with its positive and negative sample indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContrastiveBatch {
    pub anchor: usize,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

/// Uniform grid over positions with cell size `d` for radius queries.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    positions: Vec<[f64; 2]>,
    d: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl NeighborIndex {
    pub fn new(positions: &[[f64; 2]], d: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in positions.iter().enumerate() {
            cells.entry(cell(*p, d)).or_default().push(i);
        }
        NeighborIndex {
            positions: positions.to_vec(),
            d,
            cells,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn radius(&self) -> f64 {
        self.d
    }

    /// All `j ≠ i` with `‖p_j − p_i‖ ≤ d`, sorted by distance then index.
    pub fn ball(&self, i: usize) -> Vec<usize> {
        let p = self.positions[i];
        let (cx, cy) = cell(p, self.d);
        let mut hits: Vec<(f64, usize)> = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(members) = self.cells.get(&(cx + dx, cy + dy)) {
                    for &j in members {
                        if j == i {
                            continue;
                        }
                        let dist = distance(p, self.positions[j]);
                        if dist <= self.d {
                            hits.push((dist, j));
                        }
                    }
                }
            }
        }
        hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        hits.into_iter().map(|(_, j)| j).collect()
    }
}

fn cell(p: [f64; 2], d: f64) -> (i64, i64) {
    ((p[0] / d).floor() as i64, (p[1] / d).floor() as i64)
}

pub(crate) fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Positives are the `max_positives` nearest samples within `d`; negatives
/// are `n_negatives` uniform draws without replacement from beyond `d` (all
/// of them when fewer exist). Returns `Ok(None)` for an anchor with no
/// neighbor inside the radius.
pub fn sample_positives_negatives<R: RngCore + ?Sized>(
    index_: &NeighborIndex,
    anchor: usize,
    config: &ContrastiveConfig,
    rng: &mut R,
) -> Result<Option<ContrastiveBatch>> {
    let n = index_.len();
    if n < 2 {
        return Err(Error::Config("contrastive sampling needs at least 2 samples".into()));
    }
    if anchor >= n {
        return Err(Error::Dimension(format!("anchor {anchor} out of range for {n} samples")));
    }
    let ball = index_.ball(anchor);
    if ball.is_empty() {
        return Ok(None);
    }
    let far_count = n - 1 - ball.len();
    if far_count == 0 {
        return Err(Error::Config(format!(
            "anchor {anchor} has no sample farther than d = {} m",
            index_.radius()
        )));
    }
    let p = index_.positions[anchor];
    let is_far = |j: usize| j != anchor && distance(p, index_.positions[j]) > index_.radius();
    let want = config.n_negatives.min(far_count);
    let negatives = if far_count <= 2 * want {
        let mut far: Vec<usize> = (0..n).filter(|&j| is_far(j)).collect();
        for k in 0..want {
            let r = k + index(rng, far.len() - k);
            far.swap(k, r);
        }
        far.truncate(want);
        far
    } else {
        let mut chosen = Vec::with_capacity(want);
        while chosen.len() < want {
            let j = index(rng, n);
            if is_far(j) && !chosen.contains(&j) {
                chosen.push(j);
            }
        }
        chosen
    };
    let mut positives = ball;
    positives.truncate(config.max_positives);
    Ok(Some(ContrastiveBatch {
        anchor,
        positives,
        negatives,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::{stream, unit_f64};

    fn cfg(d: f64) -> ContrastiveConfig {
        ContrastiveConfig {
            d,
            max_positives: usize::MAX,
            ..ContrastiveConfig::default()
        }
    }

    #[test]
    fn line_example() {
        let pos = [[0.0, 0.0], [0.5, 0.0], [3.0, 0.0], [9.0, 0.0]];
        let idx = NeighborIndex::new(&pos, 1.0);
        let b = sample_positives_negatives(&idx, 0, &cfg(1.0), &mut stream(0, "t", 0))
            .unwrap()
            .unwrap();
        assert_eq!(b.positives, vec![1]);
        let mut neg = b.negatives.clone();
        neg.sort();
        assert_eq!(neg, vec![2, 3]);
    }

    #[test]
    fn isolated_anchor_is_skipped() {
        let pos = [[0.0, 0.0], [5.0, 0.0], [10.0, 0.0]];
        let idx = NeighborIndex::new(&pos, 1.0);
        for a in 0..3 {
            assert!(sample_positives_negatives(&idx, a, &cfg(1.0), &mut stream(0, "t", 0))
                .unwrap()
                .is_none());
        }
    }

    #[test]
    fn no_far_samples_is_config_error() {
        let pos = [[0.0, 0.0], [0.5, 0.0]];
        let idx = NeighborIndex::new(&pos, 1.0);
        assert!(matches!(
            sample_positives_negatives(&idx, 0, &cfg(1.0), &mut stream(0, "t", 0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn matches_brute_force_scan() {
        let mut rng = stream(5, "pos", 0);
        let pos: Vec<[f64; 2]> = (0..200)
            .map(|_| [100.0 * unit_f64(&mut rng), 100.0 * unit_f64(&mut rng)])
            .collect();
        let d = 2.0;
        let idx = NeighborIndex::new(&pos, d);
        let mut srng = stream(5, "neg", 0);
        for i in 0..pos.len() {
            let mut brute: Vec<usize> = (0..pos.len())
                .filter(|&j| j != i && distance(pos[i], pos[j]) <= d)
                .collect();
            let got = sample_positives_negatives(&idx, i, &cfg(d), &mut srng).unwrap();
            match got {
                None => assert!(brute.is_empty()),
                Some(b) => {
                    let mut a = b.positives.clone();
                    a.sort();
                    brute.sort();
                    assert_eq!(a, brute);
                    assert_eq!(b.negatives.len(), 16);
                    for &n in &b.negatives {
                        assert!(distance(pos[i], pos[n]) > d && n != i);
                    }
                    let mut u = b.negatives.clone();
                    u.sort();
                    u.dedup();
                    assert_eq!(u.len(), 16);
                }
            }
        }
    }

    #[test]
    fn cap_keeps_nearest() {
        let pos: Vec<[f64; 2]> = (0..12).map(|k| [k as f64 * 0.1, 0.0]).chain([[50.0, 50.0]]).collect();
        let idx = NeighborIndex::new(&pos, 2.0);
        let c = ContrastiveConfig {
            d: 2.0,
            max_positives: 3,
            ..ContrastiveConfig::default()
        };
        let b = sample_positives_negatives(&idx, 0, &c, &mut stream(0, "t", 0)).unwrap().unwrap();
        assert_eq!(b.positives, vec![1, 2, 3]);
        assert_eq!(b.negatives, vec![12]);
    }
}
