use crate::error::{Error, Result};
use crate::numerics::rng::{stream, unit_f64};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub assignments: Vec<usize>,
    pub centroids: Vec<[f64; 2]>,
    pub iterations: usize,
}

pub const KMEANS_MAX_ITER: usize = 100;

fn d2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn nearest(p: [f64; 2], centroids: &[[f64; 2]]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (c, &m) in centroids.iter().enumerate() {
        let d = d2(p, m);
        if d < best.0 {
            best = (d, c);
        }
    }
    best.1
}

/// Lloyd iterations from a k-means++ seeding, stopping when assignments
/// stop changing or after [`KMEANS_MAX_ITER`] rounds. An emptied cluster
/// keeps its previous centroid.
pub fn kmeans(points: &[[f64; 2]], k: usize, seed: u64) -> Result<KMeans> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::Config(format!("k-means needs 1 <= k <= {n}, got k = {k}")));
    }
    let mut rng = stream(seed, "kmeans", 0);
    let mut centroids = vec![points[crate::numerics::rng::index(&mut rng, n)]];
    let mut dmin: Vec<f64> = points.iter().map(|&p| d2(p, centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = dmin.iter().sum();
        let pick = if total > 0.0 {
            let target = unit_f64(&mut rng) * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &d) in dmin.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            crate::numerics::rng::index(&mut rng, n)
        };
        let c = points[pick];
        centroids.push(c);
        for (d, &p) in dmin.iter_mut().zip(points) {
            *d = d.min(d2(p, c));
        }
    }
    let mut assignments: Vec<usize> = points.iter().map(|&p| nearest(p, &centroids)).collect();
    let mut iterations = 0;
    while iterations < KMEANS_MAX_ITER {
        iterations += 1;
        let mut sums = vec![[0.0, 0.0, 0.0]; k];
        for (&a, p) in assignments.iter().zip(points) {
            sums[a][0] += p[0];
            sums[a][1] += p[1];
            sums[a][2] += 1.0;
        }
        for (c, s) in centroids.iter_mut().zip(&sums) {
            if s[2] > 0.0 {
                *c = [s[0] / s[2], s[1] / s[2]];
            }
        }
        let next: Vec<usize> = points.iter().map(|&p| nearest(p, &centroids)).collect();
        if next == assignments {
            break;
        }
        assignments = next;
    }
    Ok(KMeans {
        assignments,
        centroids,
        iterations,
    })
}

impl KMeans {
    pub fn distortion(&self, points: &[[f64; 2]]) -> f64 {
        points
            .iter()
            .zip(&self.assignments)
            .map(|(&p, &a)| d2(p, self.centroids[a]))
            .sum()
    }
}
