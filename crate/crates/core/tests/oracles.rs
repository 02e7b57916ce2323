use muce_core::channel_sim::{build_datasets, Area, DatasetSizes, PilotMatrix, Scene, SystemConfig};
use muce_core::clnet::{similarity_curve, CurveConfig, SimilarityMode};

#[path = "support/formula_cases.rs"]
mod cases;

use cases::{CASES, INSTANCES, TOL};

#[test]
fn formulas_match_direct_evaluation() {
    for (name, case) in CASES {
        let w = case();
        assert_eq!(w.instances, INSTANCES, "{name}");
        assert!(w.rel < TOL, "{name}: relative error {:e} at instance {}", w.rel, w.instance);
    }
}

#[test]
fn raw_similarity_curve_matches_brute_force() {
    let cfg = SystemConfig::default();
    let scene = Scene::generate(Area::default(), 50, 3).unwrap();
    let pilot = PilotMatrix::generate(&cfg, 3);
    let sizes = DatasetSizes {
        contrastive: 50,
        downstream: 1,
        test: 1,
    };
    let data = build_datasets(&scene, &cfg, &pilot, sizes, 20.0, 3).unwrap().contrastive;
    let curve_cfg = CurveConfig {
        max_pairs_per_bin: usize::MAX,
        ..CurveConfig::default()
    };
    let curve = similarity_curve(&data, SimilarityMode::Raw, &curve_cfg).unwrap();

    let n = data.len();
    let mut binned: Vec<Vec<f64>> = vec![Vec::new(); curve_cfg.bins.len()];
    for i in 0..n {
        for j in 0..n {
            if i >= j {
                continue;
            }
            let (a, b) = (data.positions[i], data.positions[j]);
            let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            let Some(bin) = curve_cfg.bins.iter().position(|r| r[0] <= d && d < r[1]) else {
                continue;
            };
            let (yi, yj) = (data.y_real(i), data.y_real(j));
            let dist = yi.iter().zip(&yj).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            binned[bin].push(1.0 / dist);
        }
    }
    let all: Vec<f64> = binned.concat();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / all.len() as f64;
    for (b, got) in curve.iter().enumerate() {
        assert_eq!(got.pairs, binned[b].len(), "bin {b}");
        match got.mean {
            None => assert!(binned[b].is_empty()),
            Some(v) => {
                let want = binned[b].iter().map(|x| (x - mean) / var.sqrt()).sum::<f64>() / binned[b].len() as f64;
                assert!((v - want).abs() <= 1e-10 * want.abs().max(1.0), "bin {b}: {v} vs {want}");
            }
        }
    }
}
