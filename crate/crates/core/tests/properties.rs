use proptest::prelude::*;

use muce_core::adaptive_pipeline::{group_users, nmse};
use muce_core::baselines::{jomp, location_based_ce, single_user_ce, single_user_apply, LabeledView};
use muce_core::channel_sim::SystemConfig;
use muce_core::clnet::{
    contrastive_loss, csi_similarity, nu, pair_similarity, ClnetArch, ClnetModel, ContrastiveBatch,
};
use muce_core::dnet::{
    cluster_training_data, dsnet_forward, joint_objective, mse_loss, nu_inv, DsnetArch, DsnetModel, GroupOrder,
    GroupedSet,
};
use muce_core::numerics::rng::{index, stream, unit_f64};
use muce_core::numerics::{Graph, Schedule};
use muce_core::Complex64;

fn vec_pair(m: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    m.prop_flat_map(|m| (prop::collection::vec(-2.0f64..2.0, m), prop::collection::vec(-2.0f64..2.0, m)))
}

fn cplx(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| Complex64::new(a, b)), n)
}

proptest! {
    #[test]
    fn gamma_is_symmetric_and_positive((a, b) in vec_pair(1..40)) {
        let (g1, g2) = (csi_similarity(&a, &b), csi_similarity(&b, &a));
        prop_assert_eq!(g1, g2);
        prop_assert!(g1 > 0.0);
    }

    #[test]
    fn pair_similarity_scale_law((a, b) in vec_pair(1..40), c in 0.1f64..10.0, tau in 0.5f64..5.0) {
        let ca: Vec<f64> = a.iter().map(|x| c * x).collect();
        let s1 = pair_similarity(&ca, &b, c * tau);
        let s0 = pair_similarity(&a, &b, tau);
        prop_assert!((s1 - s0).abs() <= 1e-12 * s0.max(1.0) * 10.0, "{} vs {}", s1, s0);
    }

    #[test]
    fn contrastive_loss_is_positive(
        rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 5..12),
        tau in 0.1f64..2.0,
        n_pos in 1usize..3,
    ) {
        let n = rows.len();
        let b = ContrastiveBatch {
            anchor: 0,
            positives: (1..1 + n_pos).collect(),
            negatives: (1 + n_pos..n).collect(),
        };
        prop_assert!(contrastive_loss(&rows, &[b], tau).unwrap() > 0.0);
    }

    #[test]
    fn single_positive_loss_falls_as_similarity_rises(
        neg in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..6),
        t0 in -1.0f64..0.9,
        dt in 0.01f64..0.1,
    ) {
        // anchor e1, positive at cosine t against it with unit norm
        let at = |t: f64| {
            let mut rows = vec![vec![1.0, 0.0, 0.0], vec![t, (1.0 - t * t).max(0.0).sqrt(), 0.0]];
            rows.extend(neg.iter().cloned());
            rows
        };
        let b = ContrastiveBatch { anchor: 0, positives: vec![1], negatives: (2..2 + neg.len()).collect() };
        let l0 = contrastive_loss(&at(t0), std::slice::from_ref(&b), 0.5).unwrap();
        let l1 = contrastive_loss(&at((t0 + dt).min(1.0)), &[b], 0.5).unwrap();
        prop_assert!(l1 < l0, "{} !< {}", l1, l0);
    }

    #[test]
    fn nu_is_a_bijection(z in cplx(56), x in prop::collection::vec(-5.0f64..5.0, 0..40)) {
        prop_assert_eq!(nu_inv(&nu(&z)).unwrap(), z);
        let x = if x.len() % 2 == 1 { x[1..].to_vec() } else { x };
        prop_assert_eq!(nu(&nu_inv(&x).unwrap()), x);
    }

    #[test]
    fn mse_is_zero_exactly_on_equality(h in cplx(8), i in 0usize..8, d in prop::sample::select(vec![0.0, 1e-12, 1e-8, 0.5])) {
        let truth = vec![vec![h.clone()]];
        prop_assert_eq!(mse_loss(&truth, &truth).unwrap(), 0.0);
        let mut e = h.clone();
        e[i] += Complex64::new(d, 0.0);
        let v = mse_loss(&truth, &[vec![e]]).unwrap();
        prop_assert!(v >= 0.0);
        prop_assert_eq!(v == 0.0, d == 0.0);
    }

    #[test]
    fn nmse_ignores_per_pair_scaling(
        pairs in prop::collection::vec((cplx(6), cplx(6), 0.1f64..10.0, 0.0f64..6.3), 1..8),
    ) {
        let truth: Vec<_> = pairs.iter().map(|p| p.0.clone()).collect();
        let est: Vec<_> = pairs.iter().map(|p| p.1.clone()).collect();
        let scale = |v: &[Complex64], c: Complex64| v.iter().map(|z| z * c).collect::<Vec<_>>();
        let st: Vec<_> = pairs.iter().map(|p| scale(&p.0, Complex64::from_polar(p.2, p.3))).collect();
        let se: Vec<_> = pairs.iter().map(|p| scale(&p.1, Complex64::from_polar(p.2, p.3))).collect();
        let (a, b) = (nmse(&truth, &est).unwrap().linear, nmse(&st, &se).unwrap().linear);
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300), "{} vs {}", a, b);
    }

    #[test]
    fn user_grouping_is_a_partition(
        feats in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 1..9),
        q in 1usize..5,
        floor in prop::sample::select(vec![0.0, 0.5, 2.0, f64::INFINITY]),
        balanced in any::<bool>(),
    ) {
        let order = if balanced { GroupOrder::SmallestFirst } else { GroupOrder::LargestFirst };
        let g = group_users(&feats, q, floor, order);
        prop_assert!(g.is_valid_partition(feats.len(), q), "{:?}", g.groups);
        prop_assert_eq!(g.groups.len(), g.min_gamma.len());
    }
}

fn best_pairing(g: &[Vec<f64>], free: &mut Vec<usize>) -> f64 {
    if free.is_empty() {
        return 0.0;
    }
    let a = free.remove(0);
    let mut best = f64::NEG_INFINITY;
    for k in 0..free.len() {
        let b = free.remove(k);
        best = best.max(g[a][b] + best_pairing(g, free));
        free.insert(k, b);
    }
    free.insert(0, a);
    best
}

/// With `q = 2` the grouping is greedy max-weight matching, which is within a
/// factor 2 of the best pairing on every instance and within 10% on average.
#[test]
fn greedy_pairing_is_near_optimal() {
    const INSTANCES: u64 = 200;
    let mut mean = 0.0;
    for seed in 0..INSTANCES {
        let mut rng = stream(seed, "test/pairing", 0);
        let n = 2 * (1 + index(&mut rng, 4));
        let feats: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| unit_f64(&mut rng)).collect()).collect();
        let g: Vec<Vec<f64>> = feats
            .iter()
            .map(|a| feats.iter().map(|b| csi_similarity(a, b)).collect())
            .collect();
        let groups = cluster_training_data(&feats, 2, 0.0).unwrap();
        let greedy: f64 = groups.iter().map(|c| g[c.members[0]][c.members[1]]).sum();
        let opt = best_pairing(&g, &mut (0..n).collect());
        assert!(greedy <= opt * (1.0 + 1e-12) && greedy >= 0.5 * opt, "seed {seed}: greedy {greedy} vs optimal {opt}");
        mean += greedy / opt / INSTANCES as f64;
    }
    assert!(mean >= 0.9, "mean greedy/optimal ratio {mean}");
}

#[test]
fn greedy_pairing_takes_the_closest_pair_first() {
    // the best pairing is {0,1},{2,3} (total 8); greedy commits to {0,2} first
    let feats = vec![vec![0.0], vec![-0.25], vec![0.2], vec![0.45]];
    let mut g: Vec<Vec<usize>> = cluster_training_data(&feats, 2, 0.0).unwrap().into_iter().map(|c| c.members).collect();
    g.sort();
    assert_eq!(g, vec![vec![0, 2], vec![1, 3]]);
}

#[test]
fn close_pairs_group_together() {
    let feats = vec![vec![0.0], vec![0.1], vec![10.0], vec![10.1]];
    let mut g = group_users(&feats, 2, 0.0, GroupOrder::LargestFirst).groups;
    g.sort();
    assert_eq!(g, vec![vec![0, 1], vec![2, 3]]);
}

#[test]
fn joint_objective_without_similarity_is_cascade_mse() {
    let system = SystemConfig {
        n_tx: 6,
        pilot_len: 5,
        ..SystemConfig::default()
    };
    for seed in 0..10u64 {
        let mut rng = stream(seed, "test/joint-mse", 0);
        let q = 1 + index(&mut rng, 3);
        let clnet = ClnetModel::init(ClnetArch::for_system(&system, 16), seed).unwrap();
        let dsnet = DsnetModel::init(DsnetArch::for_features(&system, clnet.arch.m, q), seed).unwrap();
        let n_groups = 1 + index(&mut rng, 4);
        let inputs: Vec<Vec<f64>> = (0..n_groups * q)
            .map(|_| (0..system.input_len()).map(|_| 2.0 * unit_f64(&mut rng) - 1.0).collect())
            .collect();
        let channels: Vec<Vec<Complex64>> = (0..n_groups * q)
            .map(|_| (0..system.channel_len()).map(|_| Complex64::new(unit_f64(&mut rng), unit_f64(&mut rng))).collect())
            .collect();
        let groups: Vec<Vec<usize>> = (0..n_groups).map(|t| (t * q..(t + 1) * q).collect()).collect();
        let set = GroupedSet {
            inputs: &inputs,
            channels: &channels,
            groups: groups.clone(),
        };
        let mut g = Graph::new();
        let cv = g.bind(&clnet.params);
        let dv = g.bind(&dsnet.params);
        let loss = joint_objective(&mut g, &clnet, &cv, &dsnet, &dv, &set, &groups, 0.0, 0.1).unwrap();
        let got = g.value(loss).data()[0];

        let mut truth = Vec::new();
        let mut est = Vec::new();
        for grp in &groups {
            let feats: Vec<Vec<f64>> = grp.iter().map(|&i| clnet.extract_features(&inputs[i]).unwrap().r).collect();
            est.push(dsnet_forward(&dsnet, &feats).unwrap());
            truth.push(grp.iter().map(|&i| channels[i].clone()).collect::<Vec<_>>());
        }
        let want = mse_loss(&truth, &est).unwrap();
        assert!((got - want).abs() <= 1e-12 * want, "seed {seed}: {got} vs {want}");
    }
}

fn random_problem(seed: u64) -> (Vec<Vec<Complex64>>, Vec<Vec<Complex64>>) {
    let mut rng = stream(seed, "test/omp", 0);
    let (g, l, k) = (8 + index(&mut rng, 24), 4 + index(&mut rng, 12), 1 + index(&mut rng, 5));
    let mut c = || Complex64::new(2.0 * unit_f64(&mut rng) - 1.0, 2.0 * unit_f64(&mut rng) - 1.0);
    let phi = (0..g).map(|_| (0..l).map(|_| c()).collect()).collect();
    let ys = (0..k).map(|_| (0..l).map(|_| c()).collect()).collect();
    (phi, ys)
}

#[test]
fn jomp_support_and_residual_invariants() {
    for seed in 0..100u64 {
        let (phi, ys) = random_problem(seed);
        let s = 1 + (seed as usize % phi[0].len());
        let rec = jomp(&phi, &ys, s, 0.0).unwrap();
        let mut sorted = rec.support.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), rec.support.len(), "seed {seed}: repeated atom");
        assert_eq!(rec.residual_norms.len(), rec.support.len() + 1, "seed {seed}");
        for w in rec.residual_norms.windows(2) {
            for (a, b) in w[0].iter().zip(&w[1]) {
                assert!(b <= &(a * (1.0 + 1e-12)), "seed {seed}: residual grew {a} -> {b}");
            }
        }
        // least squares leaves a residual orthogonal to every selected atom
        for (y, x) in ys.iter().zip(&rec.coefficients) {
            let mut r = y.clone();
            for (gi, col) in phi.iter().enumerate() {
                for (ri, a) in r.iter_mut().zip(col) {
                    *ri -= a * x[gi];
                }
            }
            let ynorm = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            for &gi in &rec.support {
                let ip: Complex64 = phi[gi].iter().zip(&r).map(|(a, b)| a.conj() * b).sum();
                assert!(ip.norm() <= 1e-9 * ynorm, "seed {seed}: residual not orthogonal ({})", ip.norm());
            }
            for gi in (0..phi.len()).filter(|g| !rec.support.contains(g)) {
                assert_eq!(x[gi], Complex64::new(0.0, 0.0));
            }
        }
    }
}

#[test]
fn location_based_with_unit_groups_is_single_user() {
    let system = SystemConfig {
        n_tx: 8,
        pilot_len: 6,
        ..SystemConfig::default()
    };
    let mut rng = stream(1, "test/loc1", 0);
    let n = 40;
    let positions: Vec<[f64; 2]> = (0..n).map(|_| [100.0 * unit_f64(&mut rng), 100.0 * unit_f64(&mut rng)]).collect();
    let inputs: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..system.input_len()).map(|_| unit_f64(&mut rng)).collect())
        .collect();
    let channels: Vec<Vec<Complex64>> = (0..n)
        .map(|_| (0..system.channel_len()).map(|_| Complex64::new(unit_f64(&mut rng), 0.0)).collect())
        .collect();
    let view = |r: std::ops::Range<usize>| LabeledView {
        positions: &positions[r.clone()],
        inputs: &inputs[r.clone()],
        channels: &channels[r],
    };
    let schedule = Schedule::new(3, 8);
    let single = single_user_ce(&system, view(0..32), Some(view(32..40)), &schedule, 5).unwrap();
    let (loc, _) = location_based_ce(&system, view(0..32), Some(view(32..40)), 1, &schedule, 5).unwrap();
    let net = loc.nets[0].as_ref().unwrap();
    assert_eq!(net, &single.model);
    let a = single_user_apply(&single.model, &inputs[32..37]).unwrap();
    let b = loc.apply(&positions[32..37], &inputs[32..37]).unwrap();
    assert_eq!(a.estimates(), b.estimates());
}
