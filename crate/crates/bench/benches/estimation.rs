use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use muce_core::adaptive_pipeline::{estimate_multi_user, group_users, ProposedModel};
use muce_core::baselines::{jomp_estimate, AngularDictionary, JompConfig};
use muce_core::channel_sim::{channel_at, measure, Area, PilotMatrix, Scene, SystemConfig};
use muce_core::clnet::{nu, ClnetArch, ClnetModel};
use muce_core::dnet::{dsnet_forward, DsnetArch, DsnetModel, GroupOrder};
use muce_core::numerics::rng::{stream, unit_f64};

const K: usize = 5;
const Q: usize = 3;

struct Fixture {
    system: SystemConfig,
    pilot: PilotMatrix,
    scene: Scene,
    inputs: Vec<Vec<f64>>,
    measurements: Vec<Vec<muce_core::Complex64>>,
    model: ProposedModel,
}

fn fixture() -> Fixture {
    let system = SystemConfig::default();
    let pilot = PilotMatrix::generate(&system, 1);
    let scene = Scene::generate(Area::default(), 50, 1).unwrap();
    let mut rng = stream(1, "bench", 0);
    let mut inputs = Vec::new();
    let mut measurements = Vec::new();
    for _ in 0..K {
        let p = scene.area.at(unit_f64(&mut rng), unit_f64(&mut rng));
        let ch = channel_at(&scene, &system, p).unwrap();
        let m = measure(&ch, &system, &pilot, 20.0, &mut rng).unwrap();
        inputs.push(nu(&m.y));
        measurements.push(m.y);
    }
    let clnet = ClnetModel::init(ClnetArch::for_system(&system, 256), 1).unwrap();
    let dsnets = (1..=Q)
        .map(|q| DsnetModel::init(DsnetArch::for_features(&system, clnet.arch.m, q), q as u64).unwrap())
        .collect();
    let model = ProposedModel {
        clnet,
        dsnets,
        floor: 0.0,
        order: GroupOrder::SmallestFirst,
    };
    Fixture {
        system,
        pilot,
        scene,
        inputs,
        measurements,
        model,
    }
}

fn benches(c: &mut Criterion) {
    let f = fixture();
    let feats: Vec<Vec<f64>> = f.inputs.iter().map(|y| f.model.clnet.extract_features(y).unwrap().r).collect();

    c.bench_function("channel_at", |b| {
        b.iter(|| channel_at(&f.scene, &f.system, black_box([40.0, 60.0])).unwrap())
    });
    c.bench_function("clnet_features", |b| {
        b.iter(|| f.model.clnet.extract_features(black_box(&f.inputs[0])).unwrap())
    });
    c.bench_function("group_users_k5", |b| {
        b.iter(|| group_users(black_box(&feats), Q, 0.0, GroupOrder::SmallestFirst))
    });
    c.bench_function("dsnet_forward_q3", |b| {
        b.iter(|| dsnet_forward(&f.model.dsnets[Q - 1], black_box(&feats[..Q])).unwrap())
    });
    c.bench_function("estimate_multi_user_k5", |b| {
        b.iter(|| estimate_multi_user(&f.model, black_box(&f.inputs)).unwrap())
    });
    let dict = AngularDictionary::new(f.system.n_tx, 64).unwrap();
    let jc = JompConfig::default();
    c.bench_function("jomp_k5", |b| {
        b.iter(|| jomp_estimate(&f.system, &f.pilot, &dict, black_box(&f.measurements), &jc).unwrap())
    });
}

criterion_group!(estimation, benches);
criterion_main!(estimation);
