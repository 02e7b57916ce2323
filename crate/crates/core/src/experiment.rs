//! End-to-end experiment plumbing shared by the command-line tool, the
//! benchmarks and the acceptance tests: configuration, dataset
//! preparation, training of every method and scoring on a test split.

use num_complex::Complex64;

use crate::adaptive_pipeline::{estimate_multi_user, nmse, Nmse, ProposedModel};
use crate::baselines::{
    jomp_estimate, location_based_ce, single_user_apply, single_user_ce, AngularDictionary, JompConfig,
    LabeledView, LocationModel,
};
use crate::channel_sim::{build_datasets, pilot_seed, Area, Dataset, DatasetSizes, Datasets, PilotMatrix, Scene, SystemConfig};
use crate::clnet::{train_clnet, ClnetArch, ClnetModel, ClnetTraining, ContrastiveConfig, CurveConfig};
use crate::dnet::{
    cluster_training_data, train_dsnet, train_joint, DsnetArch, DsnetModel, DsnetTraining, GroupOrder, GroupedSet,
    JointConfig, JointTraining,
};
use crate::error::{Error, Result};
use crate::numerics::{AdamConfig, Schedule};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub area: Area,
    pub n_scatterers: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            area: Area::default(),
            n_scatterers: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClnetTrainConfig {
    pub hidden: usize,
    pub epochs: usize,
    #[serde(default)]
    pub adam: AdamConfig,
}

/// Schedules and grouping settings of the downstream stage.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DownstreamConfig {
    pub q_max: usize,
    pub dsnet: Schedule,
    pub joint: Schedule,
    pub alpha: f64,
    /// Share of the labeled split held out for checkpoint selection.
    pub val_fraction: f64,
    pub order: GroupOrder,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub schedule: Schedule,
    pub location_q: usize,
    pub jomp: JompConfig,
}

/// Evaluation axes.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub snr_db: Vec<f64>,
    pub pilot_len: Vec<usize>,
    pub labels: Vec<usize>,
    /// Cell edge of the position grid, meters.
    pub position_cell: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Root of every artifact written for this experiment.
    pub output_dir: std::path::PathBuf,
    pub snr_db: f64,
    /// Users estimated together at test time.
    pub k_users: usize,
    pub scene: SceneConfig,
    pub system: SystemConfig,
    pub sizes: DatasetSizes,
    pub contrastive: ContrastiveConfig,
    pub clnet: ClnetTrainConfig,
    pub downstream: DownstreamConfig,
    pub baselines: BaselineConfig,
    pub sweep: SweepConfig,
    pub curve: CurveConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let system = SystemConfig::default();
        ExperimentConfig {
            seed: 0,
            output_dir: "runs/default".into(),
            snr_db: 20.0,
            k_users: 5,
            scene: SceneConfig::default(),
            contrastive: ContrastiveConfig::for_system(&system),
            system,
            sizes: DatasetSizes::default(),
            clnet: ClnetTrainConfig {
                hidden: 256,
                epochs: 40,
                adam: AdamConfig::default(),
            },
            downstream: DownstreamConfig {
                q_max: 3,
                dsnet: Schedule::new(30, 16),
                joint: Schedule::new(10, 16),
                alpha: 0.8,
                val_fraction: 0.1,
                order: GroupOrder::LargestFirst,
            },
            baselines: BaselineConfig {
                schedule: Schedule::new(30, 16),
                location_q: 3,
                jomp: JompConfig::default(),
            },
            sweep: SweepConfig {
                snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
                pilot_len: vec![8, 16, 24, 32],
                labels: vec![250, 500, 1000, 1500],
                position_cell: 20.0,
            },
            curve: CurveConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.contrastive.validate()?;
        if self.contrastive.m != 2 * self.system.channel_len() {
            return Err(Error::Config(format!(
                "feature dimension m = {} must equal 2·N_r·N_t·N_c = {}",
                self.contrastive.m,
                2 * self.system.channel_len()
            )));
        }
        if self.k_users == 0 || self.downstream.q_max == 0 || self.baselines.location_q == 0 {
            return Err(Error::Config("K, Q and the location group size must be >= 1".into()));
        }
        if self.clnet.hidden == 0 || self.scene.n_scatterers == 0 {
            return Err(Error::Config("hidden width and scatterer count must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.downstream.val_fraction) {
            return Err(Error::Config("val_fraction must lie in [0, 1)".into()));
        }
        JointConfig { alpha: self.downstream.alpha }.validate()?;
        self.clnet.adam.validate()?;
        self.downstream.dsnet.validate()?;
        self.downstream.joint.validate()?;
        self.baselines.schedule.validate()?;
        if self.sweep.labels.iter().any(|&n| n == 0) || self.sweep.pilot_len.iter().any(|&l| l == 0) {
            return Err(Error::Config("sweep label counts and pilot lengths must be >= 1".into()));
        }
        if !(self.sweep.position_cell > 0.0) {
            return Err(Error::Config("position_cell must be positive".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Copy with a different pilot length (and matching feature settings).
    pub fn with_pilot_len(&self, l: usize) -> Self {
        let mut c = self.clone();
        c.system.pilot_len = l;
        c
    }

    pub fn clnet_arch(&self) -> ClnetArch {
        ClnetArch::for_system(&self.system, self.clnet.hidden)
    }
}

/// Scene, pilot and the three splits of an experiment.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scene: Scene,
    pub pilot: PilotMatrix,
    pub data: Datasets,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let scene = Scene::generate(cfg.scene.area, cfg.scene.n_scatterers, cfg.seed)?;
    let pilot = PilotMatrix::generate(&cfg.system, pilot_seed(cfg.seed));
    let data = build_datasets(&scene, &cfg.system, &pilot, cfg.sizes, cfg.snr_db, cfg.seed)?;
    Ok(Prepared { scene, pilot, data })
}

pub fn pretrain_clnet(cfg: &ExperimentConfig, data: &Dataset) -> Result<ClnetTraining> {
    train_clnet(
        data,
        cfg.clnet_arch(),
        &cfg.contrastive,
        cfg.clnet.epochs,
        cfg.clnet.adam,
        cfg.seed,
    )
}

/// Raw `ν(y)` rows, channels and positions of a labeled dataset.
#[derive(Debug, Clone)]
pub struct Labeled {
    pub positions: Vec<[f64; 2]>,
    pub inputs: Vec<Vec<f64>>,
    pub channels: Vec<Vec<Complex64>>,
}

impl Labeled {
    pub fn from_dataset(d: &Dataset) -> Result<Self> {
        Ok(Labeled {
            positions: d.positions.clone(),
            inputs: (0..d.len()).map(|i| d.y_real(i)).collect(),
            channels: d.require_channels()?.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn view(&self) -> LabeledView<'_> {
        LabeledView {
            positions: &self.positions,
            inputs: &self.inputs,
            channels: &self.channels,
        }
    }

    pub fn head(&self, n: usize) -> Labeled {
        let n = n.min(self.len());
        Labeled {
            positions: self.positions[..n].to_vec(),
            inputs: self.inputs[..n].to_vec(),
            channels: self.channels[..n].to_vec(),
        }
    }

    /// First `n_labels` samples split into training and validation parts;
    /// the last `round(val_fraction · n)` samples validate.
    pub fn split(&self, n_labels: usize, val_fraction: f64) -> (Labeled, Option<Labeled>) {
        let all = self.head(n_labels);
        let n_val = (val_fraction * all.len() as f64).round() as usize;
        if n_val == 0 || n_val >= all.len() {
            return (all, None);
        }
        let cut = all.len() - n_val;
        let tail = Labeled {
            positions: all.positions[cut..].to_vec(),
            inputs: all.inputs[cut..].to_vec(),
            channels: all.channels[cut..].to_vec(),
        };
        (all.head(cut), Some(tail))
    }
}

fn features(clnet: &ClnetModel, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let w = clnet.arch.input_len;
    let x = crate::numerics::Tensor::new(vec![inputs.len(), w], inputs.concat())?;
    let f = clnet.extract_batch(&x)?;
    Ok((0..inputs.len()).map(|i| f.row(i).to_vec()).collect())
}

fn groups_of(features: &[Vec<f64>], q: usize) -> Result<Vec<Vec<usize>>> {
    if features.len() < q {
        return Ok(Vec::new());
    }
    Ok(cluster_training_data(features, q, 0.0)?
        .into_iter()
        .filter(|g| g.len() == q)
        .map(|g| g.members)
        .collect())
}

/// Median of the smallest intra-group `γ` over the size-`q` clusters.
pub fn similarity_floor(features: &[Vec<f64>], q: usize) -> Result<f64> {
    if q < 2 || features.len() < q {
        return Ok(0.0);
    }
    let mut v: Vec<f64> = cluster_training_data(features, q, 0.0)?
        .into_iter()
        .filter(|g| g.len() == q)
        .map(|g| g.min_gamma)
        .collect();
    if v.is_empty() {
        return Ok(0.0);
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Trains DSNet-q on frozen features of the labeled split.
pub fn train_separate_dsnet(
    cfg: &ExperimentConfig,
    clnet: &ClnetModel,
    labeled: &Labeled,
    q: usize,
) -> Result<DsnetTraining> {
    let (train, val) = labeled.split(labeled.len(), cfg.downstream.val_fraction);
    let ft = features(clnet, &train.inputs)?;
    let t = GroupedSet {
        inputs: &ft,
        channels: &train.channels,
        groups: groups_of(&ft, q)?,
    };
    let fv = match &val {
        Some(v) => features(clnet, &v.inputs)?,
        None => Vec::new(),
    };
    let vset = val.as_ref().and_then(|v| {
        let groups = groups_of(&fv, q).ok()?;
        (!groups.is_empty()).then_some(GroupedSet {
            inputs: &fv,
            channels: &v.channels,
            groups,
        })
    });
    let arch = DsnetArch::for_features(&cfg.system, clnet.arch.m, q);
    train_dsnet(arch, &t, vset.as_ref(), &cfg.downstream.dsnet, cfg.seed)
}

/// Test-time floor for a feature network: the median smallest `γ` of its
/// size-`Q` clusters on the training part of the labeled split.
pub fn labeled_floor(cfg: &ExperimentConfig, clnet: &ClnetModel, labeled: &Labeled) -> Result<f64> {
    let (train, _) = labeled.split(labeled.len(), cfg.downstream.val_fraction);
    similarity_floor(&features(clnet, &train.inputs)?, cfg.downstream.q_max)
}

/// Outcome of the joint stage.
#[derive(Debug, Clone)]
pub struct JointStage {
    pub model: ProposedModel,
    pub run: JointTraining,
    pub retrain_runs: Vec<DsnetTraining>,
}

/// Joint training of the feature network with DSNet-Q, then DSNet-1..Q−1
/// retrained from scratch on the refined features.
pub fn train_joint_stage(
    cfg: &ExperimentConfig,
    clnet: &ClnetModel,
    dsnet_q: &DsnetModel,
    labeled: &Labeled,
) -> Result<JointStage> {
    let q_max = cfg.downstream.q_max;
    if dsnet_q.arch.q != q_max {
        return Err(Error::Config(format!(
            "joint stage needs DSNet-{q_max}, got DSNet-{}",
            dsnet_q.arch.q
        )));
    }
    let (train, val) = labeled.split(labeled.len(), cfg.downstream.val_fraction);
    let tset = GroupedSet {
        inputs: &train.inputs,
        channels: &train.channels,
        groups: groups_of(&features(clnet, &train.inputs)?, q_max)?,
    };
    let vgroups = match &val {
        Some(v) => groups_of(&features(clnet, &v.inputs)?, q_max)?,
        None => Vec::new(),
    };
    let vset = val.as_ref().filter(|_| !vgroups.is_empty()).map(|v| GroupedSet {
        inputs: &v.inputs,
        channels: &v.channels,
        groups: vgroups.clone(),
    });
    let run = train_joint(
        clnet,
        dsnet_q,
        &tset,
        vset.as_ref(),
        JointConfig { alpha: cfg.downstream.alpha },
        cfg.contrastive.tau,
        &cfg.downstream.joint,
        cfg.seed,
    )?;
    let refined = run.clnet.clone();
    let retrain_runs = (1..q_max)
        .map(|q| train_separate_dsnet(cfg, &refined, labeled, q))
        .collect::<Result<Vec<_>>>()?;
    let mut dsnets: Vec<DsnetModel> = retrain_runs.iter().map(|r| r.model.clone()).collect();
    dsnets.push(run.dsnet.clone());
    let model = ProposedModel {
        floor: labeled_floor(cfg, &refined, labeled)?,
        clnet: refined,
        dsnets,
        order: cfg.downstream.order,
    };
    Ok(JointStage {
        model,
        run,
        retrain_runs,
    })
}

/// The proposed scheme before and after joint refinement.
#[derive(Debug, Clone)]
pub struct ProposedTraining {
    pub separate: ProposedModel,
    pub separate_runs: Vec<DsnetTraining>,
    pub joint: JointStage,
}

pub fn train_proposed(cfg: &ExperimentConfig, clnet: &ClnetModel, labeled: &Labeled) -> Result<ProposedTraining> {
    let q_max = cfg.downstream.q_max;
    let separate_runs = (1..=q_max)
        .map(|q| train_separate_dsnet(cfg, clnet, labeled, q))
        .collect::<Result<Vec<_>>>()?;
    let separate = ProposedModel {
        clnet: clnet.clone(),
        dsnets: separate_runs.iter().map(|r| r.model.clone()).collect(),
        floor: labeled_floor(cfg, clnet, labeled)?,
        order: cfg.downstream.order,
    };
    let joint = train_joint_stage(cfg, clnet, &separate.dsnets[q_max - 1], labeled)?;
    Ok(ProposedTraining {
        separate,
        separate_runs,
        joint,
    })
}

/// Trained comparison models.
#[derive(Debug, Clone)]
pub struct BaselineModels {
    pub single: DsnetModel,
    pub location: LocationModel,
}

pub fn train_baselines(cfg: &ExperimentConfig, labeled: &Labeled) -> Result<BaselineModels> {
    let (train, val) = labeled.split(labeled.len(), cfg.downstream.val_fraction);
    let single = single_user_ce(
        &cfg.system,
        train.view(),
        val.as_ref().map(|v| v.view()),
        &cfg.baselines.schedule,
        cfg.seed,
    )?
    .model;
    let (location, _) = location_based_ce(
        &cfg.system,
        train.view(),
        val.as_ref().map(|v| v.view()),
        cfg.baselines.location_q,
        &cfg.baselines.schedule,
        cfg.seed,
    )?;
    Ok(BaselineModels { single, location })
}

/// Method names in reporting order.
pub const METHODS: [&str; 5] = ["proposed-joint", "proposed-separate", "single-user", "location-based", "jomp"];

/// Models available for scoring; absent entries are skipped.
#[derive(Debug, Clone, Copy, Default)]
pub struct MethodSet<'a> {
    pub joint: Option<&'a ProposedModel>,
    pub separate: Option<&'a ProposedModel>,
    pub single: Option<&'a DsnetModel>,
    pub location: Option<&'a LocationModel>,
    pub jomp: Option<(&'a PilotMatrix, &'a JompConfig)>,
}

/// Per-user estimates of every available method on `test`, with users taken
/// `K` at a time in dataset order.
pub fn estimate_all(
    cfg: &ExperimentConfig,
    methods: &MethodSet,
    test: &Labeled,
) -> Result<Vec<(String, Vec<Vec<Complex64>>)>> {
    let k = cfg.k_users;
    let mut out: Vec<(String, Vec<Vec<Complex64>>)> = Vec::new();
    let dict = match methods.jomp {
        Some((_, jc)) => Some(AngularDictionary::new(cfg.system.n_tx, jc.grid_size(cfg.system.n_tx))?),
        None => None,
    };
    for name in METHODS {
        let mut est = Vec::with_capacity(test.len());
        let mut present = true;
        for start in (0..test.len()).step_by(k) {
            let end = (start + k).min(test.len());
            let inputs = &test.inputs[start..end];
            let positions = &test.positions[start..end];
            let chunk = match name {
                "proposed-joint" | "proposed-separate" => {
                    let model = if name == "proposed-joint" { methods.joint } else { methods.separate };
                    match model {
                        Some(m) => estimate_multi_user(m, inputs)?.estimates(),
                        None => {
                            present = false;
                            break;
                        }
                    }
                }
                "single-user" => match methods.single {
                    Some(m) => single_user_apply(m, inputs)?.estimates(),
                    None => {
                        present = false;
                        break;
                    }
                },
                "location-based" => match methods.location {
                    Some(m) => m.apply(positions, inputs)?.estimates(),
                    None => {
                        present = false;
                        break;
                    }
                },
                _ => match (methods.jomp, &dict) {
                    (Some((pilot, jc)), Some(d)) => {
                        let ys: Vec<Vec<Complex64>> = inputs
                            .iter()
                            .map(|r| crate::dnet::nu_inv(r))
                            .collect::<Result<_>>()?;
                        jomp_estimate(&cfg.system, pilot, d, &ys, jc)?.0
                    }
                    _ => {
                        present = false;
                        break;
                    }
                },
            };
            est.extend(chunk);
        }
        if present {
            out.push((name.to_string(), est));
        }
    }
    Ok(out)
}

/// NMSE of every available method on `test`.
pub fn evaluate(cfg: &ExperimentConfig, methods: &MethodSet, test: &Labeled) -> Result<Vec<(String, Nmse)>> {
    estimate_all(cfg, methods, test)?
        .into_iter()
        .map(|(name, est)| Ok((name, nmse(&test.channels, &est)?)))
        .collect()
}
