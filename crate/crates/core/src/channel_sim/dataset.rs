use std::path::Path;

use num_complex::Complex64;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::scene::{channel_at, ChannelSample, Scene};
use super::SystemConfig;
use crate::clnet::nu;
use crate::error::{Error, Result};
use crate::numerics::rng::{derive_seed, stream, unit_f64};
use crate::numerics::Tensor;
use crate::storage::{self, seed_string};

/// Pilot matrices `S_n ∈ C^{N_t × L}`, one per subcarrier, shared by every
/// user and sample of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotMatrix {
    pub n_tx: usize,
    pub pilot_len: usize,
    /// Row-major `N_t × L` matrix per subcarrier.
    pub per_subcarrier: Vec<Vec<Complex64>>,
    pub seed: u64,
}

impl PilotMatrix {
    /// i.i.d. unit-variance circular complex Gaussian entries.
    pub fn generate(config: &SystemConfig, seed: u64) -> PilotMatrix {
        let scale = std::f64::consts::FRAC_1_SQRT_2;
        let per_subcarrier = (0..config.n_sc)
            .map(|n| {
                let mut rng = stream(seed, "pilot", n as u64);
                (0..config.n_tx * config.pilot_len)
                    .map(|_| {
                        let re: f64 = StandardNormal.sample(&mut rng);
                        let im: f64 = StandardNormal.sample(&mut rng);
                        Complex64::new(re * scale, im * scale)
                    })
                    .collect()
            })
            .collect();
        PilotMatrix {
            n_tx: config.n_tx,
            pilot_len: config.pilot_len,
            per_subcarrier,
            seed,
        }
    }

    /// Identity pilot (requires `L == N_t`).
    pub fn identity(config: &SystemConfig) -> Result<PilotMatrix> {
        if config.pilot_len != config.n_tx {
            return Err(Error::Config("identity pilot needs L == N_t".into()));
        }
        let n = config.n_tx;
        let mut s = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            s[i * n + i] = Complex64::new(1.0, 0.0);
        }
        Ok(PilotMatrix {
            n_tx: n,
            pilot_len: n,
            per_subcarrier: vec![s; config.n_sc],
            seed: 0,
        })
    }

    pub fn entry(&self, n: usize, t: usize, l: usize) -> Complex64 {
        self.per_subcarrier[n][t * self.pilot_len + l]
    }
}

/// Received pilot block of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSample {
    pub position: [f64; 2],
    /// `vec(Y)` of the `N_r × (L·N_c)` received matrix (column-major).
    pub y: Vec<Complex64>,
    pub snr_db: f64,
    /// `ν(vec(Y))`.
    pub y_real: Vec<f64>,
}

/// Noise-free `vec(H·S)`.
fn noiseless(h: &[Complex64], config: &SystemConfig, pilot: &PilotMatrix) -> Vec<Complex64> {
    let (nr, nt, l) = (config.n_rx, config.n_tx, config.pilot_len);
    let mut y = vec![Complex64::new(0.0, 0.0); config.measurement_len()];
    for n in 0..config.n_sc {
        for li in 0..l {
            for r in 0..nr {
                let mut acc = Complex64::new(0.0, 0.0);
                for t in 0..nt {
                    acc += h[(n * nt + t) * nr + r] * pilot.entry(n, t, li);
                }
                y[(n * l + li) * nr + r] = acc;
            }
        }
    }
    y
}

/// `Y = H·S + N` with `σ² = ‖HS‖²_F / (N_r·L·N_c·10^(snr/10))`; an infinite
/// SNR gives `N = 0`.
pub fn measure<R: RngCore + ?Sized>(
    channel: &ChannelSample,
    config: &SystemConfig,
    pilot: &PilotMatrix,
    snr_db: f64,
    rng: &mut R,
) -> Result<MeasurementSample> {
    if channel.h.len() != config.channel_len()
        || pilot.n_tx != config.n_tx
        || pilot.pilot_len != config.pilot_len
        || pilot.per_subcarrier.len() != config.n_sc
    {
        return Err(Error::Dimension(format!(
            "measure: channel of length {} / pilot {}x{} x{} do not match {:?}",
            channel.h.len(),
            pilot.n_tx,
            pilot.pilot_len,
            pilot.per_subcarrier.len(),
            config
        )));
    }
    let mut y = noiseless(&channel.h, config, pilot);
    if snr_db.is_finite() || snr_db == f64::NEG_INFINITY {
        let power: f64 = y.iter().map(|z| z.norm_sqr()).sum();
        let sigma2 = power / (y.len() as f64 * 10f64.powf(snr_db / 10.0));
        let sd = (sigma2 / 2.0).sqrt();
        if sd > 0.0 {
            for z in y.iter_mut() {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                *z += Complex64::new(re * sd, im * sd);
            }
        }
    }
    let y_real = nu(&y);
    Ok(MeasurementSample {
        position: channel.position,
        y,
        snr_db,
        y_real,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Contrastive,
    Downstream,
    Test,
}

impl DatasetKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DatasetKind::Contrastive => "contrastive",
            DatasetKind::Downstream => "downstream",
            DatasetKind::Test => "test",
        }
    }

    fn has_channels(&self) -> bool {
        !matches!(self, DatasetKind::Contrastive)
    }
}

/// Sample counts of the three splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSizes {
    pub contrastive: usize,
    pub downstream: usize,
    pub test: usize,
}

impl Default for DatasetSizes {
    fn default() -> Self {
        DatasetSizes {
            contrastive: 4979,
            downstream: 1500,
            test: 500,
        }
    }
}

/// One persisted split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub kind: DatasetKind,
    pub system: SystemConfig,
    pub snr_db: f64,
    pub seed: u64,
    pub pilot_seed: u64,
    pub positions: Vec<[f64; 2]>,
    /// `vec(Y)` per sample.
    pub measurements: Vec<Vec<Complex64>>,
    /// `vec(H)` per sample; absent for the contrastive split.
    pub channels: Option<Vec<Vec<Complex64>>>,
}

#[derive(serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetMeta {
    format: String,
    version: u32,
    kind: DatasetKind,
    count: usize,
    measurement_len: usize,
    channel_len: usize,
    #[serde(with = "seed_string")]
    seed: u64,
    snr_db: f64,
    #[serde(with = "seed_string")]
    pilot_seed: u64,
    payload: String,
    payload_values: usize,
    order: Vec<String>,
    system: SystemConfig,
}

const DATASET_FORMAT: &str = "muce-dataset";

impl Dataset {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn y_real(&self, i: usize) -> Vec<f64> {
        nu(&self.measurements[i])
    }

    pub fn measurement(&self, i: usize) -> MeasurementSample {
        MeasurementSample {
            position: self.positions[i],
            y: self.measurements[i].clone(),
            snr_db: self.snr_db,
            y_real: self.y_real(i),
        }
    }

    pub fn channel(&self, i: usize) -> Option<&[Complex64]> {
        self.channels.as_ref().map(|c| c[i].as_slice())
    }

    pub fn require_channels(&self) -> Result<&[Vec<Complex64>]> {
        self.channels.as_deref().ok_or_else(|| {
            Error::Usage(format!("{} dataset carries no channel labels", self.kind.as_str()))
        })
    }

    /// Real-vectorized measurements of `indices` as a `[n, 2·N_r·L·N_c]` tensor.
    pub fn inputs(&self, indices: &[usize]) -> Tensor {
        let w = self.system.input_len();
        let mut data = Vec::with_capacity(indices.len() * w);
        for &i in indices {
            data.extend(nu(&self.measurements[i]));
        }
        Tensor::new(vec![indices.len(), w], data).expect("input shape")
    }

    /// First `n` samples.
    pub fn head(&self, n: usize) -> Dataset {
        self.select(&(0..n.min(self.len())).collect::<Vec<_>>())
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            positions: indices.iter().map(|&i| self.positions[i]).collect(),
            measurements: indices.iter().map(|&i| self.measurements[i].clone()).collect(),
            channels: self
                .channels
                .as_ref()
                .map(|c| indices.iter().map(|&i| c[i].clone()).collect()),
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> Dataset {
        Dataset {
            kind: self.kind,
            system: self.system.clone(),
            snr_db: self.snr_db,
            seed: self.seed,
            pilot_seed: self.pilot_seed,
            positions: Vec::new(),
            measurements: Vec::new(),
            channels: None,
        }
    }

    /// Payload byte count implied by the shapes.
    pub fn payload_bytes(&self) -> usize {
        let per = 2 + 2 * self.system.measurement_len()
            + if self.channels.is_some() { 2 * self.system.channel_len() } else { 0 };
        8 * per * self.len()
    }

    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        storage::ensure_dir(dir)?;
        let mut values = Vec::with_capacity(self.payload_bytes() / 8);
        for p in &self.positions {
            values.extend_from_slice(p);
        }
        for y in &self.measurements {
            values.extend(y.iter().flat_map(|z| [z.re, z.im]));
        }
        if let Some(chs) = &self.channels {
            for h in chs {
                values.extend(h.iter().flat_map(|z| [z.re, z.im]));
            }
        }
        let mut order = vec!["positions".to_string(), "measurements".to_string()];
        if self.channels.is_some() {
            order.push("channels".into());
        }
        let meta = DatasetMeta {
            format: DATASET_FORMAT.into(),
            version: 1,
            kind: self.kind,
            count: self.len(),
            measurement_len: self.system.measurement_len(),
            channel_len: if self.channels.is_some() { self.system.channel_len() } else { 0 },
            seed: self.seed,
            snr_db: self.snr_db,
            pilot_seed: self.pilot_seed,
            payload: format!("{stem}.bin"),
            payload_values: values.len(),
            order,
            system: self.system.clone(),
        };
        storage::write_payload(&storage::payload_path(dir, stem), &values)?;
        storage::write_meta(&storage::meta_path(dir, stem), &meta)
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Dataset> {
        let mpath = storage::meta_path(dir, stem);
        let meta: DatasetMeta = storage::read_meta(&mpath)?;
        if meta.format != DATASET_FORMAT || meta.version != 1 {
            return Err(Error::format(&mpath, format!("unsupported format {} v{}", meta.format, meta.version)));
        }
        let (ml, cl, n) = (meta.measurement_len, meta.channel_len, meta.count);
        if ml != meta.system.measurement_len() || (cl != 0 && cl != meta.system.channel_len()) {
            return Err(Error::format(&mpath, "shapes disagree with the system section"));
        }
        let expected = n * (2 + 2 * ml + 2 * cl);
        if meta.payload_values != expected {
            return Err(Error::format(&mpath, "payload_values disagrees with the shapes"));
        }
        let values = storage::read_payload(&dir.join(&meta.payload), expected)?;
        let positions = values[..2 * n].chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        let complex = |chunk: &[f64]| -> Vec<Complex64> {
            chunk.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect()
        };
        let mut off = 2 * n;
        let measurements = (0..n)
            .map(|i| complex(&values[off + i * 2 * ml..off + (i + 1) * 2 * ml]))
            .collect();
        off += n * 2 * ml;
        let channels = (cl > 0).then(|| {
            (0..n)
                .map(|i| complex(&values[off + i * 2 * cl..off + (i + 1) * 2 * cl]))
                .collect()
        });
        Ok(Dataset {
            kind: meta.kind,
            system: meta.system,
            snr_db: meta.snr_db,
            seed: meta.seed,
            pilot_seed: meta.pilot_seed,
            positions,
            measurements,
            channels,
        })
    }
}

/// The three splits of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Datasets {
    pub contrastive: Dataset,
    pub downstream: Dataset,
    pub test: Dataset,
}

impl Datasets {
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.contrastive.save(dir, "contrastive")?;
        self.downstream.save(dir, "downstream")?;
        self.test.save(dir, "test")
    }

    pub fn load(dir: &Path) -> Result<Datasets> {
        Ok(Datasets {
            contrastive: Dataset::load(dir, "contrastive")?,
            downstream: Dataset::load(dir, "downstream")?,
            test: Dataset::load(dir, "test")?,
        })
    }
}

fn noise_label(kind: DatasetKind, snr_db: f64) -> String {
    format!("noise/{}/{}", kind.as_str(), snr_db)
}

fn build_split(
    kind: DatasetKind,
    positions: Vec<[f64; 2]>,
    scene: &Scene,
    config: &SystemConfig,
    pilot: &PilotMatrix,
    snr_db: f64,
    seed: u64,
) -> Result<Dataset> {
    let label = noise_label(kind, snr_db);
    let mut measurements = Vec::with_capacity(positions.len());
    let mut channels = Vec::with_capacity(positions.len());
    for (i, &p) in positions.iter().enumerate() {
        let ch = channel_at(scene, config, p)?;
        let mut rng = stream(seed, &label, i as u64);
        measurements.push(measure(&ch, config, pilot, snr_db, &mut rng)?.y);
        channels.push(ch.h);
    }
    Ok(Dataset {
        kind,
        system: config.clone(),
        snr_db,
        seed,
        pilot_seed: pilot.seed,
        positions,
        measurements,
        channels: kind.has_channels().then_some(channels),
    })
}

/// Draws `contrastive + downstream + test` positions uniformly over the scene
/// (one sequential stream, so the splits never share a draw) and measures
/// each with its own position-indexed noise stream.
pub fn build_datasets(
    scene: &Scene,
    config: &SystemConfig,
    pilot: &PilotMatrix,
    sizes: DatasetSizes,
    snr_db: f64,
    seed: u64,
) -> Result<Datasets> {
    config.validate()?;
    if sizes.contrastive == 0 || sizes.downstream == 0 || sizes.test == 0 {
        return Err(Error::Config(format!("dataset sizes must be >= 1: {sizes:?}")));
    }
    let mut rng = stream(seed, "positions", 0);
    let mut draw = |n: usize| -> Vec<[f64; 2]> {
        (0..n)
            .map(|_| {
                let u = unit_f64(&mut rng);
                let v = unit_f64(&mut rng);
                scene.area.at(u, v)
            })
            .collect()
    };
    let pc = draw(sizes.contrastive);
    let pd = draw(sizes.downstream);
    let pt = draw(sizes.test);
    Ok(Datasets {
        contrastive: build_split(DatasetKind::Contrastive, pc, scene, config, pilot, snr_db, seed)?,
        downstream: build_split(DatasetKind::Downstream, pd, scene, config, pilot, snr_db, seed)?,
        test: build_split(DatasetKind::Test, pt, scene, config, pilot, snr_db, seed)?,
    })
}

/// Re-measures a labeled dataset at another SNR with fresh per-sample noise
/// streams. Re-measuring at the dataset's own SNR reproduces it exactly.
pub fn remeasure(data: &Dataset, pilot: &PilotMatrix, snr_db: f64) -> Result<Dataset> {
    let channels = data.require_channels()?;
    let label = noise_label(data.kind, snr_db);
    let measurements = channels
        .iter()
        .zip(&data.positions)
        .enumerate()
        .map(|(i, (h, &p))| {
            let ch = ChannelSample {
                position: p,
                h: h.clone(),
            };
            let mut rng = stream(data.seed, &label, i as u64);
            measure(&ch, &data.system, pilot, snr_db, &mut rng).map(|m| m.y)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        snr_db,
        measurements,
        ..data.clone()
    })
}

/// Seed of the shared pilot matrix for an experiment root seed.
pub fn pilot_seed(root: u64) -> u64 {
    derive_seed(root, "pilot-matrix", 0)
}
