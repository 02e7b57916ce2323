//! The four subcommands. Every command is a function of the configuration,
//! the artifacts already on disk and the root seed.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use muce_core::adaptive_pipeline::{nmse, Nmse, ProposedModel};
use muce_core::baselines::LocationModel;
use muce_core::channel_sim::{remeasure, Dataset, Datasets, PilotMatrix};
use muce_core::clnet::{similarity_curve, ClnetModel, SimilarityMode};
use muce_core::dnet::{DsnetModel, DsnetTraining, EpochRecord};
use muce_core::experiment::{
    estimate_all, labeled_floor, prepare, pretrain_clnet, train_baselines, train_joint_stage, train_separate_dsnet,
    ExperimentConfig, Labeled, MethodSet, METHODS,
};
use muce_core::storage;

use crate::error::{CliError, CliResult};
use crate::manifest::Manifest;
use crate::output::{csv, heat_map, line_plot, num, opt, write_text};

pub const CONFIG_FILE: &str = "config.toml";
const DATA: &str = "data";
const CLNET: &str = "models/clnet";
const SEPARATE: &str = "models/separate";
const JOINT: &str = "models/joint";
const BASELINES: &str = "models/baselines";

/// Options shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct GlobalOptions {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub force: bool,
}

/// Loads `--config`, or the `config.toml` of the output directory, or the
/// defaults, then applies `--out` and `--seed`.
pub fn resolve_config(opts: &GlobalOptions) -> CliResult<ExperimentConfig> {
    let from_file = |p: &Path| -> CliResult<ExperimentConfig> {
        let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
        Ok(ExperimentConfig::from_toml(&text)?)
    };
    let mut cfg = match (&opts.config, &opts.out) {
        (Some(p), _) => from_file(p)?,
        (None, Some(out)) if out.join(CONFIG_FILE).exists() => from_file(&out.join(CONFIG_FILE))?,
        _ => ExperimentConfig::default(),
    };
    if let Some(out) = &opts.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// An experiment directory and its configuration.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub cfg: ExperimentConfig,
}

impl Workspace {
    pub fn new(cfg: ExperimentConfig) -> Self {
        Workspace { cfg }
    }

    pub fn root(&self) -> &Path {
        &self.cfg.output_dir
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root().join(rel)
    }

    pub fn results_dir(&self) -> PathBuf {
        self.path("results")
    }

    /// Self-contained experiment for one pilot length.
    pub fn pilot_point(&self, l: usize) -> Workspace {
        let mut cfg = self.cfg.with_pilot_len(l);
        cfg.output_dir = self.path(&format!("sweeps/pilot-{l}"));
        Workspace { cfg }
    }

    /// Model directory for one label count; data and the feature network
    /// are shared with this workspace.
    pub fn labels_point(&self, n: usize) -> PathBuf {
        self.path(&format!("sweeps/labels-{n}"))
    }

    fn has_data(&self) -> bool {
        storage::meta_path(&self.path(DATA), "test").exists()
    }

    /// The stored configuration must equal the effective one.
    fn check_config(&self) -> CliResult<()> {
        let p = self.path(CONFIG_FILE);
        if !p.exists() {
            return Err(CliError::Missing(format!("{} (run generate first)", p.display())));
        }
        Manifest::verify(self.root(), &[CONFIG_FILE])?;
        let text = fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
        let mut stored = ExperimentConfig::from_toml(&text)?;
        stored.output_dir = self.cfg.output_dir.clone();
        if stored != self.cfg {
            return Err(CliError::Mismatch(format!(
                "effective configuration differs from {}",
                p.display()
            )));
        }
        Ok(())
    }

    fn load_data(&self, stem: &str) -> CliResult<Dataset> {
        self.check_config()?;
        let dir = self.path(DATA);
        if !storage::meta_path(&dir, stem).exists() {
            return Err(CliError::Missing(format!("dataset {stem} in {} (run generate first)", dir.display())));
        }
        for rel in [format!("{DATA}/{stem}.toml"), format!("{DATA}/{stem}.bin")] {
            Manifest::verify(self.root(), &[&rel])?;
        }
        Ok(Dataset::load(&dir, stem)?)
    }

    fn load_clnet(&self) -> CliResult<ClnetModel> {
        let dir = self.path(CLNET);
        if !storage::meta_path(&dir, "clnet").exists() {
            return Err(CliError::Missing(format!(
                "feature network {} (run train --stage clnet first)",
                dir.display()
            )));
        }
        Manifest::verify(self.root(), &[CLNET])?;
        Ok(ClnetModel::load(&dir, "clnet")?)
    }
}

fn clear(path: &Path, force: bool) -> CliResult<()> {
    if path.exists() {
        if !force {
            return Err(CliError::Exists(path.to_path_buf()));
        }
        let r = if path.is_dir() { fs::remove_dir_all(path) } else { fs::remove_file(path) };
        r.map_err(|e| CliError::io(path, e))?;
    }
    Ok(())
}

fn mkdir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// Files written by [`cmd_generate`].
#[derive(Debug, Clone)]
pub struct GenerateSummary {
    pub files: Vec<(PathBuf, u64)>,
}

/// Builds the three dataset splits and the manifest.
pub fn cmd_generate(ws: &Workspace, force: bool) -> CliResult<GenerateSummary> {
    let data = ws.path(DATA);
    clear(&data, force)?;
    mkdir(&data)?;
    let p = prepare(&ws.cfg)?;
    p.data.save(&data)?;
    let mut stored = ws.cfg.clone();
    stored.output_dir = PathBuf::from(".");
    write_text(&ws.path(CONFIG_FILE), &stored.to_toml())?;
    Manifest::record(ws.root(), &[CONFIG_FILE, DATA])?;
    let files = crate::manifest::files_under(&data)?
        .into_iter()
        .map(|f| {
            let len = fs::metadata(&f).map_err(|e| CliError::io(&f, e))?.len();
            Ok((f, len))
        })
        .collect::<CliResult<_>>()?;
    Ok(GenerateSummary { files })
}

/// Training stage selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Clnet,
    Dsnet(usize),
    Joint,
    Baselines,
    /// Every stage in dependency order.
    All,
}

impl FromStr for Stage {
    type Err = CliError;
    fn from_str(s: &str) -> CliResult<Stage> {
        match s {
            "clnet" => Ok(Stage::Clnet),
            "joint" => Ok(Stage::Joint),
            "baselines" => Ok(Stage::Baselines),
            "all" => Ok(Stage::All),
            _ => match s.strip_prefix("dsnet:").map(str::parse::<usize>) {
                Some(Ok(q)) if q >= 1 => Ok(Stage::Dsnet(q)),
                _ => Err(CliError::Usage(format!(
                    "unknown stage '{s}' (expected clnet, dsnet:<q>, joint, baselines or all)"
                ))),
            },
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Clnet => write!(f, "clnet"),
            Stage::Dsnet(q) => write!(f, "dsnet:{q}"),
            Stage::Joint => write!(f, "joint"),
            Stage::Baselines => write!(f, "baselines"),
            Stage::All => write!(f, "all"),
        }
    }
}

/// Evaluation (and sweep training) axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Snr,
    Pilot,
    Labels,
    Position,
}

impl FromStr for Axis {
    type Err = CliError;
    fn from_str(s: &str) -> CliResult<Axis> {
        match s {
            "snr" => Ok(Axis::Snr),
            "pilot" => Ok(Axis::Pilot),
            "labels" => Ok(Axis::Labels),
            "position" => Ok(Axis::Position),
            _ => Err(CliError::Usage(format!(
                "unknown axis '{s}' (expected snr, pilot, labels or position)"
            ))),
        }
    }
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::Snr => "snr",
            Axis::Pilot => "pilot",
            Axis::Labels => "labels",
            Axis::Position => "position",
        }
    }
}

/// `epoch,loss` rows for epochs ≥ 1.
fn loss_csv(points: impl Iterator<Item = (usize, f64)>) -> String {
    let rows: Vec<Vec<String>> = points
        .filter(|(e, _)| *e >= 1)
        .map(|(e, l)| vec![e.to_string(), num(l)])
        .collect();
    csv(&["epoch", "loss"], &rows)
}

fn records_csv(trace: &[EpochRecord]) -> String {
    loss_csv(trace.iter().map(|r| (r.epoch, r.loss)))
}

/// Where a stage reads shared inputs and writes its models.
struct StageTarget<'a> {
    ws: &'a Workspace,
    dest: PathBuf,
    n_labels: Option<usize>,
}

impl StageTarget<'_> {
    fn labeled(&self) -> CliResult<Labeled> {
        let all = Labeled::from_dataset(&self.ws.load_data("downstream")?)?;
        match self.n_labels {
            Some(n) if n > all.len() => Err(CliError::Usage(format!(
                "{n} labels requested but the downstream split holds {}",
                all.len()
            ))),
            Some(n) => Ok(all.head(n)),
            None => Ok(all),
        }
    }

    fn record(&self, rel: &[&str]) -> CliResult<()> {
        Manifest::record(&self.dest, rel)
    }
}

fn write_dsnet_run(t: &StageTarget, dir_rel: &str, trace_rel: &str, run: &DsnetTraining) -> CliResult<()> {
    let dir = t.dest.join(dir_rel);
    mkdir(&dir)?;
    run.model.save(&dir, &format!("dsnet{}", run.model.arch.q))?;
    write_text(&t.dest.join(trace_rel), &records_csv(&run.trace))
}

#[derive(serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct FloorMeta {
    floor: f64,
}

fn run_stage(t: &StageTarget, stage: Stage, force: bool) -> CliResult<()> {
    let cfg = &t.ws.cfg;
    let q_max = cfg.downstream.q_max;
    match stage {
        Stage::Clnet => {
            let dir = t.dest.join(CLNET);
            clear(&dir, force)?;
            let data = t.ws.load_data("contrastive")?;
            let run = pretrain_clnet(cfg, &data)?;
            mkdir(&dir)?;
            run.model.save(&dir, "clnet")?;
            write_text(
                &t.dest.join("traces/clnet.csv"),
                &loss_csv(run.trace.iter().map(|s| (s.epoch, s.loss))),
            )?;
            t.record(&[CLNET, "traces/clnet.csv"])
        }
        Stage::Dsnet(q) => {
            if q > q_max {
                return Err(CliError::Usage(format!("dsnet:{q} exceeds Q = {q_max}")));
            }
            let stem = format!("dsnet{q}");
            let model_rel = format!("{SEPARATE}/{stem}");
            let meta = storage::meta_path(&t.dest.join(SEPARATE), &stem);
            if meta.exists() && !force {
                return Err(CliError::Exists(meta));
            }
            let clnet = t.ws.load_clnet()?;
            let labeled = t.labeled()?;
            let run = train_separate_dsnet(cfg, &clnet, &labeled, q)?;
            let trace_rel = format!("traces/{stem}.csv");
            write_dsnet_run(t, SEPARATE, &trace_rel, &run)?;
            let floor = labeled_floor(cfg, &clnet, &labeled)?;
            storage::write_meta(&t.dest.join(SEPARATE).join("floor.toml"), &FloorMeta { floor })?;
            t.record(&[
                &format!("{model_rel}.toml"),
                &format!("{model_rel}.bin"),
                &format!("{SEPARATE}/floor.toml"),
                &trace_rel,
            ])
        }
        Stage::Joint => {
            let dir = t.dest.join(JOINT);
            if dir.exists() && !force {
                return Err(CliError::Exists(dir));
            }
            let clnet = t.ws.load_clnet()?;
            let stem = format!("dsnet{q_max}");
            let sep = t.dest.join(SEPARATE);
            if !storage::meta_path(&sep, &stem).exists() {
                return Err(CliError::Missing(format!(
                    "DSNet-{q_max} in {} (run train --stage dsnet:{q_max} first)",
                    sep.display()
                )));
            }
            for ext in ["toml", "bin"] {
                Manifest::verify(&t.dest, &[&format!("{SEPARATE}/{stem}.{ext}")])?;
            }
            let dsnet = DsnetModel::load(&sep, &stem)?;
            let labeled = t.labeled()?;
            let stage = train_joint_stage(cfg, &clnet, &dsnet, &labeled)?;
            clear(&dir, true)?;
            mkdir(&dir)?;
            stage.model.save(&dir)?;
            write_text(&t.dest.join("traces/joint.csv"), &records_csv(&stage.run.trace))?;
            let mut rel = vec![JOINT.to_string(), "traces/joint.csv".to_string()];
            for r in &stage.retrain_runs {
                let p = format!("traces/joint-dsnet{}.csv", r.model.arch.q);
                write_text(&t.dest.join(&p), &records_csv(&r.trace))?;
                rel.push(p);
            }
            if let Some(e) = stage.run.diverged_at {
                log::warn!("joint training stopped at epoch {e}; best epoch {}", stage.run.best_epoch);
            }
            t.record(&rel.iter().map(String::as_str).collect::<Vec<_>>())
        }
        Stage::Baselines => {
            let dir = t.dest.join(BASELINES);
            clear(&dir, force)?;
            let labeled = t.labeled()?;
            let base = train_baselines(cfg, &labeled)?;
            mkdir(&dir)?;
            base.single.save(&dir, "single")?;
            base.location.save(&dir)?;
            t.record(&[BASELINES])
        }
        Stage::All => {
            if t.n_labels.is_none() {
                run_stage(t, Stage::Clnet, force)?;
            }
            for q in 1..=q_max {
                run_stage(t, Stage::Dsnet(q), force)?;
            }
            run_stage(t, Stage::Joint, force)?;
            run_stage(t, Stage::Baselines, force)
        }
    }
}

/// Runs one training stage, or the stage at every point of a pilot-length
/// or label-count sweep. Pilot points generate their own data when absent.
pub fn cmd_train(ws: &Workspace, stage: Stage, axis: Option<Axis>, force: bool) -> CliResult<()> {
    match axis {
        None => {
            mkdir(ws.root())?;
            run_stage(
                &StageTarget {
                    ws,
                    dest: ws.root().to_path_buf(),
                    n_labels: None,
                },
                stage,
                force,
            )
        }
        Some(Axis::Pilot) => {
            for &l in &ws.cfg.sweep.pilot_len {
                let point = ws.pilot_point(l);
                if !point.has_data() {
                    cmd_generate(&point, false)?;
                }
                log::info!("pilot length {l}: stage {stage}");
                cmd_train(&point, stage, None, force)?;
            }
            Ok(())
        }
        Some(Axis::Labels) => {
            if stage == Stage::Clnet {
                return Err(CliError::Usage(
                    "the feature network is shared by every label point; train it without --axis".into(),
                ));
            }
            for &n in &ws.cfg.sweep.labels {
                let dest = ws.labels_point(n);
                mkdir(&dest)?;
                log::info!("{n} labels: stage {stage}");
                run_stage(
                    &StageTarget {
                        ws,
                        dest,
                        n_labels: Some(n),
                    },
                    stage,
                    force,
                )?;
            }
            Ok(())
        }
        Some(a) => Err(CliError::Usage(format!("training does not sweep over {}", a.name()))),
    }
}

/// Models found for one evaluation point.
#[derive(Debug, Default)]
pub struct LoadedModels {
    pub joint: Option<ProposedModel>,
    pub separate: Option<ProposedModel>,
    pub single: Option<DsnetModel>,
    pub location: Option<LocationModel>,
}

/// Loads whatever models exist under `dest`; absent ones are reported in
/// `missing`, tampered ones are an error.
pub fn load_models(ws: &Workspace, dest: &Path, missing: &mut Vec<String>) -> CliResult<LoadedModels> {
    let cfg = &ws.cfg;
    let q_max = cfg.downstream.q_max;
    let mut out = LoadedModels::default();
    let joint_dir = dest.join(JOINT);
    if joint_dir.join("grouping.toml").exists() {
        Manifest::verify(dest, &[JOINT])?;
        out.joint = Some(ProposedModel::load(&joint_dir)?);
    } else {
        missing.push(format!("proposed-joint: {}", joint_dir.display()));
    }
    let sep = dest.join(SEPARATE);
    let have_all = (1..=q_max).all(|q| storage::meta_path(&sep, &format!("dsnet{q}")).exists())
        && sep.join("floor.toml").exists()
        && storage::meta_path(&ws.path(CLNET), "clnet").exists();
    if have_all {
        Manifest::verify(dest, &[SEPARATE])?;
        let floor: FloorMeta = storage::read_meta(&sep.join("floor.toml"))?;
        out.separate = Some(ProposedModel {
            clnet: ws.load_clnet()?,
            dsnets: (1..=q_max)
                .map(|q| DsnetModel::load(&sep, &format!("dsnet{q}")))
                .collect::<muce_core::Result<_>>()?,
            floor: floor.floor,
            order: cfg.downstream.order,
        });
    } else {
        missing.push(format!("proposed-separate: {}", sep.display()));
    }
    let base = dest.join(BASELINES);
    if storage::meta_path(&base, "single").exists() {
        Manifest::verify(dest, &[BASELINES])?;
        out.single = Some(DsnetModel::load(&base, "single")?);
        out.location = Some(LocationModel::load(&base, cfg.baselines.location_q, cfg.seed)?);
    } else {
        missing.push(format!("single-user, location-based: {}", base.display()));
    }
    Ok(out)
}

impl LoadedModels {
    pub fn methods<'a>(&'a self, pilot: &'a PilotMatrix, cfg: &'a ExperimentConfig) -> MethodSet<'a> {
        MethodSet {
            joint: self.joint.as_ref(),
            separate: self.separate.as_ref(),
            single: self.single.as_ref(),
            location: self.location.as_ref(),
            jomp: Some((pilot, &cfg.baselines.jomp)),
        }
    }
}

/// One CSV row of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: String,
    pub axis_value: f64,
    pub nmse: Nmse,
    pub seed: u64,
}

/// Output of [`cmd_evaluate`].
#[derive(Debug, Clone)]
pub struct EvaluationSummary {
    pub rows: Vec<ResultRow>,
    /// Per-cell rows of the position map: method, cell center, NMSE.
    pub cells: Vec<(String, [f64; 2], Nmse)>,
    pub missing: Vec<String>,
    pub csv: PathBuf,
}

pub const RESULT_HEADER: [&str; 6] = ["method", "axis_value", "nmse", "nmse_db", "n_test", "seed"];

pub fn result_csv(rows: &[ResultRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.method.clone(),
                num(r.axis_value),
                num(r.nmse.linear),
                num(r.nmse.db),
                r.nmse.count.to_string(),
                r.seed.to_string(),
            ]
        })
        .collect();
    csv(&RESULT_HEADER, &body)
}

fn pilot_of(d: &Dataset) -> PilotMatrix {
    PilotMatrix::generate(&d.system, d.pilot_seed)
}

fn score_point(
    ws: &Workspace,
    models: &LoadedModels,
    pilot: &PilotMatrix,
    test: &Labeled,
    value: f64,
    rows: &mut Vec<ResultRow>,
) -> CliResult<()> {
    for (method, est) in estimate_all(&ws.cfg, &models.methods(pilot, &ws.cfg), test)? {
        rows.push(ResultRow {
            method,
            axis_value: value,
            nmse: nmse(&test.channels, &est)?,
            seed: ws.cfg.seed,
        });
    }
    Ok(())
}

/// Scores every available method along one axis and writes
/// `results/<axis>.csv` plus an SVG plot.
pub fn cmd_evaluate(ws: &Workspace, axis: Axis) -> CliResult<EvaluationSummary> {
    let cfg = &ws.cfg;
    let mut rows = Vec::new();
    let mut cells = Vec::new();
    let mut missing = Vec::new();
    match axis {
        Axis::Snr => {
            let test = ws.load_data("test")?;
            let pilot = pilot_of(&test);
            let models = load_models(ws, ws.root(), &mut missing)?;
            for &snr in &cfg.sweep.snr_db {
                let labeled = Labeled::from_dataset(&remeasure(&test, &pilot, snr)?)?;
                score_point(ws, &models, &pilot, &labeled, snr, &mut rows)?;
            }
        }
        Axis::Pilot => {
            for &l in &cfg.sweep.pilot_len {
                let point = ws.pilot_point(l);
                if !point.has_data() {
                    missing.push(format!("pilot length {l}: no data in {}", point.root().display()));
                    continue;
                }
                let test = point.load_data("test")?;
                let pilot = pilot_of(&test);
                let mut point_missing = Vec::new();
                let models = load_models(&point, point.root(), &mut point_missing)?;
                missing.extend(point_missing.into_iter().map(|m| format!("pilot length {l}: {m}")));
                score_point(&point, &models, &pilot, &Labeled::from_dataset(&test)?, l as f64, &mut rows)?;
            }
        }
        Axis::Labels => {
            let test = ws.load_data("test")?;
            let pilot = pilot_of(&test);
            let labeled = Labeled::from_dataset(&test)?;
            for &n in &cfg.sweep.labels {
                let dest = ws.labels_point(n);
                let mut point_missing = Vec::new();
                let models = load_models(ws, &dest, &mut point_missing)?;
                missing.extend(point_missing.into_iter().map(|m| format!("{n} labels: {m}")));
                score_point(ws, &models, &pilot, &labeled, n as f64, &mut rows)?;
            }
        }
        Axis::Position => {
            let test = ws.load_data("test")?;
            let pilot = pilot_of(&test);
            let labeled = Labeled::from_dataset(&test)?;
            let models = load_models(ws, ws.root(), &mut missing)?;
            let area = cfg.scene.area;
            let cell = cfg.sweep.position_cell;
            let nx = ((area.width() / cell).ceil() as usize).max(1);
            let ny = ((area.height() / cell).ceil() as usize).max(1);
            let mut members: Vec<Vec<usize>> = vec![Vec::new(); nx * ny];
            for (i, p) in labeled.positions.iter().enumerate() {
                let cx = (((p[0] - area.min[0]) / cell).floor().max(0.0) as usize).min(nx - 1);
                let cy = (((p[1] - area.min[1]) / cell).floor().max(0.0) as usize).min(ny - 1);
                members[cy * nx + cx].push(i);
            }
            for (method, est) in estimate_all(cfg, &models.methods(&pilot, cfg), &labeled)? {
                rows.push(ResultRow {
                    method: method.clone(),
                    axis_value: f64::NAN,
                    nmse: nmse(&labeled.channels, &est)?,
                    seed: cfg.seed,
                });
                for (c, idx) in members.iter().enumerate() {
                    if idx.is_empty() {
                        continue;
                    }
                    let truth: Vec<_> = idx.iter().map(|&i| labeled.channels[i].clone()).collect();
                    let e: Vec<_> = idx.iter().map(|&i| est[i].clone()).collect();
                    let center = [
                        area.min[0] + (c % nx) as f64 * cell + 0.5 * cell,
                        area.min[1] + (c / nx) as f64 * cell + 0.5 * cell,
                    ];
                    cells.push((method.clone(), center, nmse(&truth, &e)?));
                }
            }
        }
    }
    for m in &missing {
        log::warn!("missing model: {m}");
    }
    let dir = ws.results_dir();
    let csv_path = dir.join(format!("{}.csv", axis.name()));
    if axis == Axis::Position {
        let body: Vec<Vec<String>> = cells
            .iter()
            .map(|(m, c, n)| {
                vec![
                    m.clone(),
                    num(c[0]),
                    num(c[1]),
                    num(n.linear),
                    num(n.db),
                    n.count.to_string(),
                    cfg.seed.to_string(),
                ]
            })
            .collect();
        write_text(
            &csv_path,
            &csv(&["method", "x", "y", "nmse", "nmse_db", "n_test", "seed"], &body),
        )?;
        if let Some(method) = METHODS.iter().find(|m| cells.iter().any(|c| c.0 == **m)) {
            let half = 0.5 * cfg.sweep.position_cell;
            let rects: Vec<([f64; 4], f64)> = cells
                .iter()
                .filter(|c| c.0 == *method)
                .map(|(_, c, n)| ([c[0] - half, c[1] - half, c[0] + half, c[1] + half], n.db))
                .collect();
            heat_map(&dir.join("position.svg"), &format!("NMSE by position, {method}"), &rects)?;
        }
    } else {
        write_text(&csv_path, &result_csv(&rows))?;
        let series: Vec<(String, Vec<(f64, f64)>)> = METHODS
            .iter()
            .map(|m| {
                let pts = rows.iter().filter(|r| r.method == *m).map(|r| (r.axis_value, r.nmse.db)).collect();
                (m.to_string(), pts)
            })
            .filter(|(_, p): &(String, Vec<(f64, f64)>)| !p.is_empty())
            .collect();
        let x_desc = match axis {
            Axis::Snr => "SNR (dB)",
            Axis::Pilot => "pilot length L",
            _ => "labeled samples",
        };
        line_plot(
            &dir.join(format!("{}.svg", axis.name())),
            &format!("NMSE versus {}", x_desc),
            x_desc,
            "NMSE (dB)",
            &series,
        )?;
    }
    Ok(EvaluationSummary {
        rows,
        cells,
        missing,
        csv: csv_path,
    })
}

/// Raw-signal and feature similarity by distance bin.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityRow {
    pub lo: f64,
    pub hi: f64,
    pub pairs: usize,
    pub raw: Option<f64>,
    pub feature: Option<f64>,
}

pub const SIMILARITY_HEADER: [&str; 5] = ["bin_lo", "bin_hi", "pairs", "raw", "feature"];

/// Writes `results/similarity.csv` and `results/similarity.svg`.
pub fn cmd_similarity_study(ws: &Workspace) -> CliResult<Vec<SimilarityRow>> {
    let data = ws.load_data("contrastive")?;
    let clnet = ws.load_clnet()?;
    let raw = similarity_curve(&data, SimilarityMode::Raw, &ws.cfg.curve)?;
    let feat = similarity_curve(&data, SimilarityMode::Features(&clnet), &ws.cfg.curve)?;
    let rows: Vec<SimilarityRow> = raw
        .iter()
        .zip(&feat)
        .map(|(r, f)| SimilarityRow {
            lo: r.lo,
            hi: r.hi,
            pairs: r.pairs,
            raw: r.mean,
            feature: f.mean,
        })
        .collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![num(r.lo), num(r.hi), r.pairs.to_string(), opt(r.raw), opt(r.feature)])
        .collect();
    let dir = ws.results_dir();
    write_text(&dir.join("similarity.csv"), &csv(&SIMILARITY_HEADER, &body))?;
    let mid = |r: &SimilarityRow| 0.5 * (r.lo + r.hi);
    let series = vec![
        (
            "received signal".to_string(),
            rows.iter().filter_map(|r| r.raw.map(|v| (mid(r), v))).collect(),
        ),
        (
            "CSI feature".to_string(),
            rows.iter().filter_map(|r| r.feature.map(|v| (mid(r), v))).collect(),
        ),
    ];
    line_plot(
        &dir.join("similarity.svg"),
        "Standardized similarity versus distance",
        "distance (m)",
        "standardized similarity",
        &series,
    )?;
    Ok(rows)
}

/// Loads all three splits of a workspace after checking the manifest.
pub fn load_datasets(ws: &Workspace) -> CliResult<Datasets> {
    Ok(Datasets {
        contrastive: ws.load_data("contrastive")?,
        downstream: ws.load_data("downstream")?,
        test: ws.load_data("test")?,
    })
}
