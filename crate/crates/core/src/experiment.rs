//! End-to-end benchmark trials: world, source classifiers, fusion, unified
//! training and evaluation, plus sensitivity sweeps over one axis.
//!
//! Configs are TOML with dotted sections:
//!
//! ```toml
//! trials = 5
//! seed = 7
//! temperature = 3.0
//! methods = ["sd", "ce-e", "mf-lf-bs", "spv"]
//!
//! [world]
//! classes = 6
//! transfer_size = 2000
//!
//! [hcs]
//! count = 4
//! mode = "random-classes"
//! ```
//!
//! Every field has a default; `world.seed`, `hcs.seed` and `train.seed` are
//! replaced per trial by seeds derived from the top-level `seed`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::hash::Hasher;
use std::path::Path;
use std::str::FromStr;

use fnv::FnvHasher;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bench::{degrade_to_accuracy, generate_world, train_hcs, unzip, HCConfigSpec, World, WorldSpec};
use crate::error::{Result, UhcError};
use crate::fusion::{ALSConfig, CESolverConfig, Fusion, LogitMFConfig};
use crate::label_model::{build_profile, FusedLabel, PredictionProfile};
use crate::oracle::{grid_min_ce, GridSpec};
use crate::trainer::{
    compute_balance_weights, train_bp, train_soft, BpMethod, SoftmaxModel, TrainConfig,
};

/// The fusion estimator behind a method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Sd,
    Ce,
    MfP,
    MfLv,
    MfLf,
}

impl Family {
    pub const ALL: [Family; 5] = [Family::Sd, Family::Ce, Family::MfP, Family::MfLv, Family::MfLf];

    pub fn name(self) -> &'static str {
        match self {
            Family::Sd => "sd",
            Family::Ce => "ce",
            Family::MfP => "mf-p",
            Family::MfLv => "mf-lv",
            Family::MfLf => "mf-lf",
        }
    }

    fn fusion(self, lambda: f64) -> Fusion {
        match self {
            Family::Sd => Fusion::Sd,
            Family::Ce => Fusion::Ce(CESolverConfig::default()),
            Family::MfP => Fusion::MfProb(ALSConfig::default()),
            Family::MfLv => Fusion::MfLogit(LogitMFConfig::free(lambda)),
            Family::MfLf => Fusion::MfLogit(LogitMFConfig::fixed()),
        }
    }

    fn bp(self, lambda: f64) -> Option<BpMethod> {
        match self {
            Family::Sd => None,
            Family::Ce => Some(BpMethod::Ce),
            Family::MfP => Some(BpMethod::MfProb),
            Family::MfLv => Some(BpMethod::MfLogitFree { lambda }),
            Family::MfLf => Some(BpMethod::MfLogitFixed),
        }
    }
}

/// How the unified classifier is trained from a fusion method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrainPath {
    /// Train on the estimated soft labels.
    Estimate,
    /// Backpropagate the fusion loss.
    Backprop,
    /// Train on class-balanced estimated soft labels.
    Balanced,
}

/// A row of the comparison: a fusion family trained along one path, or the
/// supervised reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Fused(Family, TrainPath),
    Supervised,
}

impl Method {
    pub fn all() -> Vec<Method> {
        let mut out = vec![Method::Fused(Family::Sd, TrainPath::Estimate), Method::Fused(Family::Sd, TrainPath::Balanced)];
        for f in &Family::ALL[1..] {
            for p in [TrainPath::Estimate, TrainPath::Backprop, TrainPath::Balanced] {
                out.push(Method::Fused(*f, p));
            }
        }
        out.push(Method::Supervised);
        out
    }

    pub fn name(&self) -> String {
        match self {
            Method::Supervised => "spv".into(),
            Method::Fused(Family::Sd, TrainPath::Estimate) => "sd".into(),
            Method::Fused(f, p) => {
                let suffix = match p {
                    TrainPath::Estimate => "e",
                    TrainPath::Backprop => "bp",
                    TrainPath::Balanced => "bs",
                };
                format!("{}-{suffix}", f.name())
            }
        }
    }

    pub fn family(&self) -> Option<Family> {
        match self {
            Method::Fused(f, _) => Some(*f),
            Method::Supervised => None,
        }
    }
}

impl FromStr for Method {
    type Err = UhcError;

    fn from_str(s: &str) -> Result<Self> {
        Method::all()
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| UhcError::invalid(format!("unknown method '{s}'")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A full benchmark description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub trials: usize,
    pub seed: u64,
    pub temperature: f64,
    pub lambda: f64,
    pub methods: Vec<Method>,
    /// Degrade every HC to this adjustment-set accuracy before fusion.
    pub hc_target_accuracy: Option<f64>,
    pub output: Option<String>,
    /// Worker threads for trials; 0 picks the machine default.
    pub jobs: usize,
    pub world: WorldSpec,
    pub hcs: HCConfigSpec,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            trials: 20,
            seed: 0,
            temperature: 3.0,
            lambda: 0.01,
            methods: Method::all(),
            hc_target_accuracy: None,
            output: None,
            jobs: 0,
            world: WorldSpec::default(),
            hcs: HCConfigSpec::default(),
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| UhcError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(UhcError::Config("at least one method is required".into()));
        }
        if self.trials == 0 {
            return Err(UhcError::Config("trials must be positive".into()));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(UhcError::Config("temperature must be positive".into()));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(UhcError::Config("lambda must be non-negative".into()));
        }
        if let Some(t) = self.hc_target_accuracy {
            if !(t > 0.0 && t <= 1.0) {
                return Err(UhcError::Config("hc_target_accuracy must lie in (0, 1]".into()));
            }
        }
        self.world.validate()?;
        self.hcs.validate(self.world.classes)?;
        self.train.validate()
    }

    fn families(&self) -> Vec<Family> {
        let mut f: Vec<Family> = self.methods.iter().filter_map(Method::family).collect();
        f.sort();
        f.dedup();
        f
    }
}

/// Seeds used by one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSeeds {
    pub world: u64,
    pub hcs: u64,
    pub train: u64,
    pub init: u64,
    pub noise: u64,
}

impl TrialSeeds {
    /// Depends only on the base seed and trial index, so trials line up
    /// across sweep values and trial counts.
    pub fn derive(base: u64, trial: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(base);
        rng.set_stream(trial as u64);
        Self { world: rng.next_u64(), hcs: rng.next_u64(), train: rng.next_u64(), init: rng.next_u64(), noise: rng.next_u64() }
    }
}

/// Hashes of everything the methods of a trial share.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactHashes {
    pub hcs: String,
    pub transfer_set: String,
    pub initial_model: String,
    pub batch_order: String,
}

/// Aggregated solver diagnostics for one fusion family over a transfer set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSummary {
    pub samples: usize,
    pub mean_iterations: f64,
    pub max_iterations: usize,
    pub converged_fraction: f64,
    pub warnings: usize,
    pub zero_denominators: usize,
}

impl DiagnosticsSummary {
    fn from_labels(labels: &[FusedLabel]) -> Self {
        let n = labels.len().max(1) as f64;
        let d = labels.iter().map(|l| &l.diagnostics);
        Self {
            samples: labels.len(),
            mean_iterations: d.clone().map(|d| d.iterations as f64).sum::<f64>() / n,
            max_iterations: d.clone().map(|d| d.iterations).max().unwrap_or(0),
            converged_fraction: d.clone().filter(|d| d.converged).count() as f64 / n,
            warnings: d.clone().map(|d| d.warnings.len()).sum(),
            zero_denominators: d.map(|d| d.zero_denominators).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    pub seeds: TrialSeeds,
    pub accuracy: BTreeMap<String, f64>,
    /// Mean total-variation distance between each family's labels and the
    /// grid oracle, on the first transfer samples; only for small universes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_tv: Option<BTreeMap<String, f64>>,
    pub diagnostics: BTreeMap<String, DiagnosticsSummary>,
    /// Test accuracy of each HC on its own classes.
    pub hc_accuracy: Vec<f64>,
    pub artifacts: ArtifactHashes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialReport>,
    pub failures: Vec<TrialFailure>,
    pub mean_accuracy: BTreeMap<String, f64>,
    pub median_accuracy: BTreeMap<String, f64>,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

impl ExperimentReport {
    /// Accuracies of `method` across successful trials, in trial order.
    pub fn series(&self, method: &str) -> Vec<f64> {
        self.trials.iter().filter_map(|t| t.accuracy.get(method).copied()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:>8} {:>8} {:>8} {:>8}", "method", "mean", "median", "min", "max");
        for m in &self.config.methods {
            let s = self.series(&m.name());
            if s.is_empty() {
                continue;
            }
            let min = s.iter().copied().fold(f64::INFINITY, f64::min);
            let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mean = s.iter().sum::<f64>() / s.len() as f64;
            let _ = writeln!(out, "{:<10} {:>8.4} {:>8.4} {:>8.4} {:>8.4}", m.name(), mean, median(&s), min, max);
        }
        let _ = writeln!(out, "trials: {} ok, {} failed", self.trials.len(), self.failures.len());
        for f in &self.failures {
            let _ = writeln!(out, "  trial {}: {}", f.trial, f.error);
        }
        out
    }
}

fn hex(h: FnvHasher) -> String {
    format!("{:016x}", h.finish())
}

fn hash_floats<'a>(h: &mut FnvHasher, xs: impl IntoIterator<Item = &'a f64>) {
    for x in xs {
        h.write_u64(x.to_bits());
    }
}

/// Number of transfer samples compared against the grid oracle.
pub const ORACLE_SAMPLES: usize = 20;
const ORACLE_MAX_CLASSES: usize = 4;

fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Everything a trial's methods share, built once.
pub struct TrialSetup {
    pub world: World,
    pub profiles: Vec<PredictionProfile>,
    pub transfer_features: Vec<Vec<f64>>,
    pub supervised: (Vec<Vec<f64>>, Vec<usize>),
    pub hc_accuracy: Vec<f64>,
    pub hc_hash: String,
}

/// Generate the world and HCs for a trial and run the HCs on the transfer set.
pub fn prepare_trial(config: &ExperimentConfig, seeds: &TrialSeeds) -> Result<TrialSetup> {
    let world = generate_world(&WorldSpec { seed: seeds.world, ..config.world.clone() })?;
    let hc_spec = HCConfigSpec { seed: seeds.hcs, ..config.hcs.clone() };
    let mut hcs = train_hcs(&world, &hc_spec, &TrainConfig { seed: seeds.hcs, ..config.train.clone() })?;
    if let Some(target) = config.hc_target_accuracy {
        let ay: Vec<usize> = world.adjustment.iter().map(|s| s.class).collect();
        for i in 0..hcs.classifiers.len() {
            let ax: Vec<Vec<f64>> = world.adjustment.iter().map(|s| hcs.view(i, s)).collect();
            let degraded = degrade_to_accuracy(&hcs.classifiers[i], target, &ax, &ay, seeds.noise.wrapping_add(i as u64))?;
            hcs.classifiers[i] = degraded.classifier;
        }
    }
    let hc_accuracy = (0..hcs.classifiers.len()).map(|i| hcs.accuracy(i, &world.test)).collect();
    let mut h = FnvHasher::default();
    for c in &hcs.classifiers {
        for &m in c.subset.members() {
            h.write_usize(m);
        }
        h.write_u64(c.model.fingerprint());
    }
    let transfer_features: Vec<Vec<f64>> = world.transfer.iter().map(|s| s.features.clone()).collect();
    let profiles = world
        .transfer
        .par_iter()
        .map(|s| {
            let preds: Vec<_> = (0..hcs.classifiers.len()).map(|i| hcs.predict(i, s)).collect();
            build_profile(&preds, &world.universe, config.temperature)
        })
        .collect::<Result<Vec<_>>>()?;
    let supervised = hcs.pooled_training_data(&world);
    Ok(TrialSetup { world, profiles, transfer_features, supervised, hc_accuracy, hc_hash: hex(h) })
}

/// Run one trial of `config`.
pub fn run_trial(config: &ExperimentConfig, trial: usize) -> Result<TrialReport> {
    let seeds = TrialSeeds::derive(config.seed, trial);
    let setup = prepare_trial(config, &seeds)?;
    let classes = setup.world.spec.classes;
    let dim = setup.world.spec.dim;

    let mut fused: BTreeMap<Family, Vec<FusedLabel>> = BTreeMap::new();
    for family in config.families() {
        let needs_labels = config.methods.iter().any(|m| matches!(m, Method::Fused(f, p) if *f == family && *p != TrainPath::Backprop));
        if needs_labels || classes <= ORACLE_MAX_CLASSES {
            fused.insert(family, family.fusion(config.lambda).fuse_all(&setup.profiles)?);
        }
    }

    let init = SoftmaxModel::random(classes, dim, 0.01, seeds.init);
    let train_cfg = TrainConfig { seed: seeds.train, ..config.train.clone() };
    let (test_x, test_y) = unzip(&setup.world.test);

    let mut accuracy = BTreeMap::new();
    for method in &config.methods {
        let model = match *method {
            Method::Supervised => {
                let (x, y) = &setup.supervised;
                let targets: Vec<Vec<f64>> = y
                    .iter()
                    .map(|&k| {
                        let mut t = vec![0.0; classes];
                        t[k] = 1.0;
                        t
                    })
                    .collect();
                train_soft(&init, x, &targets, &train_cfg, None)?.model
            }
            Method::Fused(family, TrainPath::Backprop) => {
                let bp = family.bp(config.lambda).expect("backprop path exists for this family");
                train_bp(&init, &setup.transfer_features, &setup.profiles, bp, &train_cfg)?.model
            }
            Method::Fused(family, path) => {
                let labels = &fused[&family];
                let weights = if path == TrainPath::Balanced { Some(compute_balance_weights(labels)?) } else { None };
                train_soft(&init, &setup.transfer_features, labels, &train_cfg, weights.as_ref())?.model
            }
        };
        accuracy.insert(method.name(), model.accuracy(&test_x, &test_y));
    }

    let oracle_tv = if classes <= ORACLE_MAX_CLASSES && !fused.is_empty() {
        let grid = GridSpec::for_classes(classes);
        let n = setup.profiles.len().min(ORACLE_SAMPLES);
        let refs = setup.profiles[..n].iter().map(|p| grid_min_ce(p, &grid).map(|g| g.q)).collect::<Result<Vec<_>>>()?;
        let tv = fused
            .iter()
            .map(|(f, labels)| {
                let mean = refs.iter().zip(labels).map(|(r, l)| total_variation(r, &l.q)).sum::<f64>() / n.max(1) as f64;
                (f.name().to_string(), mean)
            })
            .collect();
        Some(tv)
    } else {
        None
    };

    let diagnostics = fused.iter().map(|(f, l)| (f.name().to_string(), DiagnosticsSummary::from_labels(l))).collect();

    let mut th = FnvHasher::default();
    for x in &setup.transfer_features {
        hash_floats(&mut th, x);
    }
    let mut ih = FnvHasher::default();
    ih.write_u64(init.fingerprint());
    let mut bh = FnvHasher::default();
    for epoch in train_cfg.batch_order(setup.transfer_features.len()) {
        for i in epoch {
            bh.write_usize(i);
        }
    }

    Ok(TrialReport {
        trial,
        seeds,
        accuracy,
        oracle_tv,
        diagnostics,
        hc_accuracy: setup.hc_accuracy,
        artifacts: ArtifactHashes { hcs: setup.hc_hash, transfer_set: hex(th), initial_model: hex(ih), batch_order: hex(bh) },
    })
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| UhcError::invalid(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Run every trial; a failing trial is recorded and the rest continue.
/// Results are merged in trial order regardless of scheduling.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let results: Vec<Result<TrialReport>> =
        with_pool(config.jobs, || (0..config.trials).into_par_iter().map(|t| run_trial(config, t)).collect())?;
    let mut trials = Vec::new();
    let mut failures = Vec::new();
    for (t, r) in results.into_iter().enumerate() {
        match r {
            Ok(rep) => trials.push(rep),
            Err(e) => failures.push(TrialFailure { trial: t, error: e.to_string() }),
        }
    }
    let mut report = ExperimentReport {
        config: config.clone(),
        trials,
        failures,
        mean_accuracy: BTreeMap::new(),
        median_accuracy: BTreeMap::new(),
    };
    for m in &config.methods {
        let s = report.series(&m.name());
        if !s.is_empty() {
            report.mean_accuracy.insert(m.name(), s.iter().sum::<f64>() / s.len() as f64);
            report.median_accuracy.insert(m.name(), median(&s));
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    TransferSize,
    Temperature,
    HcAccuracy,
}

impl FromStr for SweepAxis {
    type Err = UhcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('_', "-").as_str() {
            "transfer-size" => Ok(SweepAxis::TransferSize),
            "temperature" => Ok(SweepAxis::Temperature),
            "hc-accuracy" => Ok(SweepAxis::HcAccuracy),
            other => Err(UhcError::invalid(format!("unknown sweep axis '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

impl SensitivitySpec {
    pub fn with_defaults(axis: SweepAxis) -> Self {
        let values = match axis {
            SweepAxis::TransferSize => vec![500.0, 2000.0, 5000.0],
            SweepAxis::Temperature => vec![1.0, 3.0, 6.0, 10.0],
            SweepAxis::HcAccuracy => vec![0.4, 0.6, 0.8],
        };
        Self { axis, values }
    }

    /// `config` with the axis set to `value`.
    pub fn apply(&self, config: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut c = config.clone();
        match self.axis {
            SweepAxis::TransferSize => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(UhcError::invalid(format!("transfer size {value} is not a positive integer")));
                }
                c.world.transfer_size = value as usize;
            }
            SweepAxis::Temperature => c.temperature = value,
            SweepAxis::HcAccuracy => c.hc_target_accuracy = Some(value),
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub report: ExperimentReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
}

impl SweepReport {
    /// One row per (axis value, method) with trial statistics.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("value,method,trials,mean,median,min,max\n");
        for p in &self.points {
            for m in &p.report.config.methods {
                let s = p.report.series(&m.name());
                if s.is_empty() {
                    continue;
                }
                let mean = s.iter().sum::<f64>() / s.len() as f64;
                let min = s.iter().copied().fold(f64::INFINITY, f64::min);
                let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let _ = writeln!(out, "{},{},{},{:.6},{:.6},{:.6},{:.6}", p.value, m.name(), s.len(), mean, median(&s), min, max);
            }
        }
        out
    }

    /// Per axis value, the median over trials of the median accuracy across
    /// methods within each trial.
    pub fn median_curve(&self) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .map(|p| {
                let per_trial: Vec<f64> = p.report.trials.iter().map(|t| median(&t.accuracy.values().copied().collect::<Vec<_>>())).collect();
                (p.value, median(&per_trial))
            })
            .collect()
    }
}

/// Run the experiment once per axis value with the same trial seeds.
pub fn run_sweep(config: &ExperimentConfig, spec: &SensitivitySpec) -> Result<SweepReport> {
    if spec.values.is_empty() {
        return Err(UhcError::invalid("sweep needs at least one value"));
    }
    let configs = spec.values.iter().map(|&v| spec.apply(config, v)).collect::<Result<Vec<_>>>()?;
    let points = configs
        .iter()
        .zip(&spec.values)
        .map(|(c, &value)| Ok(SweepPoint { value, report: run_experiment(c)? }))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport { axis: spec.axis, points })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn smoke() -> ExperimentConfig {
        ExperimentConfig {
            trials: 1,
            seed: 1,
            world: WorldSpec { classes: 4, train_pool_per_class: 400, transfer_size: 400, test_per_class: 50, ..Default::default() },
            hcs: HCConfigSpec { count: 2, min_classes: 2, max_classes: 4, ..Default::default() },
            train: TrainConfig { epochs: 4, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn method_names_round_trip() {
        let all = Method::all();
        assert_eq!(all.len(), 15);
        for m in all {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("ce".parse::<Method>().is_err());
    }

    #[test]
    fn config_defaults_and_dotted_keys() {
        let cfg = ExperimentConfig::from_toml_str("trials = 2\nworld.classes = 6\n[hcs]\ncount = 3\n").unwrap();
        assert_eq!(cfg.trials, 2);
        assert_eq!(cfg.world.classes, 6);
        assert_eq!(cfg.hcs.count, 3);
        assert_eq!(cfg.temperature, 3.0);
        assert_eq!(cfg.lambda, 0.01);
        assert_eq!(cfg.methods.len(), 15);
    }

    #[test]
    fn config_rejects_typos_and_empty_methods() {
        assert!(matches!(ExperimentConfig::from_toml_str("trails = 2"), Err(UhcError::Config(_))));
        assert!(ExperimentConfig::from_toml_str("methods = []").is_err());
        assert!(ExperimentConfig::from_toml_str("methods = [\"nope\"]").is_err());
    }

    #[test]
    fn config_toml_round_trip() {
        let cfg = smoke();
        assert_eq!(ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
    }

    #[test]
    fn seeds_independent_of_trial_count() {
        assert_eq!(TrialSeeds::derive(5, 3), TrialSeeds::derive(5, 3));
        assert_ne!(TrialSeeds::derive(5, 3), TrialSeeds::derive(5, 4));
    }

    #[test]
    fn smoke_trial_is_deterministic() {
        let cfg = smoke();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert!(a.failures.is_empty());
        let t = &a.trials[0];
        assert_eq!(t.accuracy.len(), 15);
        assert!(t.accuracy.values().all(|x| (0.0..=1.0).contains(x)));
        assert!(t.oracle_tv.is_some());
    }

    #[test]
    fn median_handles_even_length() {
        assert_eq!(median(&[3.0, 1.0, 2.0, 4.0]), 2.5);
        assert_eq!(median(&[2.0]), 2.0);
    }
}
