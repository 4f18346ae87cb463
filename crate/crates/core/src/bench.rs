//! Synthetic Gaussian-mixture worlds and heterogeneous source classifiers.
//!
//! A world has `classes` in-universe classes plus `out_of_universe` extra
//! classes that only ever appear in the unlabelled transfer set. Every split
//! is drawn from its own RNG stream, so changing one split's size leaves the
//! others untouched and smaller splits are prefixes of larger ones.

use std::collections::HashSet;
use std::fs::File;
use std::hash::Hasher;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use fnv::FnvHasher;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, UhcError};
use crate::label_model::{ClassSubset, ClassUniverse, HCPrediction};
use crate::trainer::{train_soft, SoftmaxModel, SourceClassifier, TrainConfig};

/// Shape and difficulty of a synthetic world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSpec {
    pub classes: usize,
    pub dim: usize,
    /// Standard deviation of the class-mean draws.
    pub mean_scale: f64,
    /// Within-class standard deviation.
    pub cov_scale: f64,
    /// Multiplier on the class means; larger is easier.
    pub separation: f64,
    /// Feature `j` is scaled by `ratio^(j/(dim-1))`, so the last axis is
    /// `ratio` times the first. Values below 1 make the student's problem
    /// ill-conditioned, and a fixed epoch budget then profits from more
    /// transfer samples.
    pub feature_scale_ratio: f64,
    pub out_of_universe: usize,
    /// Labelled samples generated per class for carving HC training sets.
    pub train_pool_per_class: usize,
    pub transfer_size: usize,
    pub adjustment_per_class: usize,
    pub test_per_class: usize,
    pub seed: u64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            classes: 8,
            dim: 10,
            mean_scale: 1.0,
            cov_scale: 1.0,
            separation: 1.0,
            feature_scale_ratio: 0.1,
            out_of_universe: 4,
            train_pool_per_class: 1000,
            transfer_size: 5000,
            adjustment_per_class: 50,
            test_per_class: 200,
            seed: 0,
        }
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.dim < 2 {
            return Err(UhcError::invalid("a world needs at least 2 classes and 2 dimensions"));
        }
        let scales = [self.mean_scale, self.cov_scale, self.separation];
        if scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(UhcError::invalid("scales and separation must be positive"));
        }
        if !(self.feature_scale_ratio > 0.0 && self.feature_scale_ratio <= 1.0) {
            return Err(UhcError::invalid("feature_scale_ratio must lie in (0, 1]"));
        }
        if self.test_per_class == 0 {
            return Err(UhcError::Sizing("test set must cover every class".into()));
        }
        Ok(())
    }

    pub fn total_classes(&self) -> usize {
        self.classes + self.out_of_universe
    }

    /// Name of class `k`; in-universe names are zero-padded so they sort in
    /// index order.
    pub fn class_name(&self, k: usize) -> String {
        let width = self.classes.max(self.out_of_universe).to_string().len();
        if k < self.classes {
            format!("c{k:0width$}")
        } else {
            format!("x{:0width$}", k - self.classes)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Transfer,
    Adjustment,
    Test,
}

impl Split {
    fn stream(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Transfer => 2,
            Split::Adjustment => 3,
            Split::Test => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub features: Vec<f64>,
    /// Index into all classes; values `>= classes` are out of universe.
    pub class: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub spec: WorldSpec,
    pub universe: ClassUniverse,
    pub means: Vec<Vec<f64>>,
    /// Labelled pool per in-universe class.
    pub train_pool: Vec<Vec<Sample>>,
    pub transfer: Vec<Sample>,
    pub adjustment: Vec<Sample>,
    pub test: Vec<Sample>,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn draw(rng: &mut ChaCha8Rng, mean: &[f64], scale: f64) -> Vec<f64> {
    mean.iter()
        .map(|m| {
            let e: f64 = StandardNormal.sample(rng);
            m + scale * e
        })
        .collect()
}

impl WorldSpec {
    fn feature_scales(&self) -> Vec<f64> {
        let last = (self.dim - 1) as f64;
        (0..self.dim).map(|j| self.feature_scale_ratio.powf(j as f64 / last)).collect()
    }
}

fn scaled(mut x: Vec<f64>, scales: &[f64]) -> Vec<f64> {
    x.iter_mut().zip(scales).for_each(|(v, s)| *v *= s);
    x
}

fn per_class(spec: &WorldSpec, means: &[Vec<f64>], split: Split, n: usize) -> Vec<Sample> {
    let mut rng = rng_for(spec.seed, split.stream());
    let tag = format!("{split:?}").to_lowercase();
    let scales = spec.feature_scales();
    let mut out = Vec::with_capacity(n * spec.classes);
    for _ in 0..n {
        for (k, mean) in means.iter().take(spec.classes).enumerate() {
            let features = scaled(draw(&mut rng, mean, spec.cov_scale), &scales);
            out.push(Sample { id: format!("{tag}-{}", out.len()), features, class: k });
        }
    }
    out
}

pub fn generate_world(spec: &WorldSpec) -> Result<World> {
    spec.validate()?;
    let names: Vec<String> = (0..spec.classes).map(|k| spec.class_name(k)).collect();
    let universe = ClassUniverse::new(names)?;

    let mut rng = rng_for(spec.seed, 0);
    let centre = vec![0.0; spec.dim];
    let means: Vec<Vec<f64>> = (0..spec.total_classes())
        .map(|_| draw(&mut rng, &centre, spec.mean_scale).into_iter().map(|m| m * spec.separation).collect())
        .collect();

    let mut train_pool: Vec<Vec<Sample>> = vec![Vec::with_capacity(spec.train_pool_per_class); spec.classes];
    for s in per_class(spec, &means, Split::Train, spec.train_pool_per_class) {
        train_pool[s.class].push(s);
    }

    let scales = spec.feature_scales();
    let mut rng = rng_for(spec.seed, Split::Transfer.stream());
    let transfer = (0..spec.transfer_size)
        .map(|i| {
            let class = rng.gen_range(0..spec.total_classes());
            let features = scaled(draw(&mut rng, &means[class], spec.cov_scale), &scales);
            Sample { id: format!("transfer-{i}"), features, class }
        })
        .collect();

    Ok(World {
        universe,
        train_pool,
        transfer,
        adjustment: per_class(spec, &means, Split::Adjustment, spec.adjustment_per_class),
        test: per_class(spec, &means, Split::Test, spec.test_per_class),
        means,
        spec: spec.clone(),
    })
}

pub(crate) fn unzip(samples: &[Sample]) -> (Vec<Vec<f64>>, Vec<usize>) {
    samples.iter().map(|s| (s.features.clone(), s.class)).unzip()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HCMode {
    /// Each HC draws its own random subset; together they cover the universe.
    RandomClasses,
    /// Every HC covers the whole universe.
    CompletelyOverlapping,
}

/// How source classifiers are assigned classes and training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HCConfigSpec {
    pub count: usize,
    pub min_classes: usize,
    pub max_classes: usize,
    pub mode: HCMode,
    pub min_samples: usize,
    pub max_samples: usize,
    /// Standard deviation of the private noise each HC sees on every input,
    /// so HCs err independently of each other on the same sample.
    pub view_noise: f64,
    pub seed: u64,
}

impl Default for HCConfigSpec {
    fn default() -> Self {
        Self {
            count: 5,
            min_classes: 3,
            max_classes: 5,
            mode: HCMode::RandomClasses,
            min_samples: 50,
            max_samples: 200,
            view_noise: 0.0,
            seed: 0,
        }
    }
}

const MAX_ASSIGNMENT_TRIES: usize = 10_000;

impl HCConfigSpec {
    pub fn validate(&self, classes: usize) -> Result<()> {
        if self.count == 0 {
            return Err(UhcError::invalid("need at least one HC"));
        }
        if !(self.view_noise.is_finite() && self.view_noise >= 0.0) {
            return Err(UhcError::invalid("view noise must be non-negative"));
        }
        if self.min_samples == 0 || self.min_samples > self.max_samples {
            return Err(UhcError::invalid("sample range must satisfy 0 < min <= max"));
        }
        if self.mode == HCMode::RandomClasses {
            if self.min_classes < 2 || self.min_classes > self.max_classes || self.max_classes > classes {
                return Err(UhcError::invalid(format!(
                    "class range {}..={} is not valid for {classes} classes",
                    self.min_classes, self.max_classes
                )));
            }
            if self.count * self.max_classes < classes {
                return Err(UhcError::Sizing(format!(
                    "{} HCs with at most {} classes cannot cover {classes} classes",
                    self.count, self.max_classes
                )));
            }
        }
        Ok(())
    }

    /// Class subsets for every HC, redrawn until they cover the universe.
    pub fn assign_subsets(&self, classes: usize) -> Result<Vec<ClassSubset>> {
        self.validate(classes)?;
        if self.mode == HCMode::CompletelyOverlapping {
            return (0..self.count).map(|_| ClassSubset::new(classes, 0..classes)).collect();
        }
        let mut rng = rng_for(self.seed, 0);
        let all: Vec<usize> = (0..classes).collect();
        for _ in 0..MAX_ASSIGNMENT_TRIES {
            let subsets: Vec<Vec<usize>> = (0..self.count)
                .map(|_| {
                    let k = rng.gen_range(self.min_classes..=self.max_classes);
                    all.choose_multiple(&mut rng, k).copied().collect()
                })
                .collect();
            let covered: HashSet<usize> = subsets.iter().flatten().copied().collect();
            if covered.len() == classes {
                return subsets.into_iter().map(|m| ClassSubset::new(classes, m)).collect();
            }
        }
        Err(UhcError::Sizing("could not draw a covering set of HC subsets".into()))
    }
}

/// Trained source classifiers with the ids of the samples each one saw.
#[derive(Debug, Clone, PartialEq)]
pub struct HCSet {
    pub classifiers: Vec<SourceClassifier>,
    pub train_ids: Vec<Vec<String>>,
    pub view_noise: f64,
    pub view_seed: u64,
}

fn noisy_view(sample: &Sample, scale: f64, seed: u64, hc: usize) -> Vec<f64> {
    if scale == 0.0 {
        return sample.features.clone();
    }
    let mut h = FnvHasher::default();
    h.write_u64(seed);
    h.write_usize(hc);
    h.write(sample.id.as_bytes());
    let mut rng = ChaCha8Rng::seed_from_u64(h.finish());
    draw(&mut rng, &sample.features, scale)
}

impl HCSet {
    /// What HC `hc` sees of `sample`; the same sample always gives the same view.
    pub fn view(&self, hc: usize, sample: &Sample) -> Vec<f64> {
        noisy_view(sample, self.view_noise, self.view_seed, hc)
    }

    pub fn predict(&self, hc: usize, sample: &Sample) -> HCPrediction {
        self.classifiers[hc].predict(&self.view(hc, sample))
    }

    /// Accuracy of HC `hc` on the samples of its own classes, through its view.
    pub fn accuracy(&self, hc: usize, samples: &[Sample]) -> f64 {
        let (x, y): (Vec<Vec<f64>>, Vec<usize>) = samples.iter().map(|s| (self.view(hc, s), s.class)).unzip();
        self.classifiers[hc].accuracy(&x, &y)
    }

    /// Labelled training data of every HC pooled, labels in universe indices.
    pub fn pooled_training_data(&self, world: &World) -> (Vec<Vec<f64>>, Vec<usize>) {
        let wanted: HashSet<&str> = self.train_ids.iter().flatten().map(String::as_str).collect();
        world.train_pool.iter().flatten().filter(|s| wanted.contains(s.id.as_str())).map(|s| (s.features.clone(), s.class)).unzip()
    }
}

/// Train one HC per subset on disjoint slices of the world's training pool.
pub fn train_hcs(world: &World, spec: &HCConfigSpec, config: &TrainConfig) -> Result<HCSet> {
    let classes = world.spec.classes;
    let subsets = spec.assign_subsets(classes)?;
    let mut rng = rng_for(spec.seed, 1);
    let mut cursor = vec![0usize; classes];
    let mut classifiers = Vec::with_capacity(subsets.len());
    let mut train_ids = Vec::with_capacity(subsets.len());
    let view_seed = spec.seed ^ 0x5eed_0f_u64;
    for (i, subset) in subsets.into_iter().enumerate() {
        let mut features = Vec::new();
        let mut targets = Vec::new();
        let mut ids = Vec::new();
        for (pos, &class) in subset.members().iter().enumerate() {
            let n = rng.gen_range(spec.min_samples..=spec.max_samples);
            let pool = &world.train_pool[class];
            let end = cursor[class] + n;
            if end > pool.len() {
                return Err(UhcError::Sizing(format!(
                    "class {} needs {end} training samples but the pool holds {}",
                    world.universe.label(class),
                    pool.len()
                )));
            }
            for s in &pool[cursor[class]..end] {
                let mut t = vec![0.0; subset.len()];
                t[pos] = 1.0;
                features.push(noisy_view(s, spec.view_noise, view_seed, i));
                targets.push(t);
                ids.push(s.id.clone());
            }
            cursor[class] = end;
        }
        let init = SoftmaxModel::random(subset.len(), world.spec.dim, 0.01, spec.seed.wrapping_add(i as u64));
        let cfg = TrainConfig { seed: config.seed.wrapping_add(i as u64), ..config.clone() };
        let model = train_soft(&init, &features, &targets, &cfg, None)?.model;
        classifiers.push(SourceClassifier::new(subset, model)?);
        train_ids.push(ids);
    }
    Ok(HCSet { classifiers, train_ids, view_noise: spec.view_noise, view_seed })
}

/// Add `scale` times a seeded standard-normal draw to every parameter.
pub fn perturb(model: &SoftmaxModel, scale: f64, seed: u64) -> SoftmaxModel {
    let dir = noise_direction(model.num_params(), seed);
    shifted(model, &dir, scale)
}

fn noise_direction(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn shifted(model: &SoftmaxModel, dir: &[f64], scale: f64) -> SoftmaxModel {
    let mut out = model.clone();
    if scale != 0.0 {
        let params: Vec<f64> = model.params().iter().zip(dir).map(|(p, d)| p + scale * d).collect();
        out.set_params(&params);
    }
    out
}

/// Band around the target accuracy accepted by [`degrade_to_accuracy`].
pub const ACCURACY_BAND: f64 = 0.01;
const BISECTION_ROUNDS: usize = 20;
const MAX_DOUBLINGS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct Degraded {
    pub classifier: SourceClassifier,
    pub noise_scale: f64,
    pub accuracy: f64,
}

/// Inject Gaussian noise of growing scale into every parameter until the
/// accuracy on the adjustment samples falls to `target`. The scale doubles
/// until the accuracy is at most `target + band`, then bisection narrows it
/// towards the band. Classifiers already at or below the target are returned
/// unchanged.
pub fn degrade_to_accuracy(
    hc: &SourceClassifier,
    target: f64,
    features: &[Vec<f64>],
    labels: &[usize],
    seed: u64,
) -> Result<Degraded> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(UhcError::invalid("target accuracy must lie in (0, 1]"));
    }
    let initial = hc.accuracy(features, labels);
    if initial <= target + ACCURACY_BAND {
        return Ok(Degraded { classifier: hc.clone(), noise_scale: 0.0, accuracy: initial });
    }
    let dir = noise_direction(hc.model.num_params(), seed);
    let eval = |scale: f64| {
        let c = SourceClassifier { subset: hc.subset.clone(), model: shifted(&hc.model, &dir, scale) };
        let acc = c.accuracy(features, labels);
        (c, acc)
    };
    let params = hc.model.params();
    let rms = (params.iter().map(|p| p * p).sum::<f64>() / params.len() as f64).sqrt();
    let mut lo = 0.0;
    let mut hi = 0.1 * if rms > 0.0 { rms } else { 1.0 };
    let mut best = eval(hi);
    let mut doublings = 0;
    while best.1 > target + ACCURACY_BAND && doublings < MAX_DOUBLINGS {
        lo = hi;
        hi *= 2.0;
        best = eval(hi);
        doublings += 1;
    }
    for _ in 0..BISECTION_ROUNDS {
        if (best.1 - target).abs() <= ACCURACY_BAND {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let trial = eval(mid);
        if trial.1 > target + ACCURACY_BAND {
            lo = mid;
        } else {
            hi = mid;
            best = trial;
        }
    }
    Ok(Degraded { classifier: best.0, noise_scale: hi, accuracy: best.1 })
}

/// One line of a dataset dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub features: Vec<f64>,
    pub label: Option<String>,
    pub split: Split,
}

impl World {
    /// Every sample as a record; transfer labels are withheld.
    pub fn records(&self) -> Vec<SampleRecord> {
        let rec = |s: &Sample, split: Split| SampleRecord {
            sample_id: s.id.clone(),
            features: s.features.clone(),
            label: (split != Split::Transfer).then(|| self.spec.class_name(s.class)),
            split,
        };
        let mut out: Vec<SampleRecord> = self.train_pool.iter().flatten().map(|s| rec(s, Split::Train)).collect();
        out.extend(self.transfer.iter().map(|s| rec(s, Split::Transfer)));
        out.extend(self.adjustment.iter().map(|s| rec(s, Split::Adjustment)));
        out.extend(self.test.iter().map(|s| rec(s, Split::Test)));
        out
    }
}

pub fn write_samples(path: &Path, records: &[SampleRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples(path: &Path) -> Result<Vec<SampleRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| UhcError::Parse { line: i + 1, message: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}
