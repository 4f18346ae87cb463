//! Random instance generators shared by the integration tests.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use uhc::{build_profile, restrict, ClassSubset, ClassUniverse, HCPrediction, PredictionProfile};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn universe(classes: usize) -> ClassUniverse {
    ClassUniverse::new((0..classes).map(|l| format!("k{l}"))).unwrap()
}

/// Dirichlet(alpha, ..., alpha) draw.
pub fn dirichlet(rng: &mut ChaCha8Rng, classes: usize, alpha: f64) -> Vec<f64> {
    let g = Gamma::new(alpha, 1.0).unwrap();
    let raw: Vec<f64> = (0..classes).map(|_| g.sample(rng).max(1e-300)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

/// Random subsets of size `2..=classes` that together cover every class.
pub fn covering_subsets(rng: &mut ChaCha8Rng, classes: usize, count: usize) -> Vec<Vec<usize>> {
    loop {
        let subsets: Vec<Vec<usize>> = (0..count)
            .map(|_| {
                let size = rng.gen_range(2..=classes);
                let mut all: Vec<usize> = (0..classes).collect();
                all.shuffle(rng);
                let mut s = all[..size].to_vec();
                s.sort_unstable();
                s
            })
            .collect();
        let mut covered = vec![false; classes];
        subsets.iter().flatten().for_each(|&l| covered[l] = true);
        if covered.iter().all(|&c| c) {
            return subsets;
        }
    }
}

/// Subsets whose overlap graph is connected: each new subset shares at least
/// one class with an earlier one.
pub fn connected_subsets(rng: &mut ChaCha8Rng, classes: usize, count: usize) -> Vec<Vec<usize>> {
    loop {
        let subsets = covering_subsets(rng, classes, count);
        let mut reached = vec![false; count];
        reached[0] = true;
        let mut changed = true;
        while changed {
            changed = false;
            for i in 0..count {
                if !reached[i] && (0..count).any(|j| reached[j] && subsets[i].iter().any(|l| subsets[j].contains(l))) {
                    reached[i] = true;
                    changed = true;
                }
            }
        }
        if reached.iter().all(|&r| r) {
            return subsets;
        }
    }
}

/// Every classifier reports the exact restriction of `pbar`.
pub fn consistent_profile(pbar: &[f64], subsets: &[Vec<usize>]) -> PredictionProfile {
    let l = pbar.len();
    let preds: Vec<HCPrediction> = subsets
        .iter()
        .map(|m| {
            let s = ClassSubset::new(l, m.clone()).unwrap();
            let p = restrict(pbar, &s).unwrap();
            HCPrediction::from_probs(s, p).unwrap()
        })
        .collect();
    build_profile(&preds, &universe(l), 1.0).unwrap()
}

/// Classifiers with independent Gaussian logits.
pub fn random_profile(rng: &mut ChaCha8Rng, classes: usize, count: usize, spread: f64) -> PredictionProfile {
    let preds: Vec<HCPrediction> = covering_subsets(rng, classes, count)
        .into_iter()
        .map(|m| {
            let z: Vec<f64> = m.iter().map(|_| spread * rng.sample::<f64, _>(StandardNormal)).collect();
            HCPrediction::from_logits(ClassSubset::new(classes, m).unwrap(), z).unwrap()
        })
        .collect();
    build_profile(&preds, &universe(classes), 1.0).unwrap()
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn on_simplex(q: &[f64], tol: f64) -> bool {
    q.iter().all(|&x| x >= 0.0) && (q.iter().sum::<f64>() - 1.0).abs() <= tol
}
