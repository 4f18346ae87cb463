//! Class universes, per-classifier predictions and the masked prediction
//! matrices every fusion method consumes.
//!
//! A [`PredictionProfile`] stores three `L x N` matrices (classes by
//! classifiers): the temperature-smoothed probabilities `P`, the smoothed and
//! column-centred logits `Z`, and the coverage mask `M`. Entries outside the
//! mask are exactly zero in both `P` and `Z`.

use std::borrow::Cow;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, UhcError};

/// Floor applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Simplex tolerance for classifier outputs.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// The ordered set of class labels a unified classifier predicts over.
///
/// Labels are kept in sorted order so matrix layouts are identical across
/// runs regardless of the order classes were first seen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassUniverse {
    labels: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl ClassUniverse {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(UhcError::invalid("class universe must not be empty"));
        }
        labels.sort();
        for pair in labels.windows(2) {
            if pair[0] == pair[1] {
                return Err(UhcError::invalid(format!("duplicate class label '{}'", pair[0])));
            }
        }
        let index = labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        Ok(Self { labels, index })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        if self.index.is_empty() {
            // deserialised instance; index map was skipped
            return self.labels.binary_search_by(|l| l.as_str().cmp(label)).ok();
        }
        self.index.get(label).copied()
    }

    /// Subset over the full universe.
    pub fn full_subset(&self) -> ClassSubset {
        ClassSubset {
            universe_size: self.len(),
            members: (0..self.len()).collect(),
        }
    }
}

/// A non-empty sorted set of class indices into a universe of a given size.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClassSubset {
    universe_size: usize,
    members: Vec<usize>,
}

impl ClassSubset {
    pub fn new(universe_size: usize, members: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut members: Vec<usize> = members.into_iter().collect();
        members.sort_unstable();
        members.dedup();
        if members.is_empty() {
            return Err(UhcError::invalid("class subset must not be empty"));
        }
        if let Some(&bad) = members.iter().find(|&&m| m >= universe_size) {
            return Err(UhcError::invalid(format!(
                "class index {bad} out of range for universe of size {universe_size}"
            )));
        }
        Ok(Self { universe_size, members })
    }

    pub fn from_labels<S: AsRef<str>>(universe: &ClassUniverse, labels: &[S]) -> Result<Self> {
        let mut members = Vec::with_capacity(labels.len());
        for label in labels {
            let label = label.as_ref();
            let idx = universe
                .index_of(label)
                .ok_or_else(|| UhcError::invalid(format!("unknown class label '{label}'")))?;
            members.push(idx);
        }
        let subset = Self::new(universe.len(), members)?;
        if subset.len() != labels.len() {
            return Err(UhcError::invalid("duplicate class labels in subset"));
        }
        Ok(subset)
    }

    pub fn universe_size(&self) -> usize {
        self.universe_size
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, class: usize) -> bool {
        self.members.binary_search(&class).is_ok()
    }

    /// Position of a universe class within this subset.
    pub fn position(&self, class: usize) -> Option<usize> {
        self.members.binary_search(&class).ok()
    }

    /// Classes of the universe outside this subset.
    pub fn complement(&self) -> Vec<usize> {
        (0..self.universe_size).filter(|c| !self.contains(*c)).collect()
    }
}

/// One classifier's output on one sample, over its own class subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HCPrediction {
    subset: ClassSubset,
    probs: Vec<f64>,
    logits: Option<Vec<f64>>,
}

impl HCPrediction {
    pub fn from_probs(subset: ClassSubset, probs: Vec<f64>) -> Result<Self> {
        check_simplex(&probs, subset.len())?;
        Ok(Self { subset, probs, logits: None })
    }

    pub fn from_logits(subset: ClassSubset, logits: Vec<f64>) -> Result<Self> {
        if logits.len() != subset.len() {
            return Err(UhcError::invalid(format!(
                "expected {} logits, got {}",
                subset.len(),
                logits.len()
            )));
        }
        let probs = softmax_t(&logits, 1.0)?;
        Ok(Self { subset, probs, logits: Some(logits) })
    }

    /// Both probabilities and logits supplied; probabilities are validated and
    /// logits must be finite.
    pub fn with_logits(subset: ClassSubset, probs: Vec<f64>, logits: Vec<f64>) -> Result<Self> {
        check_simplex(&probs, subset.len())?;
        if logits.len() != subset.len() || logits.iter().any(|z| !z.is_finite()) {
            return Err(UhcError::invalid("logits must be finite and match the subset size"));
        }
        Ok(Self { subset, probs, logits: Some(logits) })
    }

    pub fn subset(&self) -> &ClassSubset {
        &self.subset
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn has_logits(&self) -> bool {
        self.logits.is_some()
    }

    /// Supplied logits, or `log(max(p, floor))` when only probabilities are known.
    pub fn logits(&self) -> Cow<'_, [f64]> {
        match &self.logits {
            Some(z) => Cow::Borrowed(z),
            None => Cow::Owned(self.probs.iter().map(|p| p.max(PROB_FLOOR).ln()).collect()),
        }
    }
}

fn check_simplex(probs: &[f64], expected_len: usize) -> Result<()> {
    if probs.len() != expected_len {
        return Err(UhcError::invalid(format!(
            "expected {expected_len} probabilities, got {}",
            probs.len()
        )));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(UhcError::invalid("probabilities must be finite and non-negative"));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(UhcError::invalid(format!("probabilities sum to {sum}, not 1")));
    }
    Ok(())
}

/// Dense column-major matrix; rows are classes, columns are classifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Build from a list of columns.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(UhcError::invalid("ragged matrix columns"));
        }
        Ok(Self { rows, cols, data: columns.concat() })
    }

    /// Build from nested rows, `rows[l][i]`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(UhcError::invalid("ragged matrix rows"));
        }
        let mut m = Self::zeros(n_rows, n_cols);
        for (l, row) in rows.iter().enumerate() {
            for (i, &x) in row.iter().enumerate() {
                m.set(l, i, x);
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[col * self.rows + row]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[col * self.rows + row] = value;
    }

    #[inline]
    pub fn column(&self, col: usize) -> &[f64] {
        &self.data[col * self.rows..(col + 1) * self.rows]
    }

    #[inline]
    pub fn column_mut(&mut self, col: usize) -> &mut [f64] {
        &mut self.data[col * self.rows..(col + 1) * self.rows]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Masked prediction matrices for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionProfile {
    p: Matrix,
    z: Matrix,
    mask: Matrix,
    members: Vec<Vec<usize>>,
}

impl PredictionProfile {
    /// Assemble a profile from raw matrices, checking every structural
    /// invariant: binary mask, zeros off-mask, unit-sum masked columns of
    /// `P`, and full row coverage.
    pub fn new(p: Matrix, z: Matrix, mask: Matrix) -> Result<Self> {
        let (rows, cols) = (mask.rows(), mask.cols());
        if rows == 0 || cols == 0 {
            return Err(UhcError::invalid("profile must have at least one class and one classifier"));
        }
        if p.rows() != rows || p.cols() != cols || z.rows() != rows || z.cols() != cols {
            return Err(UhcError::invalid("P, Z and M must share dimensions"));
        }
        let mut members = Vec::with_capacity(cols);
        for i in 0..cols {
            let mut col_members = Vec::new();
            let mut sum = 0.0;
            for l in 0..rows {
                let m = mask.get(l, i);
                if m == 1.0 {
                    col_members.push(l);
                    let pv = p.get(l, i);
                    if !(0.0..=1.0).contains(&pv) {
                        return Err(UhcError::invalid(format!("P[{l},{i}] = {pv} outside [0,1]")));
                    }
                    if !z.get(l, i).is_finite() {
                        return Err(UhcError::invalid(format!("Z[{l},{i}] is not finite")));
                    }
                    sum += pv;
                } else if m == 0.0 {
                    if p.get(l, i) != 0.0 || z.get(l, i) != 0.0 {
                        return Err(UhcError::invalid(format!("entry [{l},{i}] is outside the mask but nonzero")));
                    }
                } else {
                    return Err(UhcError::invalid("mask entries must be 0 or 1"));
                }
            }
            if col_members.is_empty() {
                return Err(UhcError::invalid(format!("classifier {i} covers no classes")));
            }
            if (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(UhcError::invalid(format!("column {i} of P sums to {sum}")));
            }
            members.push(col_members);
        }
        let uncovered: Vec<String> = (0..rows)
            .filter(|&l| (0..cols).all(|i| mask.get(l, i) == 0.0))
            .map(|l| format!("#{l}"))
            .collect();
        if !uncovered.is_empty() {
            return Err(UhcError::Coverage(uncovered));
        }
        Ok(Self { p, z, mask, members })
    }

    /// Profile with `Z` derived from `P` as centred floored log-probabilities.
    pub fn from_probabilities(p: Matrix, mask: Matrix) -> Result<Self> {
        let mut z = Matrix::zeros(p.rows(), p.cols());
        for i in 0..p.cols() {
            let idx: Vec<usize> = (0..p.rows()).filter(|&l| mask.get(l, i) == 1.0).collect();
            let logs: Vec<f64> = idx.iter().map(|&l| p.get(l, i).max(PROB_FLOOR).ln()).collect();
            let mean = logs.iter().sum::<f64>() / logs.len().max(1) as f64;
            for (&l, lg) in idx.iter().zip(&logs) {
                z.set(l, i, lg - mean);
            }
        }
        Self::new(p, z, mask)
    }

    pub fn num_classes(&self) -> usize {
        self.mask.rows()
    }

    pub fn num_classifiers(&self) -> usize {
        self.mask.cols()
    }

    pub fn p(&self) -> &Matrix {
        &self.p
    }

    pub fn z(&self) -> &Matrix {
        &self.z
    }

    pub fn mask(&self) -> &Matrix {
        &self.mask
    }

    /// Classes covered by classifier `i`, ascending.
    pub fn members(&self, i: usize) -> &[usize] {
        &self.members[i]
    }

    /// Masked entries of column `i` of `P`, in member order.
    pub fn column_probs(&self, i: usize) -> Vec<f64> {
        self.members[i].iter().map(|&l| self.p.get(l, i)).collect()
    }

    /// True when every class is linked to every other through chains of
    /// classifiers that share classes.
    pub fn overlap_connected(&self) -> bool {
        let n = self.num_classes();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for members in &self.members {
            let first = members[0];
            for &l in &members[1..] {
                let (a, b) = (find(&mut parent, first), find(&mut parent, l));
                if a != b {
                    parent[a] = b;
                }
            }
        }
        let root = find(&mut parent, 0);
        (1..n).all(|l| find(&mut parent, l) == root)
    }
}

/// Which fusion produced a label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionKind {
    Sd,
    Ce,
    MfProb,
    MfLogitFree,
    MfLogitFixed,
}

impl FusionKind {
    pub fn name(self) -> &'static str {
        match self {
            FusionKind::Sd => "sd",
            FusionKind::Ce => "ce",
            FusionKind::MfProb => "mf-p",
            FusionKind::MfLogitFree => "mf-lv",
            FusionKind::MfLogitFixed => "mf-lf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverWarning {
    /// Class-overlap graph is disconnected; the optimum is not unique.
    DisconnectedOverlap,
    /// Free-scale logit factorisation configured without regularisation.
    UnregularisedFreeScale,
    /// Factor collapsed to zero; a uniform label was returned.
    DegenerateFactor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Closed,
    /// Successive iterates moved less than the RMSE tolerance.
    Converged,
    GradientTolerance,
    ObjectiveStall,
    StepTolerance,
    MaxIterations,
    Degenerate,
}

impl StopReason {
    /// Whether the solver stopped on one of its convergence rules rather than
    /// an iteration cap or a breakdown.
    pub fn is_converged(self) -> bool {
        matches!(
            self,
            StopReason::Closed | StopReason::GradientTolerance | StopReason::ObjectiveStall | StopReason::Converged
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub final_objective: f64,
    pub converged: bool,
    pub stop_reason: StopReason,
    /// Infinity norm of the final gradient, for gradient-based solvers.
    pub grad_norm: Option<f64>,
    /// Coordinate updates skipped because their denominator vanished.
    pub zero_denominators: usize,
    /// Non-negativity projections that actually changed a value.
    pub projections_applied: usize,
    pub warnings: Vec<SolverWarning>,
}

impl Diagnostics {
    pub fn closed_form(objective: f64) -> Self {
        Self {
            iterations: 0,
            final_objective: objective,
            converged: true,
            stop_reason: StopReason::Closed,
            grad_norm: None,
            zero_denominators: 0,
            projections_applied: 0,
            warnings: Vec::new(),
        }
    }
}

/// Estimated distribution over the full class universe for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedLabel {
    pub q: Vec<f64>,
    pub method: FusionKind,
    pub diagnostics: Diagnostics,
}

impl AsRef<[f64]> for FusedLabel {
    fn as_ref(&self) -> &[f64] {
        &self.q
    }
}

/// Softmax of `logits / temperature`, computed with max subtraction.
pub fn softmax_t(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(UhcError::invalid(format!("temperature must be positive, got {temperature}")));
    }
    if logits.is_empty() {
        return Err(UhcError::invalid("softmax of an empty vector"));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(UhcError::invalid("logits must be finite"));
    }
    let mut out: Vec<f64> = logits.iter().map(|z| z / temperature).collect();
    softmax_in_place(&mut out);
    Ok(out)
}

/// Unchecked in-place softmax used by the solvers.
#[inline]
pub(crate) fn softmax_in_place(x: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

/// Renormalise a distribution over the universe onto a subset of classes.
pub fn restrict(q: &[f64], subset: &ClassSubset) -> Result<Vec<f64>> {
    if q.len() != subset.universe_size() {
        return Err(UhcError::invalid(format!(
            "distribution has {} entries, universe has {}",
            q.len(),
            subset.universe_size()
        )));
    }
    let mass: f64 = subset.members().iter().map(|&l| q[l]).sum();
    if !(mass > 0.0) {
        return Err(UhcError::DegenerateRestriction);
    }
    Ok(subset.members().iter().map(|&l| q[l] / mass).collect())
}

/// Stack per-classifier predictions for one sample into a profile, applying
/// the temperature to logits once.
///
/// At `temperature == 1` supplied probabilities are copied verbatim into `P`;
/// otherwise `P` is the softmax of the smoothed logits. Each masked column of
/// `Z` is shifted to zero mean.
pub fn build_profile(
    predictions: &[HCPrediction],
    universe: &ClassUniverse,
    temperature: f64,
) -> Result<PredictionProfile> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(UhcError::invalid(format!("temperature must be positive, got {temperature}")));
    }
    if predictions.is_empty() {
        return Err(UhcError::invalid("no predictions supplied"));
    }
    let l_count = universe.len();
    let n = predictions.len();
    let mut covered = vec![false; l_count];
    for pred in predictions {
        if pred.subset().universe_size() != l_count {
            return Err(UhcError::invalid("prediction subset belongs to a different universe"));
        }
        for &l in pred.subset().members() {
            covered[l] = true;
        }
    }
    let uncovered: Vec<String> = covered
        .iter()
        .enumerate()
        .filter(|(_, c)| !**c)
        .map(|(l, _)| universe.label(l).to_string())
        .collect();
    if !uncovered.is_empty() {
        return Err(UhcError::Coverage(uncovered));
    }

    let mut p = Matrix::zeros(l_count, n);
    let mut z = Matrix::zeros(l_count, n);
    let mut mask = Matrix::zeros(l_count, n);
    let mut members = Vec::with_capacity(n);
    for (i, pred) in predictions.iter().enumerate() {
        let idx = pred.subset().members();
        let smoothed: Vec<f64> = pred.logits().iter().map(|zl| zl / temperature).collect();
        let probs: Cow<'_, [f64]> = if temperature == 1.0 && !pred.has_logits() {
            Cow::Borrowed(pred.probs())
        } else {
            let mut s = smoothed.clone();
            softmax_in_place(&mut s);
            Cow::Owned(s)
        };
        let mean = smoothed.iter().sum::<f64>() / smoothed.len() as f64;
        for (k, &l) in idx.iter().enumerate() {
            mask.set(l, i, 1.0);
            p.set(l, i, probs[k]);
            z.set(l, i, smoothed[k] - mean);
        }
        members.push(idx.to_vec());
    }
    Ok(PredictionProfile { p, z, mask, members })
}
