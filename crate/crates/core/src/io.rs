//! JSON Lines exchange formats for source predictions and fused labels.
//!
//! A prediction file holds one record per (sample, classifier) pair:
//!
//! ```text
//! {"sample_id": "s1", "classifier_id": "hc0", "classes": ["cat", "dog"], "probs": [0.7, 0.3]}
//! ```
//!
//! `logits` may be given instead of, or alongside, `probs`. The universe is
//! the union of every class named in the file.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Result, UhcError};
use crate::label_model::{ClassSubset, ClassUniverse, Diagnostics, FusedLabel, HCPrediction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub sample_id: String,
    pub classifier_id: String,
    pub classes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits: Option<Vec<f64>>,
}

/// All predictions for one sample, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePredictions {
    pub sample_id: String,
    pub classifier_ids: Vec<String>,
    pub predictions: Vec<HCPrediction>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub universe: ClassUniverse,
    pub samples: Vec<SamplePredictions>,
}

fn parse_err(line: usize, message: impl Into<String>) -> UhcError {
    UhcError::Parse { line, message: message.into() }
}

/// Parse a prediction file. Malformed records are reported with their line
/// number.
pub fn read_predictions<R: BufRead>(reader: R) -> Result<PredictionSet> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PredictionRecord = serde_json::from_str(&line).map_err(|e| parse_err(i + 1, e.to_string()))?;
        records.push((i + 1, rec));
    }
    if records.is_empty() {
        return Err(UhcError::invalid("prediction file contains no records"));
    }
    let labels: BTreeSet<&str> = records.iter().flat_map(|(_, r)| r.classes.iter().map(String::as_str)).collect();
    let universe = ClassUniverse::new(labels)?;

    let mut order: HashMap<String, usize> = HashMap::new();
    let mut samples: Vec<SamplePredictions> = Vec::new();
    for (line, rec) in records {
        let subset = ClassSubset::from_labels(&universe, &rec.classes).map_err(|e| parse_err(line, e.to_string()))?;
        // subsets are sorted by universe index; reorder values to match
        let perm: Vec<usize> = subset.members().iter().map(|&m| rec.classes.iter().position(|c| universe.index_of(c) == Some(m)).unwrap()).collect();
        let reorder = |v: &Vec<f64>| -> Result<Vec<f64>> {
            if v.len() != rec.classes.len() {
                return Err(parse_err(line, format!("{} classes but {} values", rec.classes.len(), v.len())));
            }
            Ok(perm.iter().map(|&k| v[k]).collect())
        };
        let pred = match (&rec.probs, &rec.logits) {
            (Some(p), Some(z)) => HCPrediction::with_logits(subset, reorder(p)?, reorder(z)?),
            (Some(p), None) => HCPrediction::from_probs(subset, reorder(p)?),
            (None, Some(z)) => HCPrediction::from_logits(subset, reorder(z)?),
            (None, None) => return Err(parse_err(line, "record has neither probs nor logits")),
        }
        .map_err(|e| parse_err(line, e.to_string()))?;
        let idx = *order.entry(rec.sample_id.clone()).or_insert_with(|| {
            samples.push(SamplePredictions { sample_id: rec.sample_id.clone(), classifier_ids: Vec::new(), predictions: Vec::new() });
            samples.len() - 1
        });
        let entry = &mut samples[idx];
        if entry.classifier_ids.contains(&rec.classifier_id) {
            return Err(parse_err(line, format!("classifier {} repeated for sample {}", rec.classifier_id, rec.sample_id)));
        }
        entry.classifier_ids.push(rec.classifier_id);
        entry.predictions.push(pred);
    }
    Ok(PredictionSet { universe, samples })
}

pub fn write_predictions<W: Write>(mut writer: W, records: &[PredictionRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// One line of a fused-label file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedRecord {
    pub sample_id: String,
    pub method: String,
    pub classes: Vec<String>,
    pub q: Vec<f64>,
    pub diagnostics: Diagnostics,
}

impl FusedRecord {
    pub fn new(sample_id: &str, universe: &ClassUniverse, fused: FusedLabel) -> Self {
        Self {
            sample_id: sample_id.to_string(),
            method: fused.method.name().to_string(),
            classes: universe.labels().to_vec(),
            q: fused.q,
            diagnostics: fused.diagnostics,
        }
    }
}

pub fn write_fused<W: Write>(mut writer: W, records: &[FusedRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_fused<R: BufRead>(reader: R) -> Result<Vec<FusedRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line).map_err(|e| parse_err(i + 1, e.to_string()))?);
        }
    }
    Ok(out)
}
