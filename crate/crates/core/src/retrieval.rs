//! Query-by-example ranking and MKNN labeling of unlabeled index entries.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::extract_features_from_path;
use crate::metrics::squared_distance;
use crate::mknn::{ClassifierConfig, MknnClassifier, TrainSample};
use crate::store::{quantize_vector, EntryLabel, ImageIndex, IndexEntry};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedResult {
    pub id: String,
    pub distance: f64,
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelAssignment {
    pub id: String,
    pub assigned_label: String,
    pub confidence: f64,
}

fn by_distance_then_id(a: &(f64, &IndexEntry), b: &(f64, &IndexEntry)) -> Ordering {
    a.0.total_cmp(&b.0).then_with(|| a.1.id.cmp(&b.1.id))
}

/// Ranks index entries by distance to `query`, nearest first, ties by id.
/// `exclude` leaves one entry out (used when the query is itself indexed).
pub fn rank_vector(
    index: &ImageIndex,
    query: &[f64],
    top_n: usize,
    exclude: Option<&str>,
) -> Result<Vec<RankedResult>> {
    if index.is_empty() {
        return Err(Error::Input("index is empty".into()));
    }
    if top_n == 0 {
        return Err(Error::Input("top_n must be at least 1".into()));
    }
    let dim = index.params().vector_len();
    if query.len() != dim {
        return Err(Error::DimensionMismatch {
            left: query.len(),
            right: dim,
        });
    }
    let mut scored: Vec<(f64, &IndexEntry)> = index
        .entries()
        .iter()
        .filter(|e| Some(e.id.as_str()) != exclude)
        .map(|e| (squared_distance(&e.vector, query).sqrt(), e))
        .collect();
    if top_n < scored.len() {
        scored.select_nth_unstable_by(top_n - 1, by_distance_then_id);
        scored.truncate(top_n);
    }
    scored.sort_by(by_distance_then_id);
    Ok(scored
        .into_iter()
        .map(|(distance, e)| RankedResult {
            id: e.id.clone(),
            distance,
            label: e.label_name().map(str::to_owned),
        })
        .collect())
}

/// Extracts features from the image at `query_image` with the index's own
/// parameters and returns the `top_n` nearest entries.
pub fn query_by_example(
    index: &ImageIndex,
    query_image: &Path,
    top_n: usize,
) -> Result<Vec<RankedResult>> {
    if index.is_empty() {
        return Err(Error::Input("index is empty".into()));
    }
    let fv = extract_features_from_path(query_image, index.params())?;
    // stored vectors are rounded to file precision; round the query the same
    // way so an indexed image matches itself at distance zero
    rank_vector(index, &quantize_vector(fv.values()), top_n, None)
}

/// Classifies every unlabeled entry with MKNN trained on the entries that
/// carry original labels. Returns the assignments and a new index in which
/// the assigned labels are marked as such and the training entries carry
/// their validity.
pub fn label_unlabeled(
    index: &ImageIndex,
    config: &ClassifierConfig,
) -> Result<(Vec<LabelAssignment>, ImageIndex)> {
    let unlabeled: Vec<&IndexEntry> = index
        .entries()
        .iter()
        .filter(|e| e.label.is_none())
        .collect();
    if unlabeled.is_empty() {
        return Ok((Vec::new(), index.clone()));
    }

    // validities are always recomputed for the requested h
    let train: Vec<_> = index
        .train_samples(true)
        .into_iter()
        .map(|s| TrainSample::new(s.id, s.vector, s.label))
        .collect();
    let needed = (config.h + 1).max(config.k);
    if train.len() < needed {
        return Err(Error::Config(format!(
            "labeling with k={} h={} needs at least {needed} labeled entries, index has {}",
            config.k,
            config.h,
            train.len()
        )));
    }
    let classifier = MknnClassifier::fit(train, *config)?;

    let assignments = unlabeled
        .par_iter()
        .map(|e| {
            let c = classifier.classify(&e.vector)?;
            Ok(LabelAssignment {
                id: e.id.clone(),
                assigned_label: c.predicted_label,
                confidence: c.confidence,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let validity: HashMap<&str, f64> = classifier
        .samples()
        .iter()
        .map(|s| (s.id.as_str(), s.validity().expect("fitted")))
        .collect();
    let assigned: HashMap<&str, &str> = assignments
        .iter()
        .map(|a| (a.id.as_str(), a.assigned_label.as_str()))
        .collect();
    let entries = index
        .entries()
        .iter()
        .map(|e| {
            let mut e = e.clone();
            if let Some(label) = assigned.get(e.id.as_str()) {
                e.label = Some(EntryLabel::assigned(*label));
            } else if let Some(v) = validity.get(e.id.as_str()) {
                e.validity = Some(*v);
            }
            e
        })
        .collect();
    Ok((assignments, ImageIndex::new(index.params(), entries)?))
}
