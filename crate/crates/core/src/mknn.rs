//! Modified k-nearest-neighbor classification.
//!
//! Training happens in two steps. First every labeled sample receives a
//! validity score: the fraction of its `h` nearest other samples that carry
//! the same label. A query is then classified from its `k` nearest samples,
//! each voting with weight `validity / (distance + 0.5)`, and the class with
//! the largest summed weight wins.
//!
//! Nearest-neighbor search is exhaustive. Equal distances are ordered by
//! ascending sample id, and equal class totals go to the lexicographically
//! smallest label, so results never depend on the order of the training
//! set.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::squared_distance;

/// Added to the distance before inverting it in the vote weight.
pub const WEIGHT_OFFSET: f64 = 0.5;

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    /// Voting neighbors.
    pub k: usize,
    /// Neighbors considered when computing validity.
    pub h: usize,
}

impl ClassifierConfig {
    /// `h` defaults to `k`.
    pub fn new(k: usize) -> Self {
        Self { k, h: k }
    }

    pub fn with_h(mut self, h: usize) -> Self {
        self.h = h;
        self
    }

    pub fn weight_offset(&self) -> f64 {
        WEIGHT_OFFSET
    }
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self::new(DEFAULT_K)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub id: String,
    pub vector: Vec<f64>,
    pub label: String,
    validity: Option<f64>,
}

impl TrainSample {
    pub fn new(id: impl Into<String>, vector: Vec<f64>, label: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            vector,
            label: label.into(),
            validity: None,
        }
    }

    pub fn validity(&self) -> Option<f64> {
        self.validity
    }

    /// Attaches a precomputed validity, e.g. one read back from an index.
    pub fn with_validity(mut self, validity: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&validity) {
            return Err(Error::Input(format!(
                "validity of {} must lie in [0, 1], got {validity}",
                self.id
            )));
        }
        self.validity = Some(validity);
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeighborVote {
    pub sample_id: String,
    pub label: String,
    pub distance: f64,
    pub validity: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub predicted_label: String,
    /// Voters in ascending distance order.
    pub votes: Vec<NeighborVote>,
    pub per_class_totals: BTreeMap<String, f64>,
    /// Winning total over the sum of all totals; zero when every voter has
    /// zero weight.
    pub confidence: f64,
}

#[inline]
pub fn neighbor_weight(validity: f64, distance: f64) -> f64 {
    validity * (1.0 / (distance + WEIGHT_OFFSET))
}

fn neighbor_order(train: &[TrainSample], a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    a.1.total_cmp(&b.1)
        .then_with(|| train[a.0].id.cmp(&train[b.0].id))
        .then_with(|| a.0.cmp(&b.0))
}

/// Indices and distances of the `count` samples nearest to `query`,
/// optionally skipping one index. Callers guarantee matching dimensions.
fn nearest(
    train: &[TrainSample],
    query: &[f64],
    count: usize,
    skip: Option<usize>,
) -> Vec<(usize, f64)> {
    let mut cands: Vec<(usize, f64)> = train
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != skip)
        .map(|(i, s)| (i, squared_distance(&s.vector, query).sqrt()))
        .collect();
    let cmp = |a: &(usize, f64), b: &(usize, f64)| neighbor_order(train, a, b);
    if count < cands.len() {
        if count == 0 {
            return Vec::new();
        }
        cands.select_nth_unstable_by(count - 1, cmp);
        cands.truncate(count);
    }
    cands.sort_by(cmp);
    cands
}

fn check_dims(train: &[TrainSample], dim: usize) -> Result<()> {
    match train.iter().find(|s| s.vector.len() != dim) {
        Some(s) => Err(Error::DimensionMismatch {
            left: dim,
            right: s.vector.len(),
        }),
        None => Ok(()),
    }
}

/// Fills in the validity of every sample from its `h` nearest other samples.
pub fn validate_samples(train: &mut [TrainSample], h: usize) -> Result<()> {
    if h == 0 {
        return Err(Error::Config("h must be at least 1".into()));
    }
    if train.len() <= h {
        return Err(Error::Config(format!(
            "validity with h={h} needs at least {} training samples, got {}",
            h + 1,
            train.len()
        )));
    }
    if let Some(s) = train.iter().find(|s| s.label.is_empty()) {
        return Err(Error::Input(format!(
            "training sample {} has no label",
            s.id
        )));
    }
    let mut seen = HashSet::with_capacity(train.len());
    if let Some(s) = train.iter().find(|s| !seen.insert(s.id.as_str())) {
        return Err(Error::Input(format!(
            "duplicate training sample id {}",
            s.id
        )));
    }
    check_dims(train, train[0].vector.len())?;

    let snapshot: &[TrainSample] = train;
    let validities: Vec<f64> = (0..snapshot.len())
        .into_par_iter()
        .map(|i| {
            let own = &snapshot[i].label;
            let same = nearest(snapshot, &snapshot[i].vector, h, Some(i))
                .iter()
                .filter(|(j, _)| snapshot[*j].label == *own)
                .count();
            same as f64 / h as f64
        })
        .collect();
    for (s, v) in train.iter_mut().zip(validities) {
        s.validity = Some(v);
    }
    Ok(())
}

fn check_query(train: &[TrainSample], query: &[f64], k: usize) -> Result<()> {
    if train.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    if k == 0 || k > train.len() {
        return Err(Error::Config(format!(
            "k must be in [1, {}] for this training set, got {k}",
            train.len()
        )));
    }
    check_dims(train, query.len())
}

/// Picks the label with the largest total; ties go to the smallest label.
fn decide(votes: Vec<NeighborVote>) -> Classification {
    let mut totals: BTreeMap<String, f64> = BTreeMap::new();
    for v in &votes {
        *totals.entry(v.label.clone()).or_insert(0.0) += v.weight;
    }
    let (winner, best) = totals
        .iter()
        .fold(None::<(&String, f64)>, |acc, (label, &t)| match acc {
            Some((_, b)) if t <= b => acc,
            _ => Some((label, t)),
        })
        .expect("at least one vote");
    let sum: f64 = totals.values().sum();
    let confidence = if sum > 0.0 { best / sum } else { 0.0 };
    Classification {
        predicted_label: winner.clone(),
        votes,
        per_class_totals: totals,
        confidence,
    }
}

pub fn classify_mknn(
    train: &[TrainSample],
    query: &[f64],
    config: &ClassifierConfig,
) -> Result<Classification> {
    check_query(train, query, config.k)?;
    if train.iter().any(|s| s.validity.is_none()) {
        return Err(Error::NotValidated);
    }
    let votes = nearest(train, query, config.k, None)
        .into_iter()
        .map(|(i, distance)| {
            let s = &train[i];
            let validity = s.validity.expect("checked above");
            NeighborVote {
                sample_id: s.id.clone(),
                label: s.label.clone(),
                distance,
                validity,
                weight: neighbor_weight(validity, distance),
            }
        })
        .collect();
    Ok(decide(votes))
}

/// Plain majority vote among the `k` nearest samples. Every vote carries
/// unit weight and validity is ignored.
pub fn classify_knn(train: &[TrainSample], query: &[f64], k: usize) -> Result<Classification> {
    check_query(train, query, k)?;
    if let Some(s) = train.iter().find(|s| s.label.is_empty()) {
        return Err(Error::Input(format!(
            "training sample {} has no label",
            s.id
        )));
    }
    let votes = nearest(train, query, k, None)
        .into_iter()
        .map(|(i, distance)| NeighborVote {
            sample_id: train[i].id.clone(),
            label: train[i].label.clone(),
            distance,
            validity: 1.0,
            weight: 1.0,
        })
        .collect();
    Ok(decide(votes))
}

/// A validated training set bundled with its configuration.
#[derive(Debug, Clone)]
pub struct MknnClassifier {
    train: Vec<TrainSample>,
    config: ClassifierConfig,
}

impl MknnClassifier {
    pub fn fit(mut train: Vec<TrainSample>, config: ClassifierConfig) -> Result<Self> {
        validate_samples(&mut train, config.h)?;
        if config.k == 0 || config.k > train.len() {
            return Err(Error::Config(format!(
                "k must be in [1, {}] for this training set, got {}",
                train.len(),
                config.k
            )));
        }
        Ok(Self { train, config })
    }

    pub fn samples(&self) -> &[TrainSample] {
        &self.train
    }

    pub fn config(&self) -> ClassifierConfig {
        self.config
    }

    pub fn classify(&self, query: &[f64]) -> Result<Classification> {
        classify_mknn(&self.train, query, &self.config)
    }

    pub fn classify_knn(&self, query: &[f64]) -> Result<Classification> {
        classify_knn(&self.train, query, self.config.k)
    }
}
