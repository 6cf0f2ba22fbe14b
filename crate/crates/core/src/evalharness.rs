//! Synthetic benchmark comparing MKNN with plain KNN, and retrieval
//! evaluation over a labeled index.
//!
//! Synthetic data comes from isotropic Gaussian clusters. Points are drawn
//! with [`Lcg64`], shuffled, split 70/30 into train and test, and a fixed
//! fraction of the train labels is flipped to another class. Every step is
//! driven by the one seeded generator, so a spec and seed always produce the
//! same split on any platform.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{ConfusionCounts, EvaluationReport};
use crate::mknn::{ClassifierConfig, MknnClassifier, TrainSample};
use crate::retrieval::rank_vector;
use crate::store::ImageIndex;

pub const TRAIN_FRACTION: f64 = 0.7;

/// 64-bit linear congruential generator with Knuth's MMIX constants:
/// `state = state * 6364136223846793005 + 1442695040888963407 (mod 2^64)`.
/// The state is advanced before each output and the seed is the initial
/// state.
#[derive(Debug, Clone)]
pub struct Lcg64 {
    state: u64,
}

impl Lcg64 {
    pub const MULTIPLIER: u64 = 6_364_136_223_846_793_005;
    pub const INCREMENT: u64 = 1_442_695_040_888_963_407;

    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self
            .state
            .wrapping_mul(Self::MULTIPLIER)
            .wrapping_add(Self::INCREMENT);
        self.state
    }

    /// Uniform in [0, 1) from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n); `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_f64() * n as f64) as usize).min(n - 1)
    }

    /// Standard normal via Box-Muller, cosine branch only (two uniforms per
    /// draw).
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub center: Vec<f64>,
    pub spread: f64,
    pub label: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub clusters: Vec<ClusterSpec>,
    /// Fraction of train labels flipped to a different class.
    pub label_noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Two unit-spread 2-D clusters four spreads apart, 143 points each
    /// (200 train / 86 test), 15% train label noise.
    pub fn reference(seed: u64) -> Self {
        Self {
            clusters: vec![
                ClusterSpec {
                    center: vec![0.0, 0.0],
                    spread: 1.0,
                    label: "A".into(),
                    count: 143,
                },
                ClusterSpec {
                    center: vec![4.0, 0.0],
                    spread: 1.0,
                    label: "B".into(),
                    count: 143,
                },
            ],
            label_noise: 0.15,
            seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn total_points(&self) -> usize {
        self.clusters.iter().map(|c| c.count).sum()
    }

    pub fn train_size(&self) -> usize {
        (self.total_points() as f64 * TRAIN_FRACTION).round() as usize
    }

    pub fn flipped_count(&self) -> usize {
        (self.label_noise * self.train_size() as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .clusters
            .first()
            .ok_or_else(|| Error::Spec("no clusters".into()))?;
        let dim = first.center.len();
        if dim == 0 {
            return Err(Error::Spec(
                "cluster centers must have at least one dimension".into(),
            ));
        }
        for c in &self.clusters {
            if c.center.len() != dim {
                return Err(Error::Spec(format!(
                    "cluster {} has {} dimensions, expected {dim}",
                    c.label,
                    c.center.len()
                )));
            }
            if c.count == 0 {
                return Err(Error::Spec(format!("cluster {} has no points", c.label)));
            }
            if !(c.spread > 0.0 && c.spread.is_finite()) {
                return Err(Error::Spec(format!(
                    "cluster {} spread must be positive",
                    c.label
                )));
            }
            if c.label.is_empty() {
                return Err(Error::Spec("empty cluster label".into()));
            }
        }
        if !(0.0..1.0).contains(&self.label_noise) {
            return Err(Error::Spec(format!(
                "label_noise must lie in [0, 1), got {}",
                self.label_noise
            )));
        }
        let classes: BTreeSet<&str> = self.clusters.iter().map(|c| c.label.as_str()).collect();
        if self.label_noise > 0.0 && classes.len() < 2 {
            return Err(Error::Spec(
                "label noise needs at least two classes to flip between".into(),
            ));
        }
        let n_train = self.train_size();
        if n_train == 0 || n_train == self.total_points() {
            return Err(Error::Spec(format!(
                "{} points cannot be split into non-empty train and test sets",
                self.total_points()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSplit {
    /// Train samples carrying their possibly flipped labels.
    pub train: Vec<TrainSample>,
    /// Generating-cluster labels of the train samples, same order.
    pub train_truth: Vec<String>,
    pub test: Vec<TrainSample>,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticSplit> {
    spec.validate()?;
    let mut rng = Lcg64::new(spec.seed);

    let mut points: Vec<TrainSample> = Vec::with_capacity(spec.total_points());
    for cluster in &spec.clusters {
        for _ in 0..cluster.count {
            let v = cluster
                .center
                .iter()
                .map(|&c| c + cluster.spread * rng.next_gaussian())
                .collect();
            let id = format!("p{:06}", points.len());
            points.push(TrainSample::new(id, v, cluster.label.clone()));
        }
    }
    for i in (1..points.len()).rev() {
        let j = rng.below(i + 1);
        points.swap(i, j);
    }

    let test = points.split_off(spec.train_size());
    let mut train = points;
    let train_truth: Vec<String> = train.iter().map(|s| s.label.clone()).collect();

    let classes: Vec<String> = spec
        .clusters
        .iter()
        .map(|c| c.label.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for n in 0..spec.flipped_count() {
        let j = n + rng.below(order.len() - n);
        order.swap(n, j);
        let sample = &mut train[order[n]];
        let others: Vec<&String> = classes.iter().filter(|c| **c != sample.label).collect();
        sample.label = others[rng.below(others.len())].clone();
    }

    Ok(SyntheticSplit {
        train,
        train_truth,
        test,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub knn_accuracy: f64,
    pub mknn_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub knn_accuracy: f64,
    pub mknn_accuracy: f64,
    pub per_seed: Vec<SeedOutcome>,
    pub seeds: usize,
    pub k: usize,
    pub h: usize,
}

impl ComparisonReport {
    /// Fraction of seeds on which MKNN is at least as accurate as KNN.
    pub fn mknn_win_or_tie_rate(&self) -> f64 {
        let wins = self
            .per_seed
            .iter()
            .filter(|s| s.mknn_accuracy >= s.knn_accuracy)
            .count();
        wins as f64 / self.per_seed.len() as f64
    }
}

fn run_seed(spec: &SyntheticSpec, config: &ClassifierConfig) -> Result<SeedOutcome> {
    let split = generate_synthetic(spec)?;
    let clf = MknnClassifier::fit(split.train, *config)?;
    let (mut knn_ok, mut mknn_ok) = (0usize, 0usize);
    for t in &split.test {
        if clf.classify_knn(&t.vector)?.predicted_label == t.label {
            knn_ok += 1;
        }
        if clf.classify(&t.vector)?.predicted_label == t.label {
            mknn_ok += 1;
        }
    }
    let n = split.test.len() as f64;
    Ok(SeedOutcome {
        seed: spec.seed,
        knn_accuracy: knn_ok as f64 / n,
        mknn_accuracy: mknn_ok as f64 / n,
    })
}

/// Runs both classifiers on `n_seeds` splits, seeds `spec.seed`,
/// `spec.seed + 1`, and so on.
pub fn compare_classifiers(
    spec: &SyntheticSpec,
    config: &ClassifierConfig,
    n_seeds: usize,
) -> Result<ComparisonReport> {
    if n_seeds == 0 {
        return Err(Error::Config("n_seeds must be at least 1".into()));
    }
    spec.validate()?;
    let per_seed = (0..n_seeds as u64)
        .into_par_iter()
        .map(|i| run_seed(&spec.with_seed(spec.seed.wrapping_add(i)), config))
        .collect::<Result<Vec<_>>>()?;
    let n = per_seed.len() as f64;
    Ok(ComparisonReport {
        knn_accuracy: per_seed.iter().map(|s| s.knn_accuracy).sum::<f64>() / n,
        mknn_accuracy: per_seed.iter().map(|s| s.mknn_accuracy).sum::<f64>() / n,
        per_seed,
        seeds: n_seeds,
        k: config.k,
        h: config.h,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryEvaluation {
    pub id: String,
    pub counts: ConfusionCounts,
    pub report: EvaluationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalEvaluation {
    pub per_query: Vec<QueryEvaluation>,
    /// Queries for which no measure was defined.
    pub skipped: Vec<String>,
    pub macro_average: EvaluationReport,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Scores each query against the rest of the index. An entry is relevant
/// to a query when it has the query's label; the query itself is neither
/// retrieved nor relevant.
pub fn evaluate_retrieval(
    index: &ImageIndex,
    queries: &[String],
    top_n: usize,
) -> Result<RetrievalEvaluation> {
    if let Some(e) = index.entries().iter().find(|e| e.label.is_none()) {
        return Err(Error::Input(format!(
            "entry {} has no label; evaluation needs ground truth for every entry",
            e.id
        )));
    }
    let mut per_query = Vec::with_capacity(queries.len());
    let mut skipped = Vec::new();
    for q in queries {
        let entry = index
            .get(q)
            .ok_or_else(|| Error::Input(format!("query {q} is not in the index")))?;
        let label = entry.label_name().expect("checked above");
        let ranked = rank_vector(index, &entry.vector, top_n, Some(q))?;
        let retrieved_relevant = ranked
            .iter()
            .filter(|r| r.label.as_deref() == Some(label))
            .count() as u64;
        let relevant_total = index
            .entries()
            .iter()
            .filter(|e| e.id != *q && e.label_name() == Some(label))
            .count() as u64;
        let counts = ConfusionCounts::from_retrieval(
            retrieved_relevant,
            ranked.len() as u64,
            relevant_total,
            index.len() as u64 - 1,
        )?;
        let report = EvaluationReport::from_counts(&counts);
        if report.all_undefined() {
            skipped.push(q.clone());
        } else {
            per_query.push(QueryEvaluation {
                id: q.clone(),
                counts,
                report,
            });
        }
    }
    let macro_average = EvaluationReport {
        recall: mean(per_query.iter().map(|q| q.report.recall)),
        precision: mean(per_query.iter().map(|q| q.report.precision)),
        fallout: mean(per_query.iter().map(|q| q.report.fallout)),
        accuracy: None,
    };
    Ok(RetrievalEvaluation {
        per_query,
        skipped,
        macro_average,
    })
}
