//! Euclidean distance and the recall / precision / fallout retrieval measures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(squared_distance(a, b).sqrt())
}

/// Unchecked squared distance; callers guarantee equal lengths.
#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Counts behind one retrieval judgement. `false_alarms` are retrieved
/// irrelevant items and `correct_diagnoses` are irrelevant items that were
/// correctly left out (true negatives).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub retrieved_relevant: u64,
    pub retrieved_total: u64,
    pub relevant_total: u64,
    pub false_alarms: u64,
    pub correct_diagnoses: u64,
}

impl ConfusionCounts {
    /// Counts for a ranked retrieval of `retrieved_total` items out of a
    /// collection of `collection_size` candidates.
    pub fn from_retrieval(
        retrieved_relevant: u64,
        retrieved_total: u64,
        relevant_total: u64,
        collection_size: u64,
    ) -> Result<Self> {
        if retrieved_relevant > retrieved_total || retrieved_relevant > relevant_total {
            return Err(Error::Input(format!(
                "retrieved_relevant {retrieved_relevant} exceeds retrieved_total {retrieved_total} or relevant_total {relevant_total}"
            )));
        }
        let irrelevant = collection_size.checked_sub(relevant_total).ok_or_else(|| {
            Error::Input(format!(
                "relevant_total {relevant_total} exceeds collection size {collection_size}"
            ))
        })?;
        let false_alarms = retrieved_total - retrieved_relevant;
        let correct_diagnoses = irrelevant
            .checked_sub(false_alarms)
            .ok_or_else(|| Error::Input("more false alarms than irrelevant items".to_string()))?;
        Ok(Self {
            retrieved_relevant,
            retrieved_total,
            relevant_total,
            false_alarms,
            correct_diagnoses,
        })
    }

    pub fn is_consistent(&self) -> bool {
        self.retrieved_relevant <= self.retrieved_total
            && self.retrieved_relevant <= self.relevant_total
    }
}

pub fn recall(c: &ConfusionCounts) -> Result<f64> {
    if c.relevant_total == 0 {
        return Err(Error::UndefinedMeasure {
            measure: "recall",
            reason: "no relevant items",
        });
    }
    Ok(c.retrieved_relevant as f64 / c.relevant_total as f64)
}

pub fn precision(c: &ConfusionCounts) -> Result<f64> {
    if c.retrieved_total == 0 {
        return Err(Error::UndefinedMeasure {
            measure: "precision",
            reason: "nothing retrieved",
        });
    }
    Ok(c.retrieved_relevant as f64 / c.retrieved_total as f64)
}

pub fn fallout(c: &ConfusionCounts) -> Result<f64> {
    let denom = c.false_alarms + c.correct_diagnoses;
    if denom == 0 {
        return Err(Error::UndefinedMeasure {
            measure: "fallout",
            reason: "no irrelevant items",
        });
    }
    Ok(c.false_alarms as f64 / denom as f64)
}

/// Recall, precision and fallout for one query (or their macro averages);
/// `None` marks an undefined measure. Accuracy is only set by
/// classification runs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub fallout: Option<f64>,
    pub accuracy: Option<f64>,
}

impl EvaluationReport {
    pub fn from_counts(c: &ConfusionCounts) -> Self {
        Self {
            recall: recall(c).ok(),
            precision: precision(c).ok(),
            fallout: fallout(c).ok(),
            accuracy: None,
        }
    }

    pub fn all_undefined(&self) -> bool {
        self.recall.is_none() && self.precision.is_none() && self.fallout.is_none()
    }
}
