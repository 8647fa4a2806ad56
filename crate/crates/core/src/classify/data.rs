use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{Matrix, Rng};

/// Features with integer labels indexing `class_names`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

impl LabeledDataset {
    /// Class indices follow the sorted order of the distinct names.
    pub fn from_names(features: Vec<Vec<f64>>, names: &[String]) -> Result<Self> {
        if features.len() != names.len() {
            return Err(Error::dims("label list", features.len(), names.len()));
        }
        let mut class_names: Vec<String> = names.to_vec();
        class_names.sort();
        class_names.dedup();
        let labels = names
            .iter()
            .map(|n| class_names.binary_search(n).expect("name present"))
            .collect();
        Self::new(features, labels, class_names)
    }

    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::EmptyInput("labeled dataset"));
        }
        if features.len() != labels.len() {
            return Err(Error::dims("label list", features.len(), labels.len()));
        }
        let dim = features[0].len();
        if let Some(f) = features.iter().find(|f| f.len() != dim) {
            return Err(Error::dims("feature vector", dim, f.len()));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::InvalidArgument(format!(
                "label {l} outside {} classes",
                class_names.len()
            )));
        }
        Ok(Self {
            features,
            labels,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn subset(&self, idx: &[usize]) -> (Vec<Vec<f64>>, Vec<usize>) {
        (
            idx.iter().map(|&i| self.features[i].clone()).collect(),
            idx.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per-class shuffle with `round(fraction · count)` cases sent to test.
/// Both index lists come back sorted.
pub fn stratified_split(labels: &[usize], test_fraction: f64, seed: u64) -> Result<Split> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_fraction} outside [0, 1)"
        )));
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let root = Rng::new(seed);
    let mut split = Split {
        train: Vec::new(),
        test: Vec::new(),
    };
    for c in 0..num_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        root.child(c as u64).shuffle(&mut members);
        let n_test = (test_fraction * members.len() as f64).round() as usize;
        split.test.extend_from_slice(&members[..n_test]);
        split.train.extend_from_slice(&members[n_test..]);
    }
    split.train.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

/// Z-score scaling fitted on one set and applied to others; constant
/// features keep unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyInput("standardizer fit"))?;
        let d = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            if r.len() != d {
                return Err(Error::dims("feature vector", d, r.len()));
            }
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn transform(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter()
            .map(|r| {
                if r.len() != self.mean.len() {
                    return Err(Error::dims("feature vector", self.mean.len(), r.len()));
                }
                Ok(r.iter()
                    .zip(self.mean.iter().zip(&self.scale))
                    .map(|(v, (m, s))| (v - m) / s)
                    .collect())
            })
            .collect()
    }
}

pub(crate) fn to_matrix(rows: &[Vec<f64>]) -> Result<Matrix> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("feature matrix"));
    }
    Matrix::from_rows(rows)
}

pub(crate) fn check_training(x: &[Vec<f64>], y: &[usize], num_classes: usize) -> Result<()> {
    if x.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    if x.len() != y.len() {
        return Err(Error::dims("training labels", x.len(), y.len()));
    }
    if let Some(&l) = y.iter().find(|&&l| l >= num_classes) {
        return Err(Error::InvalidArgument(format!("label {l} outside {num_classes} classes")));
    }
    let first = y[0];
    if y.iter().all(|&l| l == first) {
        return Err(Error::InvalidArgument(
            "training set contains a single class".into(),
        ));
    }
    Ok(())
}
