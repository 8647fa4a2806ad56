//! Supervised evaluation of encoded features with logistic regression,
//! k-nearest neighbours and a small MLP.

mod data;
mod metrics;
mod models;

use serde::{Deserialize, Serialize};

pub use data::{stratified_split, LabeledDataset, Split, Standardizer};
pub use metrics::{compute_metrics, ClassMetrics, MetricsReport};
pub use models::{predict_knn, LogRegConfig, LogisticRegression, Mlp, MlpConfig};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifyConfig {
    pub test_fraction: f64,
    pub seed: u64,
    pub knn_k: usize,
    /// Z-score features using training-split statistics.
    pub standardize: bool,
    pub logreg: LogRegConfig,
    pub mlp: MlpConfig,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            seed: 0,
            knn_k: 5,
            standardize: true,
            logreg: LogRegConfig::default(),
            mlp: MlpConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: String,
    pub metrics: MetricsReport,
    pub predictions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub class_names: Vec<String>,
    pub split: Split,
    pub results: Vec<MethodResult>,
}

pub const METHODS: [&str; 3] = ["Logistic Regression", "KNN", "MLP"];

/// Splits, trains every method on the training part and scores it on the
/// held-out part.
pub fn evaluate(dataset: &LabeledDataset, config: &ClassifyConfig) -> Result<Evaluation> {
    let split = stratified_split(&dataset.labels, config.test_fraction, config.seed)?;
    let (mut train_x, train_y) = dataset.subset(&split.train);
    let (mut test_x, test_y) = dataset.subset(&split.test);
    if config.standardize {
        let s = Standardizer::fit(&train_x)?;
        train_x = s.transform(&train_x)?;
        test_x = s.transform(&test_x)?;
    }
    let k = dataset.num_classes();
    let logreg = LogisticRegression::fit(&train_x, &train_y, k, &config.logreg)?.predict(&test_x)?;
    let knn = test_x
        .iter()
        .map(|q| predict_knn(&train_x, &train_y, q, config.knn_k.min(train_x.len())))
        .collect::<Result<Vec<_>>>()?;
    let mlp_cfg = MlpConfig {
        seed: config.seed ^ config.mlp.seed,
        ..config.mlp.clone()
    };
    let mlp = Mlp::fit(&train_x, &train_y, k, &mlp_cfg)?.predict(&test_x)?;
    let results = METHODS
        .iter()
        .zip([logreg, knn, mlp])
        .map(|(name, predictions)| {
            Ok(MethodResult {
                method: name.to_string(),
                metrics: compute_metrics(&test_y, &predictions, k)?,
                predictions,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Evaluation {
        class_names: dataset.class_names.clone(),
        split,
        results,
    })
}
