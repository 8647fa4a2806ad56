//! Risk stratification: hierarchical clustering of latent vectors,
//! Kaplan–Meier curves, log-rank tests and exact t-SNE.

mod cluster;
mod risk;
pub mod special;
mod survival;
mod tsne;

pub use cluster::{adjusted_rand_index, cut_tree, hier_cluster, hier_cluster_with, Dendrogram, Linkage, Merge};
pub use risk::{
    assign_risk_labels, cluster_curves, pairwise_logrank, risk_names, ClusterAssignment, RISK_LEVELS,
};
pub use survival::{
    km_curve, km_curve_named, logrank_named, logrank_test, ClinicalRecord, LogRankResult,
    SurvivalCurve, SurvivalPoint,
};
pub use tsne::{input_affinities, tsne_embed, Affinities, TsneConfig, TsneResult};
