use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::survival::{km_curve_named, logrank_named, ClinicalRecord, LogRankResult, SurvivalCurve};
use crate::error::{Error, Result};

pub const RISK_LEVELS: [&str; 3] = ["Low", "Medium", "High"];

/// Risk level names for `k` groups, from lowest to highest risk.
pub fn risk_names(k: usize) -> Result<&'static [&'static str]> {
    match k {
        1 => Ok(&RISK_LEVELS[..1]),
        2 => Ok(&["Low", "High"]),
        3 => Ok(&RISK_LEVELS),
        _ => Err(Error::InvalidArgument(format!(
            "risk labels are defined for 1 to 3 groups, got {k}"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub case_ids: Vec<String>,
    pub clusters: Vec<usize>,
    pub k: usize,
    /// `risk_rank[c]` is the risk position of cluster `c` (0 = lowest).
    pub risk_rank: Option<Vec<usize>>,
}

impl ClusterAssignment {
    pub fn new(case_ids: Vec<String>, clusters: Vec<usize>, k: usize) -> Result<Self> {
        if case_ids.len() != clusters.len() {
            return Err(Error::dims("cluster labels", case_ids.len(), clusters.len()));
        }
        if let Some(&bad) = clusters.iter().find(|&&c| c >= k) {
            return Err(Error::InvalidArgument(format!(
                "cluster index {bad} outside 0..{k}"
            )));
        }
        Ok(Self {
            case_ids,
            clusters,
            k,
            risk_rank: None,
        })
    }

    pub fn risk_name(&self, cluster: usize) -> Option<&'static str> {
        let rank = self.risk_rank.as_ref()?.get(cluster).copied()?;
        risk_names(self.k).ok()?.get(rank).copied()
    }

    /// Cluster index holding risk position `rank`.
    pub fn cluster_at_rank(&self, rank: usize) -> Option<usize> {
        self.risk_rank.as_ref()?.iter().position(|&r| r == rank)
    }

    pub fn members(&self, cluster: usize) -> impl Iterator<Item = &str> {
        self.case_ids
            .iter()
            .zip(&self.clusters)
            .filter(move |(_, &c)| c == cluster)
            .map(|(id, _)| id.as_str())
    }
}

fn lookup(clinical: &[ClinicalRecord]) -> HashMap<&str, &ClinicalRecord> {
    clinical.iter().map(|r| (r.case_id.as_str(), r)).collect()
}

fn records_of<'a>(
    assignment: &ClusterAssignment,
    by_id: &HashMap<&str, &'a ClinicalRecord>,
    cluster: usize,
) -> Result<Vec<&'a ClinicalRecord>> {
    assignment
        .members(cluster)
        .map(|id| {
            by_id
                .get(id)
                .copied()
                .ok_or_else(|| Error::MissingRecord(id.to_string()))
        })
        .collect()
}

/// Kaplan–Meier curve per cluster, indexed by cluster.
pub fn cluster_curves(
    assignment: &ClusterAssignment,
    clinical: &[ClinicalRecord],
) -> Result<Vec<SurvivalCurve>> {
    let by_id = lookup(clinical);
    (0..assignment.k)
        .map(|c| {
            let recs = records_of(assignment, &by_id, c)?;
            km_curve_named(recs, &c.to_string())
        })
        .collect()
}

/// Orders clusters from lowest to highest risk.
///
/// A defined KM median ranks by value (higher is lower risk) and beats any
/// undefined one. Undefined medians compare by survival at the last
/// observed time. Remaining ties use restricted mean survival up to the
/// shortest cluster follow-up, then the cluster index.
pub fn assign_risk_labels(
    assignment: &ClusterAssignment,
    clinical: &[ClinicalRecord],
) -> Result<ClusterAssignment> {
    risk_names(assignment.k)?;
    let curves = cluster_curves(assignment, clinical)?;
    let tau = curves
        .iter()
        .map(SurvivalCurve::last_time)
        .fold(f64::INFINITY, f64::min);
    let keys: Vec<(Option<f64>, f64, f64)> = curves
        .iter()
        .map(|c| (c.median(), c.last_survival(), c.restricted_mean(tau)))
        .collect();
    let mut order: Vec<usize> = (0..assignment.k).collect();
    order.sort_by(|&x, &y| {
        let (mx, sx, rx) = keys[x];
        let (my, sy, ry) = keys[y];
        let primary = match (mx, my) {
            (None, Some(_)) => Ordering::Less,
            (Some(_), None) => Ordering::Greater,
            (Some(a), Some(b)) => b.total_cmp(&a),
            (None, None) => sy.total_cmp(&sx),
        };
        primary.then(ry.total_cmp(&rx)).then(x.cmp(&y))
    });
    let mut rank = vec![0; assignment.k];
    for (r, &c) in order.iter().enumerate() {
        rank[c] = r;
    }
    Ok(ClusterAssignment {
        risk_rank: Some(rank),
        ..assignment.clone()
    })
}

/// Log-rank test for every pair of risk levels, ordered by risk:
/// `(0,1), (0,2), …, (1,2), …`.
pub fn pairwise_logrank(
    assignment: &ClusterAssignment,
    clinical: &[ClinicalRecord],
) -> Result<Vec<LogRankResult>> {
    if assignment.k < 2 {
        return Err(Error::InvalidArgument(
            "pairwise log-rank needs at least 2 groups".into(),
        ));
    }
    let ranked = if assignment.risk_rank.is_some() {
        assignment.clone()
    } else {
        assign_risk_labels(assignment, clinical)?
    };
    let names = risk_names(ranked.k)?;
    let by_id = lookup(clinical);
    let mut out = Vec::new();
    for a in 0..ranked.k {
        for b in a + 1..ranked.k {
            let ca = ranked.cluster_at_rank(a).expect("bijective ranks");
            let cb = ranked.cluster_at_rank(b).expect("bijective ranks");
            out.push(logrank_named(
                records_of(&ranked, &by_id, ca)?,
                records_of(&ranked, &by_id, cb)?,
                names[a],
                names[b],
            )?);
        }
    }
    Ok(out)
}
