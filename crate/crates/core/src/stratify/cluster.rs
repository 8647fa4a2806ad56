use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::squared_euclidean;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    #[default]
    Ward,
    Average,
    Complete,
    Single,
}

/// One agglomeration. Leaves are `0..n`; merge `i` creates cluster `n + i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n: usize,
    pub linkage: Linkage,
    pub merges: Vec<Merge>,
}

pub fn hier_cluster(vectors: &[Vec<f64>]) -> Result<Dendrogram> {
    hier_cluster_with(vectors, Linkage::Ward)
}

/// Naive O(n³) agglomeration with Lance–Williams updates.
///
/// Ward operates on squared distances and reports `sqrt` heights, i.e.
/// `sqrt(2·na·nb/(na+nb)) · ‖ca − cb‖`. Ties go to the pair with the
/// smaller `(min id, max id)`.
pub fn hier_cluster_with(vectors: &[Vec<f64>], linkage: Linkage) -> Result<Dendrogram> {
    let n = vectors.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "hierarchical clustering needs at least 2 vectors, got {n}"
        )));
    }
    let dim = vectors[0].len();
    for v in vectors {
        if v.len() != dim {
            return Err(Error::dims("latent vector", dim, v.len()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("clustering input".into()));
        }
    }
    let squared = linkage == Linkage::Ward;
    let mut dist: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    let d = squared_euclidean(&vectors[i], &vectors[j]);
                    if squared {
                        d
                    } else {
                        d.sqrt()
                    }
                })
                .collect()
        })
        .collect();

    // Slot s holds cluster `ids[s]` while `active[s]`.
    let mut ids: Vec<usize> = (0..n).collect();
    let mut sizes = vec![1usize; n];
    let mut active = vec![true; n];
    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..n - 1 {
        let mut best: Option<(f64, usize, usize, (usize, usize))> = None;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in i + 1..n {
                if !active[j] {
                    continue;
                }
                let d = dist[i][j];
                let key = (ids[i].min(ids[j]), ids[i].max(ids[j]));
                let better = match best {
                    None => true,
                    Some((bd, _, _, bk)) => d < bd || (d == bd && key < bk),
                };
                if better {
                    best = Some((d, i, j, key));
                }
            }
        }
        let (d, i, j, key) = best.expect("at least two active clusters");
        let (ni, nj) = (sizes[i] as f64, sizes[j] as f64);
        for k in 0..n {
            if !active[k] || k == i || k == j {
                continue;
            }
            let nk = sizes[k] as f64;
            let (dik, djk) = (dist[i][k], dist[j][k]);
            let updated = match linkage {
                Linkage::Ward => ((ni + nk) * dik + (nj + nk) * djk - nk * d) / (ni + nj + nk),
                Linkage::Average => (ni * dik + nj * djk) / (ni + nj),
                Linkage::Complete => dik.max(djk),
                Linkage::Single => dik.min(djk),
            };
            dist[i][k] = updated;
            dist[k][i] = updated;
        }
        active[j] = false;
        sizes[i] += sizes[j];
        ids[i] = n + step;
        let height = if squared { d.max(0.0).sqrt() } else { d };
        merges.push(Merge {
            a: key.0,
            b: key.1,
            height,
            size: sizes[i],
        });
    }
    Ok(Dendrogram { n, linkage, merges })
}

/// Flat clustering with `k` clusters: the `k − 1` highest merges are
/// undone. Labels are contiguous in first-seen case order.
pub fn cut_tree(dendrogram: &Dendrogram, k: usize) -> Result<Vec<usize>> {
    let n = dendrogram.n;
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "cluster count {k} outside 1..={n}"
        )));
    }
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (step, m) in dendrogram.merges.iter().take(n - k).enumerate() {
        let new = n + step;
        let ra = find(&mut parent, m.a);
        let rb = find(&mut parent, m.b);
        parent[ra] = new;
        parent[rb] = new;
    }
    let mut label_of_root = std::collections::HashMap::new();
    let mut labels = Vec::with_capacity(n);
    for leaf in 0..n {
        let root = find(&mut parent, leaf);
        let next = label_of_root.len();
        labels.push(*label_of_root.entry(root).or_insert(next));
    }
    Ok(labels)
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dims("labeling", a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::EmptyInput("adjusted_rand_index"));
    }
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let c2 = |m: u64| (m * m.saturating_sub(1) / 2) as f64;
    let index: f64 = table.iter().flatten().map(|&m| c2(m)).sum();
    let rows: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| c2(table.iter().map(|r| r[j]).sum())).sum();
    let total = c2(a.len() as u64);
    let expected = rows * cols / total;
    let max = 0.5 * (rows + cols);
    if max == expected {
        // Both partitions trivial in the same way.
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}
