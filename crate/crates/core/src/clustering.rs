//! Agglomerative clustering of laid-out categories into spatial contexts.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cooccurrence::CommonObjectSet;
use crate::error::{Error, Result};
use crate::layout::Layout;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    #[default]
    Ward,
    Single,
    Complete,
    Average,
}

impl FromStr for Linkage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ward" => Ok(Linkage::Ward),
            "single" => Ok(Linkage::Single),
            "complete" => Ok(Linkage::Complete),
            "average" => Ok(Linkage::Average),
            other => Err(Error::Parameter(format!("unknown linkage {other:?}"))),
        }
    }
}

impl fmt::Display for Linkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Linkage::Ward => "ward",
            Linkage::Single => "single",
            Linkage::Complete => "complete",
            Linkage::Average => "average",
        })
    }
}

/// One merge step. Clusters are numbered scipy-style: leaves `0..n`, the
/// cluster created by merge `i` gets id `n + i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n_leaves: usize,
    pub linkage: Linkage,
    pub merges: Vec<Merge>,
}

struct Active {
    id: usize,
    size: usize,
    min_leaf: usize,
}

/// Builds the full merge sequence with Lance-Williams updates.
///
/// Ward works on squared Euclidean distances (heights reported as their
/// square roots); the other linkages on plain Euclidean distance. Among
/// equal-distance candidates the pair whose union has the smallest minimum
/// leaf wins, then the smaller partner minimum leaf.
pub fn build_dendrogram(points: &[[f64; 2]], linkage: Linkage) -> Dendrogram {
    let n = points.len();
    let mut dist = vec![0.0f64; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let dx = points[i][0] - points[j][0];
            let dy = points[i][1] - points[j][1];
            let d = match linkage {
                Linkage::Ward => dx * dx + dy * dy,
                _ => dx.hypot(dy),
            };
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }

    // slot index into `dist` -> active cluster
    let mut active: Vec<Option<Active>> = (0..n)
        .map(|i| {
            Some(Active {
                id: i,
                size: 1,
                min_leaf: i,
            })
        })
        .collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));

    for step in 0..n.saturating_sub(1) {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for i in 0..n {
            let Some(ci) = &active[i] else { continue };
            for j in i + 1..n {
                let Some(cj) = &active[j] else { continue };
                let d = dist[i * n + j];
                let lo = ci.min_leaf.min(cj.min_leaf);
                let hi = ci.min_leaf.max(cj.min_leaf);
                let better = match best {
                    None => true,
                    Some((bd, blo, bhi, _, _)) => d < bd || (d == bd && (lo, hi) < (blo, bhi)),
                };
                if better {
                    best = Some((d, lo, hi, i, j));
                }
            }
        }
        let (d, _, _, i, j) = best.expect("at least two active clusters");
        let ci = active[i].take().unwrap();
        let cj = active[j].take().unwrap();
        let (ni, nj) = (ci.size as f64, cj.size as f64);

        for k in 0..n {
            let Some(ck) = &active[k] else { continue };
            let nk = ck.size as f64;
            let dki = dist[k * n + i];
            let dkj = dist[k * n + j];
            let updated = match linkage {
                Linkage::Ward => ((ni + nk) * dki + (nj + nk) * dkj - nk * d) / (ni + nj + nk),
                Linkage::Single => dki.min(dkj),
                Linkage::Complete => dki.max(dkj),
                Linkage::Average => (ni * dki + nj * dkj) / (ni + nj),
            };
            dist[k * n + i] = updated;
            dist[i * n + k] = updated;
        }

        let (left, right) = if ci.min_leaf < cj.min_leaf {
            (ci.id, cj.id)
        } else {
            (cj.id, ci.id)
        };
        let size = ci.size + cj.size;
        merges.push(Merge {
            left,
            right,
            height: match linkage {
                Linkage::Ward => d.max(0.0).sqrt(),
                _ => d,
            },
            size,
        });
        active[i] = Some(Active {
            id: n + step,
            size,
            min_leaf: ci.min_leaf.min(cj.min_leaf),
        });
    }

    Dendrogram {
        n_leaves: n,
        linkage,
        merges,
    }
}

impl Dendrogram {
    /// Leaf labels after applying the first `n - k` merges. Labels are
    /// numbered by the smallest leaf of each cluster, so cluster 0 holds
    /// leaf 0.
    pub fn cut(&self, k: usize) -> Result<Vec<usize>> {
        let n = self.n_leaves;
        if k < 1 || k > n {
            return Err(Error::Parameter(format!(
                "cluster count k={k} out of range 1..={n}"
            )));
        }
        // union-find over leaves + internal ids
        let mut parent: Vec<usize> = (0..n + self.merges.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (step, m) in self.merges.iter().take(n - k).enumerate() {
            let id = n + step;
            let l = find(&mut parent, m.left);
            let r = find(&mut parent, m.right);
            parent[l] = id;
            parent[r] = id;
        }
        let mut label_of_root = std::collections::BTreeMap::new();
        let mut labels = Vec::with_capacity(n);
        for leaf in 0..n {
            let root = find(&mut parent, leaf);
            let next = label_of_root.len();
            labels.push(*label_of_root.entry(root).or_insert(next));
        }
        Ok(labels)
    }
}

/// Partition of the category vocabulary into `k` contexts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub k: usize,
    pub n_categories: usize,
    /// Non-common category indices of each cluster, ascending.
    pub clusters: Vec<Vec<usize>>,
    /// Common category indices replicated into every served set.
    pub common: Vec<usize>,
}

impl ClusterAssignment {
    pub fn cluster_of(&self, category: usize) -> Option<usize> {
        self.clusters
            .iter()
            .position(|c| c.binary_search(&category).is_ok())
    }

    pub fn is_common(&self, category: usize) -> bool {
        self.common.binary_search(&category).is_ok()
    }

    /// Assigned categories of cluster `c` together with the common set.
    pub fn served_classes(&self, c: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.clusters[c]
            .iter()
            .chain(&self.common)
            .copied()
            .collect();
        out.sort_unstable();
        out
    }

    /// Category index -> cluster id, `None` for common categories.
    pub fn lookup_table(&self) -> Vec<Option<usize>> {
        let mut table = vec![None; self.n_categories];
        for (c, members) in self.clusters.iter().enumerate() {
            for &m in members {
                table[m] = Some(c);
            }
        }
        table
    }

    pub fn validate(&self) -> Result<()> {
        if self.clusters.len() != self.k || self.k == 0 {
            return Err(Error::Consistency(format!(
                "assignment declares k={} but has {} clusters",
                self.k,
                self.clusters.len()
            )));
        }
        let mut seen = vec![false; self.n_categories];
        for &c in &self.common {
            if c >= self.n_categories || std::mem::replace(&mut seen[c], true) {
                return Err(Error::Consistency(format!("bad common category {c}")));
            }
        }
        for (id, members) in self.clusters.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::Consistency(format!("cluster {id} is empty")));
            }
            for &m in members {
                if m >= self.n_categories || std::mem::replace(&mut seen[m], true) {
                    return Err(Error::Consistency(format!(
                        "category {m} appears more than once or out of range"
                    )));
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Consistency(format!(
                "category {missing} is not assigned"
            )));
        }
        Ok(())
    }
}

/// Clusters the layout nodes into `k` groups. The result covers only the
/// laid-out categories; common objects are attached by [`attach_common`].
pub fn agglomerative_cluster(
    layout: &Layout,
    k: usize,
    linkage: Linkage,
    n_categories: usize,
) -> Result<ClusterAssignment> {
    let n = layout.nodes.len();
    if k < 1 || k > n {
        return Err(Error::Parameter(format!(
            "cluster count k={k} out of range 1..={n}"
        )));
    }
    let dendrogram = build_dendrogram(&layout.positions, linkage);
    assignment_from_cut(&dendrogram, &layout.nodes, k, n_categories)
}

/// Builds the assignment for one cut of a dendrogram whose leaves are `nodes`.
pub fn assignment_from_cut(
    dendrogram: &Dendrogram,
    nodes: &[usize],
    k: usize,
    n_categories: usize,
) -> Result<ClusterAssignment> {
    let labels = dendrogram.cut(k)?;
    let mut clusters = vec![Vec::new(); k];
    for (&node, &label) in nodes.iter().zip(&labels) {
        clusters[label].push(node);
    }
    for c in &mut clusters {
        c.sort_unstable();
    }
    Ok(ClusterAssignment {
        k,
        n_categories,
        clusters,
        common: Vec::new(),
    })
}

pub fn attach_common(
    raw: &ClusterAssignment,
    common: &CommonObjectSet,
) -> Result<ClusterAssignment> {
    let existing: BTreeSet<usize> = raw.common.iter().copied().collect();
    for (id, members) in raw.clusters.iter().enumerate() {
        if let Some(&c) = members.iter().find(|m| common.contains(**m)) {
            return Err(Error::Consistency(format!(
                "common category {c} is already assigned to cluster {id}"
            )));
        }
    }
    let mut out = raw.clone();
    out.common = existing.union(&common.members).copied().collect();
    Ok(out)
}
