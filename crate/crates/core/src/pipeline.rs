//! Chains the clustering stages: presence, co-occurrence, correlation,
//! common objects, graph layout and agglomerative clustering.

use serde::{Deserialize, Serialize};

use crate::clustering::{agglomerative_cluster, attach_common, ClusterAssignment, Linkage};
use crate::cooccurrence::{
    build_cooccurrence, build_presence, extract_common_objects, phi_correlation, CommonObjectSet,
    CooccurrenceMatrix, CorrelationMatrix, DEFAULT_QUORUM, DEFAULT_TAU_COMMON,
};
use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::layout::{build_graph, fr_layout, ContextGraph, Layout, LayoutParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    pub k: usize,
    pub tau_common: f64,
    pub quorum: f64,
    pub layout: LayoutParams,
    pub layout_seed: u64,
    pub linkage: Linkage,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            k: 2,
            tau_common: DEFAULT_TAU_COMMON,
            quorum: DEFAULT_QUORUM,
            layout: LayoutParams::default(),
            layout_seed: 0,
            linkage: Linkage::Ward,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClusterOutcome {
    pub cooccurrence: CooccurrenceMatrix,
    pub correlation: CorrelationMatrix,
    pub common: CommonObjectSet,
    pub graph: ContextGraph,
    pub layout: Layout,
    /// Final assignment with common objects attached.
    pub assignment: ClusterAssignment,
}

pub fn cluster_dataset(dataset: &Dataset, params: &ClusterParams) -> Result<ClusterOutcome> {
    let presence = build_presence(dataset);
    let cooccurrence = build_cooccurrence(&presence);
    let correlation = phi_correlation(&presence)?;
    let common = extract_common_objects(&correlation, params.tau_common, params.quorum)?;
    let graph = build_graph(&correlation, &common);
    if graph.nodes.is_empty() {
        return Err(Error::Parameter(
            "every category was classified as common; nothing left to cluster".into(),
        ));
    }
    let layout = fr_layout(&graph, &params.layout, params.layout_seed)?;
    let raw = agglomerative_cluster(&layout, params.k, params.linkage, dataset.n_categories())?;
    let assignment = attach_common(&raw, &common)?;
    assignment.validate()?;
    Ok(ClusterOutcome {
        cooccurrence,
        correlation,
        common,
        graph,
        layout,
        assignment,
    })
}
