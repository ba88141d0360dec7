//! On-disk formats exchanged between pipeline stages.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::clustering::ClusterAssignment;
use crate::cooccurrence::CommonObjectSet;
use crate::error::{Error, Result};
use crate::ingest::Category;
use crate::layout::Layout;
use crate::manifest::ManifestRef;
use crate::pipeline::ClusterParams;
use crate::runtime_sim::{calibrate_cost_model, CostModel, SimulationReport};

pub const CLUSTERS_FORMAT: &str = "cobranch-clusters";
pub const PLAN_FORMAT: &str = "cobranch-plan";
pub const SIMULATION_FORMAT: &str = "cobranch-simulation";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterFile {
    pub format: String,
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<ManifestRef>,
    pub categories: Vec<Category>,
    pub params: ClusterParams,
    pub common: CommonObjectSet,
    pub assignment: ClusterAssignment,
    /// Category names per cluster, for reading the file by eye.
    pub cluster_names: Vec<Vec<String>>,
    pub common_names: Vec<String>,
    pub layout: Layout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSummary {
    pub branch_id: usize,
    pub classes: usize,
    pub factor: f64,
    pub params: u64,
    pub macs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub format: String,
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<ManifestRef>,
    pub template: String,
    pub image_size: u64,
    pub total_classes: usize,
    /// Full-width head for the whole vocabulary (the static model's head).
    pub template_params: u64,
    pub template_macs: u64,
    pub summary: Vec<BranchSummary>,
    pub model: crate::runtime_sim::ModelPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationFile {
    pub format: String,
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<ManifestRef>,
    pub cost_model: CostModel,
    pub reports: Vec<SimulationReport>,
}

/// Either explicit coefficients or raw samples to fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CostModelFile {
    Coefficients(CostModel),
    Samples {
        /// `(GMACs, ms)` pairs.
        latency: Vec<(f64, f64)>,
        /// `(GMACs, mJ)` pairs.
        energy: Vec<(f64, f64)>,
    },
}

impl CostModelFile {
    pub fn resolve(&self) -> Result<CostModel> {
        match self {
            CostModelFile::Coefficients(m) => CostModel::new(m.latency_ms, m.energy_mj),
            CostModelFile::Samples { latency, energy } => calibrate_cost_model(latency, energy),
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

pub fn check_format(found: &str, version: u32, expected: &str) -> Result<()> {
    if found != expected {
        return Err(Error::Schema(format!(
            "expected a {expected} file, found {found:?}"
        )));
    }
    if version != FORMAT_VERSION {
        return Err(Error::Schema(format!(
            "unsupported {expected} version {version}"
        )));
    }
    Ok(())
}

pub fn read_clusters(path: impl AsRef<Path>) -> Result<ClusterFile> {
    let f: ClusterFile = read_json(path)?;
    check_format(&f.format, f.version, CLUSTERS_FORMAT)?;
    f.assignment.validate()?;
    Ok(f)
}

pub fn read_plan(path: impl AsRef<Path>) -> Result<PlanFile> {
    let f: PlanFile = read_json(path)?;
    check_format(&f.format, f.version, PLAN_FORMAT)?;
    for b in &f.model.branches {
        b.verify()?;
    }
    Ok(f)
}
