//! Helpers shared by the integration test targets. Oracles here are written
//! against the raw data model on purpose and avoid the crate's own helpers.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use cobranch::branch_design::{HeadTemplate, InputSource, LayerSpec};
use cobranch::clustering::ClusterAssignment;
use cobranch::ingest::{Category, Dataset, ImageRecord, Instance};
use cobranch::runtime_sim::{ModelPlan, RoutingMode, RoutingPolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Three layers: 3x3 4->8, 3x3 8->16, 1x1 16->prediction, 100 cells each,
/// prediction width 1 * (3 + 5) = 8.
pub fn toy_template() -> HeadTemplate {
    let mut first = LayerSpec::new(3, 4, 8, 100);
    first.input = InputSource::External;
    first.scale_in = false;
    let second = LayerSpec::new(3, 8, 16, 100);
    let mut pred = LayerSpec::new(1, 16, 8, 100);
    pred.is_prediction = true;
    HeadTemplate {
        name: "toy".into(),
        description: None,
        native_classes: 3,
        anchors_per_cell: 1,
        box_fields: 5,
        input_size: 100,
        levels: Vec::new(),
        layers: vec![first, second, pred],
    }
}

/// Dataset with one instance per `(image, category index, count)` triple.
pub fn dataset_from_counts(n_categories: usize, images: &[Vec<(usize, usize)>]) -> Dataset {
    let categories = (0..n_categories)
        .map(|i| Category {
            id: i as i64 + 1,
            name: format!("c{i}"),
        })
        .collect();
    let records = images
        .iter()
        .enumerate()
        .map(|(i, objs)| ImageRecord {
            image_id: i as i64 + 1,
            instances: objs
                .iter()
                .flat_map(|&(c, n)| {
                    (0..n).map(move |j| Instance {
                        category_id: c as i64 + 1,
                        bbox: [j as f64, 0.0, 1.0, 1.0],
                    })
                })
                .collect(),
        })
        .collect();
    Dataset::new(categories, records).expect("valid synthetic dataset")
}

/// Random dataset where each category appears in an image with
/// probability `p`, with 1..=3 instances.
pub fn random_dataset(seed: u64, n_images: usize, n_categories: usize, p: f64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let images: Vec<Vec<(usize, usize)>> = (0..n_images)
        .map(|_| {
            let mut objs = Vec::new();
            for c in 0..n_categories {
                if rng.gen::<f64>() < p {
                    objs.push((c, rng.gen_range(1..=3)));
                }
            }
            objs
        })
        .collect();
    dataset_from_counts(n_categories, &images)
}

/// Deals categories round-robin into `k` clusters after reserving the
/// listed common ones.
pub fn round_robin_assignment(
    n_categories: usize,
    k: usize,
    common: &[usize],
) -> ClusterAssignment {
    let mut clusters = vec![Vec::new(); k];
    let mut slot = 0;
    for c in 0..n_categories {
        if common.contains(&c) {
            continue;
        }
        clusters[slot % k].push(c);
        slot += 1;
    }
    ClusterAssignment {
        k,
        n_categories,
        clusters,
        common: common.to_vec(),
    }
}

pub struct OracleImage {
    pub executed: Vec<usize>,
    pub covered: u64,
    pub total: u64,
    pub dynamic_macs: u64,
    pub dynamic_params: u64,
}

/// Brute-force per-image simulation with oracle scores, written directly
/// from the routing definitions.
pub fn brute_force(
    dataset: &Dataset,
    assignment: &ClusterAssignment,
    plan: &ModelPlan,
    policy: &RoutingPolicy,
) -> Vec<OracleImage> {
    let id_to_pos: BTreeMap<i64, usize> = dataset
        .categories()
        .iter()
        .enumerate()
        .map(|(i, c)| (c.id, i))
        .collect();
    let common: BTreeSet<usize> = assignment.common.iter().copied().collect();
    let owner = |pos: usize| assignment.clusters.iter().position(|cl| cl.contains(&pos));
    let k = assignment.k;

    // Global fallback: most non-common instances, lowest index on ties.
    let mut global = vec![0u64; k];
    for im in dataset.images() {
        for inst in &im.instances {
            if let Some(c) = owner(id_to_pos[&inst.category_id]) {
                global[c] += 1;
            }
        }
    }
    let mut fallback = 0;
    for c in 1..k {
        if global[c] > global[fallback] {
            fallback = c;
        }
    }

    dataset
        .images()
        .iter()
        .map(|im| {
            let mut counts = vec![0u64; k];
            for inst in &im.instances {
                if let Some(c) = owner(id_to_pos[&inst.category_id]) {
                    counts[c] += 1;
                }
            }
            let total_nc: u64 = counts.iter().sum();
            let scores: Vec<f64> = if total_nc == 0 {
                (0..k)
                    .map(|c| if c == fallback { 1.0 } else { 0.0 })
                    .collect()
            } else {
                counts.iter().map(|&n| n as f64 / total_nc as f64).collect()
            };
            let mut best = 0;
            for c in 1..k {
                if scores[c] > scores[best] {
                    best = c;
                }
            }
            let executed: Vec<usize> = match policy.mode {
                RoutingMode::Single => vec![best],
                RoutingMode::Multi => {
                    let chosen: Vec<usize> =
                        (0..k).filter(|&c| scores[c] >= policy.threshold).collect();
                    if chosen.is_empty() {
                        vec![best]
                    } else {
                        chosen
                    }
                }
            };
            let mut covered = 0;
            for inst in &im.instances {
                let pos = id_to_pos[&inst.category_id];
                if common.contains(&pos)
                    || executed
                        .iter()
                        .any(|&b| assignment.clusters[b].contains(&pos))
                {
                    covered += 1;
                }
            }
            let branch_macs: u64 = executed.iter().map(|&b| plan.branches[b].macs).sum();
            let branch_params: u64 = executed.iter().map(|&b| plan.branches[b].params).sum();
            OracleImage {
                covered,
                total: im.instances.len() as u64,
                dynamic_macs: plan.backbone_macs + plan.controller_macs + branch_macs,
                dynamic_params: plan.backbone_params + plan.controller_params + branch_params,
                executed,
            }
        })
        .collect()
}

/// Partition equality ignoring cluster order.
pub fn same_partition(a: &[Vec<usize>], b: &[Vec<usize>]) -> bool {
    let norm = |p: &[Vec<usize>]| -> BTreeSet<BTreeSet<usize>> {
        p.iter().map(|c| c.iter().copied().collect()).collect()
    };
    a.len() == b.len() && norm(a) == norm(b)
}
