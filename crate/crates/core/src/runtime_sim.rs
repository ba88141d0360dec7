//! Simulated adaptive runtime: context labels, controller scores, branch
//! routing and per-image cost accounting.
//!
//! Accuracy is proxied by instance coverage, the fraction of ground-truth
//! instances whose category is served by at least one executed branch. It
//! upper-bounds the recall a routed detector could reach; it is not AP.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::branch_design::BranchPlan;
use crate::clustering::ClusterAssignment;
use crate::error::{Error, Result};
use crate::ingest::{Dataset, ImageRecord};

/// Note attached to every report.
pub const ACCURACY_PROXY_NOTE: &str =
    "accuracy is instance coverage by executed branches (recall upper bound), not detector AP; \
     latency and energy come from an affine per-inference MAC cost model";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPlan {
    pub backbone_params: u64,
    pub backbone_macs: u64,
    pub controller_params: u64,
    pub controller_macs: u64,
    pub branches: Vec<BranchPlan>,
}

impl ModelPlan {
    /// Parameters of the whole adaptive model (all branches resident).
    pub fn static_params(&self) -> u64 {
        self.backbone_params
            + self.controller_params
            + self.branches.iter().map(|b| b.params).sum::<u64>()
    }

    pub fn dynamic_params(&self, executed: &[usize]) -> u64 {
        self.backbone_params
            + self.controller_params
            + executed
                .iter()
                .map(|&b| self.branches[b].params)
                .sum::<u64>()
    }

    pub fn dynamic_macs(&self, executed: &[usize]) -> u64 {
        self.backbone_macs
            + self.controller_macs
            + executed.iter().map(|&b| self.branches[b].macs).sum::<u64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoutingMode {
    Single,
    Multi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoutingPolicy {
    pub mode: RoutingMode,
    /// Only used in multi mode.
    pub threshold: f64,
}

impl RoutingPolicy {
    pub fn single() -> Self {
        Self {
            mode: RoutingMode::Single,
            threshold: 0.0,
        }
    }

    pub fn multi(threshold: f64) -> Self {
        Self {
            mode: RoutingMode::Multi,
            threshold,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == RoutingMode::Multi && !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Parameter(format!(
                "threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        Ok(())
    }
}

impl fmt::Display for RoutingPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.mode {
            RoutingMode::Single => write!(f, "single"),
            RoutingMode::Multi => write!(f, "multi-{}", self.threshold),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Oracle,
    Noisy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerModel {
    pub kind: ControllerKind,
    pub noise_sigma: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_accuracy: Option<f64>,
}

impl ControllerModel {
    pub fn oracle() -> Self {
        Self {
            kind: ControllerKind::Oracle,
            noise_sigma: 0.0,
            seed: 0,
            target_accuracy: None,
        }
    }

    pub fn noisy(noise_sigma: f64, seed: u64) -> Self {
        Self {
            kind: ControllerKind::Noisy,
            noise_sigma,
            seed,
            target_accuracy: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Parameter(format!(
                "noise sigma {} must be >= 0",
                self.noise_sigma
            )));
        }
        if self.kind == ControllerKind::Oracle && self.noise_sigma != 0.0 {
            return Err(Error::Parameter(
                "oracle controller must have zero noise".into(),
            ));
        }
        Ok(())
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Context labels and fractions for images of one dataset under one
/// assignment. Images without non-common instances fall back to the
/// cluster that owns the most non-common instances over the whole dataset.
#[derive(Debug, Clone)]
pub struct ContextLabeler<'a> {
    dataset: &'a Dataset,
    table: Vec<Option<usize>>,
    k: usize,
    fallback: usize,
}

impl<'a> ContextLabeler<'a> {
    pub fn new(dataset: &'a Dataset, assignment: &ClusterAssignment) -> Result<Self> {
        assignment.validate()?;
        if assignment.n_categories != dataset.n_categories() {
            return Err(Error::Config(format!(
                "assignment covers {} categories, dataset has {}",
                assignment.n_categories,
                dataset.n_categories()
            )));
        }
        let mut labeler = Self {
            dataset,
            table: assignment.lookup_table(),
            k: assignment.k,
            fallback: 0,
        };
        let mut global = vec![0u64; assignment.k];
        for im in dataset.images() {
            for (g, c) in global.iter_mut().zip(labeler.counts(im)) {
                *g += c;
            }
        }
        labeler.fallback = argmax(&global);
        Ok(labeler)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fallback(&self) -> usize {
        self.fallback
    }

    /// Non-common instance counts per cluster.
    pub fn counts(&self, image: &ImageRecord) -> Vec<u64> {
        let mut counts = vec![0u64; self.k];
        for c in self.dataset.instance_indices(image) {
            if let Some(cluster) = self.table[c] {
                counts[cluster] += 1;
            }
        }
        counts
    }

    pub fn dominant_context(&self, image: &ImageRecord) -> usize {
        let counts = self.counts(image);
        if counts.iter().all(|&c| c == 0) {
            self.fallback
        } else {
            argmax(&counts)
        }
    }

    pub fn context_fractions(&self, image: &ImageRecord) -> Vec<f64> {
        let counts = self.counts(image);
        let total: u64 = counts.iter().sum();
        if total == 0 {
            let mut v = vec![0.0; self.k];
            v[self.fallback] = 1.0;
            return v;
        }
        counts.iter().map(|&c| c as f64 / total as f64).collect()
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Simulated controller confidences. The noisy controller perturbs the
/// fractions with Gaussian noise from a generator keyed by
/// `(seed, image_id)`, so each image's draw is independent of evaluation
/// order.
pub fn controller_scores(fractions: &[f64], model: &ControllerModel, image_id: i64) -> Vec<f64> {
    if model.kind == ControllerKind::Oracle || model.noise_sigma == 0.0 {
        return fractions.to_vec();
    }
    let key = splitmix64(model.seed) ^ splitmix64(image_id as u64 ^ 0x5bd1_e995);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    let normal = Normal::new(0.0, model.noise_sigma).expect("validated sigma");
    fractions
        .iter()
        .map(|&f| (f + normal.sample(&mut rng)).clamp(0.0, 1.0))
        .collect()
}

/// Branches to execute, ascending. Multi mode selects every score at or
/// above the threshold (so a zero threshold runs every branch) and falls
/// back to the argmax when none qualifies.
pub fn route(scores: &[f64], policy: &RoutingPolicy) -> Vec<usize> {
    let top = argmax(scores);
    match policy.mode {
        RoutingMode::Single => vec![top],
        RoutingMode::Multi => {
            let picked: Vec<usize> = (0..scores.len())
                .filter(|&i| scores[i] >= policy.threshold)
                .collect();
            if picked.is_empty() {
                vec![top]
            } else {
                picked
            }
        }
    }
}

/// `(covered, total)` instance counts for `image` when `executed` branches run.
pub fn coverage(
    dataset: &Dataset,
    image: &ImageRecord,
    executed: &[usize],
    plans: &[BranchPlan],
) -> (u64, u64) {
    let mut covered = 0;
    let mut total = 0;
    for c in dataset.instance_indices(image) {
        total += 1;
        if executed
            .iter()
            .any(|&b| plans[b].classes.binary_search(&c).is_ok())
        {
            covered += 1;
        }
    }
    (covered, total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineCost {
    /// Cost per GMAC.
    pub per_gmac: f64,
    /// Cost at zero MACs.
    pub fixed: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
}

impl AffineCost {
    pub fn eval(&self, gmacs: f64) -> f64 {
        self.per_gmac * gmacs + self.fixed
    }
}

/// Affine latency (ms) and energy (mJ) per inference as functions of GMACs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub latency_ms: AffineCost,
    pub energy_mj: AffineCost,
}

impl CostModel {
    pub fn new(latency_ms: AffineCost, energy_mj: AffineCost) -> Result<Self> {
        for (what, c) in [("latency", latency_ms), ("energy", energy_mj)] {
            if !(c.per_gmac >= 0.0
                && c.fixed >= 0.0
                && c.per_gmac.is_finite()
                && c.fixed.is_finite())
            {
                return Err(Error::Parameter(format!(
                    "{what} cost coefficients must be finite and >= 0, got slope {} intercept {}",
                    c.per_gmac, c.fixed
                )));
            }
        }
        Ok(Self {
            latency_ms,
            energy_mj,
        })
    }

    pub fn latency(&self, macs: u64) -> f64 {
        self.latency_ms.eval(macs as f64 / 1e9)
    }

    pub fn energy(&self, macs: u64) -> f64 {
        self.energy_mj.eval(macs as f64 / 1e9)
    }
}

/// Ordinary least-squares line through `(x, y)` samples, with R².
pub fn fit_affine(samples: &[(f64, f64)]) -> Result<AffineCost> {
    if samples.len() < 2 {
        return Err(Error::Parameter(format!(
            "affine fit needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let n = samples.len() as f64;
    let mx = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let my = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let sxx: f64 = samples.iter().map(|s| (s.0 - mx).powi(2)).sum();
    let sxy: f64 = samples.iter().map(|s| (s.0 - mx) * (s.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Parameter(
            "affine fit needs at least two distinct x values".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = samples.iter().map(|s| (s.1 - my).powi(2)).sum();
    let ss_res: f64 = samples
        .iter()
        .map(|s| (s.1 - (slope * s.0 + intercept)).powi(2))
        .sum();
    let r2 = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(AffineCost {
        per_gmac: slope,
        fixed: intercept,
        r2: Some(r2),
    })
}

/// Fits latency and energy lines from `(GMACs, ms)` and `(GMACs, mJ)` samples.
pub fn calibrate_cost_model(latency: &[(f64, f64)], energy: &[(f64, f64)]) -> Result<CostModel> {
    CostModel::new(fit_affine(latency)?, fit_affine(energy)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSimResult {
    pub image_id: i64,
    pub true_dominant: usize,
    pub scores: Vec<f64>,
    pub executed: Vec<usize>,
    pub covered_instances: u64,
    pub total_instances: u64,
    pub dynamic_params: u64,
    pub dynamic_macs: u64,
}

impl ImageSimResult {
    /// Covered fraction; images without instances count as fully covered.
    pub fn coverage(&self) -> f64 {
        if self.total_instances == 0 {
            1.0
        } else {
            self.covered_instances as f64 / self.total_instances as f64
        }
    }

    pub fn controller_correct(&self) -> bool {
        argmax(&self.scores) == self.true_dominant
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub n_images: usize,
    /// Mean of per-image coverage.
    pub mean_coverage: f64,
    /// Covered over total instances across the dataset.
    pub instance_coverage: f64,
    pub controller_accuracy: f64,
    pub mean_branches_executed: f64,
    pub mean_dynamic_macs: f64,
    pub mean_dynamic_params: f64,
    pub static_params: u64,
    pub mean_latency_ms: f64,
    pub mean_energy_mj: f64,
}

impl Aggregates {
    /// Reduces rows in the given order (callers keep image-id order).
    pub fn from_rows(rows: &[ImageSimResult], static_params: u64, cost: &CostModel) -> Self {
        let n = rows.len().max(1) as f64;
        let mut coverage = 0.0;
        let (mut covered, mut total) = (0u64, 0u64);
        let mut correct = 0usize;
        let mut executed = 0usize;
        let (mut macs, mut params, mut latency, mut energy) = (0.0, 0.0, 0.0, 0.0);
        for r in rows {
            coverage += r.coverage();
            covered += r.covered_instances;
            total += r.total_instances;
            correct += r.controller_correct() as usize;
            executed += r.executed.len();
            macs += r.dynamic_macs as f64;
            params += r.dynamic_params as f64;
            latency += cost.latency(r.dynamic_macs);
            energy += cost.energy(r.dynamic_macs);
        }
        Self {
            n_images: rows.len(),
            mean_coverage: if rows.is_empty() { 1.0 } else { coverage / n },
            instance_coverage: if total == 0 {
                1.0
            } else {
                covered as f64 / total as f64
            },
            controller_accuracy: correct as f64 / n,
            mean_branches_executed: executed as f64 / n,
            mean_dynamic_macs: macs / n,
            mean_dynamic_params: params / n,
            static_params,
            mean_latency_ms: latency / n,
            mean_energy_mj: energy / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub policy: RoutingPolicy,
    pub controller: ControllerModel,
    pub note: String,
    pub aggregates: Aggregates,
    pub images: Vec<ImageSimResult>,
}

fn check_consistency(assignment: &ClusterAssignment, plan: &ModelPlan) -> Result<()> {
    if plan.branches.len() != assignment.k {
        return Err(Error::Config(format!(
            "assignment has {} clusters but the model plan has {} branches",
            assignment.k,
            plan.branches.len()
        )));
    }
    for (i, b) in plan.branches.iter().enumerate() {
        if b.branch_id != i {
            return Err(Error::Config(format!(
                "branch at position {i} has id {}",
                b.branch_id
            )));
        }
        if b.classes.iter().any(|&c| c >= assignment.n_categories) {
            return Err(Error::Config(format!(
                "branch {i} serves an unknown category"
            )));
        }
    }
    Ok(())
}

/// Runs every image through scoring, routing and accounting.
pub fn simulate(
    dataset: &Dataset,
    assignment: &ClusterAssignment,
    plan: &ModelPlan,
    controller: &ControllerModel,
    policy: &RoutingPolicy,
    cost: &CostModel,
) -> Result<SimulationReport> {
    controller.validate()?;
    policy.validate()?;
    check_consistency(assignment, plan)?;
    let labeler = ContextLabeler::new(dataset, assignment)?;

    let rows: Vec<ImageSimResult> = dataset
        .images()
        .iter()
        .map(|im| {
            let fractions = labeler.context_fractions(im);
            let scores = controller_scores(&fractions, controller, im.image_id);
            let executed = route(&scores, policy);
            let (covered, total) = coverage(dataset, im, &executed, &plan.branches);
            ImageSimResult {
                image_id: im.image_id,
                true_dominant: labeler.dominant_context(im),
                dynamic_params: plan.dynamic_params(&executed),
                dynamic_macs: plan.dynamic_macs(&executed),
                scores,
                executed,
                covered_instances: covered,
                total_instances: total,
            }
        })
        .collect();

    Ok(SimulationReport {
        policy: *policy,
        controller: controller.clone(),
        note: ACCURACY_PROXY_NOTE.to_string(),
        aggregates: Aggregates::from_rows(&rows, plan.static_params(), cost),
        images: rows,
    })
}

/// One report per policy, in the given order.
pub fn simulate_sweep(
    dataset: &Dataset,
    assignment: &ClusterAssignment,
    plan: &ModelPlan,
    controller: &ControllerModel,
    policies: &[RoutingPolicy],
    cost: &CostModel,
) -> Result<Vec<SimulationReport>> {
    policies
        .iter()
        .map(|p| simulate(dataset, assignment, plan, controller, p, cost))
        .collect()
}

/// Top-1 controller accuracy over `dataset` for a noisy controller.
pub fn controller_accuracy(
    labeler: &ContextLabeler<'_>,
    dataset: &Dataset,
    model: &ControllerModel,
) -> f64 {
    let images = dataset.images();
    if images.is_empty() {
        return 1.0;
    }
    let correct = images
        .iter()
        .filter(|im| {
            let scores = controller_scores(&labeler.context_fractions(im), model, im.image_id);
            argmax(&scores) == labeler.dominant_context(im)
        })
        .count();
    correct as f64 / images.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerCalibration {
    pub sigma: f64,
    pub accuracy: f64,
    pub target: f64,
}

/// Bisects the noise scale so that the noisy controller's top-1 accuracy on
/// `dataset` approaches `target` (a fraction in (0, 1]).
pub fn calibrate_controller(
    dataset: &Dataset,
    assignment: &ClusterAssignment,
    target: f64,
    seed: u64,
) -> Result<ControllerCalibration> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::Parameter(format!(
            "target accuracy {target} outside (0, 1]"
        )));
    }
    let labeler = ContextLabeler::new(dataset, assignment)?;
    let acc =
        |sigma: f64| controller_accuracy(&labeler, dataset, &ControllerModel::noisy(sigma, seed));

    let at_zero = acc(0.0);
    if at_zero < target {
        return Err(Error::Parameter(format!(
            "target accuracy {target} exceeds the noiseless accuracy {at_zero}"
        )));
    }
    let mut best = ControllerCalibration {
        sigma: 0.0,
        accuracy: at_zero,
        target,
    };
    let mut lo = 0.0;
    let mut hi = 0.25;
    let mut acc_hi = acc(hi);
    while acc_hi >= target {
        if hi > 1e3 {
            return Ok(best);
        }
        lo = hi;
        best = ControllerCalibration {
            sigma: hi,
            accuracy: acc_hi,
            target,
        };
        hi *= 2.0;
        acc_hi = acc(hi);
    }
    if (acc_hi - target).abs() < (best.accuracy - target).abs() {
        best = ControllerCalibration {
            sigma: hi,
            accuracy: acc_hi,
            target,
        };
    }
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        let a = acc(mid);
        if (a - target).abs() < (best.accuracy - target).abs() {
            best = ControllerCalibration {
                sigma: mid,
                accuracy: a,
                target,
            };
        }
        if a >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branch_design::LayerSpec;
    use crate::ingest::parse_annotations;

    // categories: car(1), couch(2), person(3)
    fn toy() -> (Dataset, ClusterAssignment) {
        let ds = parse_annotations(
            r#"{"categories":[{"id":1,"name":"car"},{"id":2,"name":"couch"},{"id":3,"name":"person"}],
               "images":[{"id":1},{"id":2},{"id":3},{"id":4}],
               "annotations":[
                 {"image_id":1,"category_id":1,"bbox":[0,0,1,1]},
                 {"image_id":1,"category_id":1,"bbox":[0,0,1,1]},
                 {"image_id":1,"category_id":2,"bbox":[0,0,1,1]},
                 {"image_id":2,"category_id":3,"bbox":[0,0,1,1]},
                 {"image_id":2,"category_id":3,"bbox":[0,0,1,1]},
                 {"image_id":2,"category_id":3,"bbox":[0,0,1,1]},
                 {"image_id":2,"category_id":3,"bbox":[0,0,1,1]},
                 {"image_id":2,"category_id":3,"bbox":[0,0,1,1]},
                 {"image_id":2,"category_id":2,"bbox":[0,0,1,1]},
                 {"image_id":3,"category_id":1,"bbox":[0,0,1,1]},
                 {"image_id":3,"category_id":2,"bbox":[0,0,1,1]}]}"#,
        )
        .unwrap();
        let a = ClusterAssignment {
            k: 2,
            n_categories: 3,
            clusters: vec![vec![0], vec![1]],
            common: vec![2],
        };
        (ds, a)
    }

    fn plan_for(a: &ClusterAssignment) -> ModelPlan {
        let branches = (0..a.k)
            .map(|c| {
                let layers = vec![LayerSpec::new(1, 2, 2 + c as u64, 10)];
                BranchPlan {
                    branch_id: c,
                    classes: a.served_classes(c),
                    factor: 0.5,
                    params: crate::branch_design::count_params(&layers),
                    macs: crate::branch_design::count_macs(&layers),
                    layers,
                }
            })
            .collect();
        ModelPlan {
            backbone_params: 100,
            backbone_macs: 1000,
            controller_params: 10,
            controller_macs: 50,
            branches,
        }
    }

    fn cost() -> CostModel {
        CostModel::new(
            AffineCost {
                per_gmac: 2.0,
                fixed: 1.0,
                r2: None,
            },
            AffineCost {
                per_gmac: 3.0,
                fixed: 0.5,
                r2: None,
            },
        )
        .unwrap()
    }

    #[test]
    fn dominant_context_rules() {
        let (ds, a) = toy();
        let l = ContextLabeler::new(&ds, &a).unwrap();
        let im = &ds.images();
        assert_eq!(l.dominant_context(&im[0]), 0); // car, car, couch
        assert_eq!(l.dominant_context(&im[1]), 1); // person x5 excluded, couch
        assert_eq!(l.dominant_context(&im[2]), 0); // tie -> lowest id
                                                   // empty image -> global most frequent: car 3, couch 3 -> cluster 0
        assert_eq!(l.fallback(), 0);
        assert_eq!(l.dominant_context(&im[3]), 0);
    }

    #[test]
    fn fractions() {
        let (ds, a) = toy();
        let l = ContextLabeler::new(&ds, &a).unwrap();
        let f = l.context_fractions(&ds.images()[0]);
        assert_eq!(f, vec![2.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(l.context_fractions(&ds.images()[1]), vec![0.0, 1.0]);
        assert_eq!(l.context_fractions(&ds.images()[3]), vec![1.0, 0.0]);
    }

    #[test]
    fn oracle_and_zero_noise_scores() {
        assert_eq!(
            controller_scores(&[0.7, 0.3], &ControllerModel::oracle(), 5),
            vec![0.7, 0.3]
        );
        assert_eq!(
            controller_scores(&[0.7, 0.3], &ControllerModel::noisy(0.0, 9), 5),
            vec![0.7, 0.3]
        );
    }

    #[test]
    fn noisy_scores_are_keyed_by_image() {
        let m = ControllerModel::noisy(0.2, 4);
        let a = controller_scores(&[0.5, 0.5, 0.0], &m, 17);
        assert_eq!(a, controller_scores(&[0.5, 0.5, 0.0], &m, 17));
        assert_ne!(a, controller_scores(&[0.5, 0.5, 0.0], &m, 18));
        assert!(a.iter().all(|s| (0.0..=1.0).contains(s)));
    }

    #[test]
    fn routing_rules() {
        assert_eq!(route(&[0.9, 0.2], &RoutingPolicy::single()), vec![0]);
        assert_eq!(route(&[0.9, 0.2], &RoutingPolicy::multi(0.1)), vec![0, 1]);
        assert_eq!(route(&[0.05, 0.02], &RoutingPolicy::multi(0.1)), vec![0]);
        assert_eq!(route(&[1.0, 0.0], &RoutingPolicy::multi(0.0)), vec![0, 1]);
        assert_eq!(route(&[0.4, 0.4], &RoutingPolicy::single()), vec![0]);
    }

    #[test]
    fn coverage_cases() {
        let (ds, a) = toy();
        let plan = plan_for(&a);
        let im = &ds.images()[2]; // car, couch
        assert_eq!(coverage(&ds, im, &[0], &plan.branches), (1, 2));
        assert_eq!(coverage(&ds, im, &[0, 1], &plan.branches), (2, 2));
        // person always covered
        assert_eq!(coverage(&ds, &ds.images()[1], &[0], &plan.branches), (5, 6));
    }

    #[test]
    fn affine_fit_exact_and_two_point() {
        let fit = fit_affine(&[(1.0, 5.0), (2.0, 7.0), (4.0, 11.0)]).unwrap();
        assert!((fit.per_gmac - 2.0).abs() < 1e-12);
        assert!((fit.fixed - 3.0).abs() < 1e-12);
        assert!((fit.r2.unwrap() - 1.0).abs() < 1e-12);

        let fit = fit_affine(&[(41.08, 823.0), (26.50, 659.0)]).unwrap();
        assert!((fit.per_gmac - 11.25).abs() / 11.25 < 0.01);
        assert!((fit.fixed - 360.9).abs() / 360.9 < 0.01);

        assert!(fit_affine(&[(1.0, 1.0)]).is_err());
        assert!(fit_affine(&[(1.0, 1.0), (1.0, 2.0)]).is_err());
    }

    #[test]
    fn negative_cost_rejected() {
        assert!(
            calibrate_cost_model(&[(1.0, 5.0), (2.0, 3.0)], &[(1.0, 1.0), (2.0, 2.0)]).is_err()
        );
    }

    #[test]
    fn all_branches_at_zero_threshold() {
        let (ds, a) = toy();
        let plan = plan_for(&a);
        let r = simulate(
            &ds,
            &a,
            &plan,
            &ControllerModel::oracle(),
            &RoutingPolicy::multi(0.0),
            &cost(),
        )
        .unwrap();
        let full = plan.dynamic_macs(&[0, 1]);
        for row in &r.images {
            assert_eq!(row.executed.len(), 2, "{row:?}");
            assert_eq!(row.dynamic_macs, full);
        }
        assert_eq!(r.aggregates.mean_coverage, 1.0);
    }

    #[test]
    fn mismatched_plan_is_config_error() {
        let (ds, a) = toy();
        let mut plan = plan_for(&a);
        plan.branches.pop();
        let err = simulate(
            &ds,
            &a,
            &plan,
            &ControllerModel::oracle(),
            &RoutingPolicy::single(),
            &cost(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn aggregates_recompute() {
        let (ds, a) = toy();
        let plan = plan_for(&a);
        let r = simulate(
            &ds,
            &a,
            &plan,
            &ControllerModel::noisy(0.3, 1),
            &RoutingPolicy::multi(0.2),
            &cost(),
        )
        .unwrap();
        assert_eq!(
            r.aggregates,
            Aggregates::from_rows(&r.images, plan.static_params(), &cost())
        );
        assert!(r
            .images
            .iter()
            .all(|row| row.dynamic_params <= plan.static_params()));
    }

    #[test]
    fn oracle_validation() {
        let mut m = ControllerModel::oracle();
        m.noise_sigma = 0.1;
        assert!(m.validate().is_err());
        assert!(ControllerModel::noisy(-1.0, 0).validate().is_err());
    }
}
