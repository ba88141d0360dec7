mod common;

use std::collections::BTreeSet;

use cobranch::branch_design::{compress_template, count_macs, count_params, plan_branches};
use cobranch::clustering::{agglomerative_cluster, build_dendrogram, Linkage};
use cobranch::cooccurrence::{build_cooccurrence, build_presence, phi_correlation};
use cobranch::ingest::{Category, Dataset, ImageRecord};
use cobranch::layout::{Layout, LayoutParams};
use cobranch::pareto::{build_report, pareto_front, percent_delta, ConfigPoint, CostAxis};
use cobranch::runtime_sim::{route, ModelPlan, RoutingPolicy};
use proptest::prelude::*;

use common::{dataset_from_counts, round_robin_assignment, toy_template};

fn presence_rows(
    max_images: usize,
    max_cats: usize,
) -> impl Strategy<Value = (usize, Vec<Vec<bool>>)> {
    (1..=max_cats).prop_flat_map(move |n_cat| {
        (
            Just(n_cat),
            prop::collection::vec(prop::collection::vec(any::<bool>(), n_cat), 2..=max_images),
        )
    })
}

fn dataset_from_bools(n_cat: usize, rows: &[Vec<bool>]) -> Dataset {
    let images: Vec<Vec<(usize, usize)>> = rows
        .iter()
        .map(|r| {
            (0..n_cat)
                .filter(|&c| r[c])
                .map(|c| (c, 1 + c % 2))
                .collect()
        })
        .collect();
    dataset_from_counts(n_cat, &images)
}

/// Pearson correlation of two 0/1 columns via means and deviations.
fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

fn point(name: String, accuracy: f64, latency: f64, energy: f64) -> ConfigPoint {
    ConfigPoint {
        name,
        group: String::new(),
        accuracy,
        latency_ms: latency,
        energy_mj: energy,
        sparam_m: 10.0,
        dparam_m: 8.0,
        gmacs: 5.0,
    }
}

fn points_strategy() -> impl Strategy<Value = Vec<ConfigPoint>> {
    prop::collection::vec((1u32..100, 1u32..100, 1u32..100), 1..12).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (a, l, e))| point(format!("p{i}"), a as f64, l as f64, e as f64))
            .collect()
    })
}

fn frontier_names(points: &[ConfigPoint], axis: CostAxis) -> BTreeSet<String> {
    pareto_front(points, axis)
        .frontier
        .into_iter()
        .map(|i| points[i].name.clone())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn cooccurrence_matches_brute_force((n_cat, rows) in presence_rows(20, 10)) {
        let ds = dataset_from_bools(n_cat, &rows);
        let c = build_cooccurrence(&build_presence(&ds));
        for a in 0..n_cat {
            for b in 0..n_cat {
                let expected = rows.iter().filter(|r| r[a] && r[b]).count() as u64;
                prop_assert_eq!(c.get(a, b), expected);
                prop_assert_eq!(c.get(a, b), c.get(b, a));
            }
        }
    }

    #[test]
    fn phi_matches_pearson_and_stays_in_range((n_cat, rows) in presence_rows(20, 10)) {
        let ds = dataset_from_bools(n_cat, &rows);
        let rho = phi_correlation(&build_presence(&ds)).unwrap();
        let col = |c: usize| -> Vec<f64> { rows.iter().map(|r| r[c] as u8 as f64).collect() };
        for a in 0..n_cat {
            for b in 0..n_cat {
                let v = rho.get(a, b);
                prop_assert!((-1.0..=1.0).contains(&v));
                prop_assert_eq!(v, rho.get(b, a));
                prop_assert!((v - pearson(&col(a), &col(b))).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn phi_is_permutation_equivariant(
        (n_cat, rows) in presence_rows(15, 8),
        seed in any::<u64>(),
    ) {
        let ds = dataset_from_bools(n_cat, &rows);
        let rho = phi_correlation(&build_presence(&ds)).unwrap();

        // Relabel category ids with a shuffled order.
        let mut perm: Vec<usize> = (0..n_cat).collect();
        let mut s = seed;
        for i in (1..n_cat).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let cats = (0..n_cat)
            .map(|c| Category { id: perm[c] as i64 + 1, name: format!("c{c}") })
            .collect();
        let images: Vec<ImageRecord> = ds
            .images()
            .iter()
            .map(|im| ImageRecord {
                image_id: im.image_id,
                instances: im
                    .instances
                    .iter()
                    .map(|inst| {
                        let mut i = inst.clone();
                        i.category_id = perm[(inst.category_id - 1) as usize] as i64 + 1;
                        i
                    })
                    .collect(),
            })
            .collect();
        let shuffled = Dataset::new(cats, images).unwrap();
        let rho2 = phi_correlation(&build_presence(&shuffled)).unwrap();
        for a in 0..n_cat {
            for b in 0..n_cat {
                prop_assert_eq!(rho.get(a, b), rho2.get(perm[a], perm[b]));
            }
        }
    }

    #[test]
    fn clustering_ignores_layout_translation(
        pts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3..16),
        dx in -5.0f64..5.0,
        dy in -5.0f64..5.0,
        k in 1usize..4,
    ) {
        let n = pts.len();
        let layout = Layout {
            nodes: (0..n).collect(),
            positions: pts.iter().map(|&(x, y)| [x, y]).collect(),
            params: LayoutParams::default(),
            seed: 0,
        };
        let a = agglomerative_cluster(&layout, k, Linkage::Ward, n).unwrap();
        let b = agglomerative_cluster(&layout.translated(dx, dy), k, Linkage::Ward, n).unwrap();
        prop_assert_eq!(a.clusters, b.clusters);
    }

    #[test]
    fn dendrogram_cuts_are_nested(
        pts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..16),
        linkage in prop_oneof![Just(Linkage::Ward), Just(Linkage::Single), Just(Linkage::Complete), Just(Linkage::Average)],
    ) {
        let positions: Vec<[f64; 2]> = pts.iter().map(|&(x, y)| [x, y]).collect();
        let d = build_dendrogram(&positions, linkage);
        let n = positions.len();
        for k in 1..n {
            let coarse = d.cut(k).unwrap();
            let fine = d.cut(k + 1).unwrap();
            prop_assert_eq!(coarse.iter().collect::<BTreeSet<_>>().len(), k);
            for i in 0..n {
                for j in 0..n {
                    if fine[i] == fine[j] {
                        prop_assert_eq!(coarse[i], coarse[j]);
                    }
                }
            }
        }
    }

    #[test]
    fn params_and_macs_grow_with_factor(a in 1u64..=30, b in 1u64..=30, classes in 1u64..20) {
        let t = toy_template();
        let (lo, hi) = (a.min(b) as f64 / 30.0, a.max(b) as f64 / 30.0);
        let small = compress_template(&t, lo, classes).unwrap();
        let large = compress_template(&t, hi, classes).unwrap();
        prop_assert!(small.params <= large.params);
        prop_assert!(small.macs <= large.macs);
        prop_assert_eq!(small.params, count_params(&small.layers));
        prop_assert_eq!(small.macs, count_macs(&small.layers));
    }

    #[test]
    fn dparam_never_exceeds_sparam(
        n_cat in 2usize..12,
        k in 1usize..4,
        subset in prop::collection::vec(any::<bool>(), 4),
    ) {
        prop_assume!(k <= n_cat);
        let assignment = round_robin_assignment(n_cat, k, &[]);
        let branches = plan_branches(&assignment, &toy_template()).unwrap();
        let plan = ModelPlan { backbone_params: 1000, backbone_macs: 5000, controller_params: 10, controller_macs: 50, branches };
        let executed: Vec<usize> = (0..k).filter(|&i| subset[i]).collect();
        prop_assert!(plan.dynamic_params(&executed) <= plan.static_params());
    }

    #[test]
    fn percent_delta_inverse_identity(b in 0.01f64..1e4, v in 0.01f64..1e4) {
        let d1 = percent_delta(b, v).unwrap();
        let d2 = percent_delta(v, b).unwrap();
        prop_assert!(((1.0 + d1 / 100.0) * (1.0 + d2 / 100.0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn efficiency_delta_ignores_units(pts in points_strategy(), se in 0.001f64..1000.0, sl in 0.001f64..1000.0) {
        let base = pts[0].name.clone();
        let scaled: Vec<ConfigPoint> = pts
            .iter()
            .map(|p| ConfigPoint { energy_mj: p.energy_mj * se, latency_ms: p.latency_ms * sl, ..p.clone() })
            .collect();
        let r1 = build_report(&pts, &base, CostAxis::Energy).unwrap();
        let r2 = build_report(&scaled, &base, CostAxis::Energy).unwrap();
        for (a, b) in r1.rows.iter().zip(&r2.rows) {
            prop_assert!((a.deltas.efficiency - b.deltas.efficiency).abs() < 1e-7);
        }
    }

    #[test]
    fn frontier_ignores_order_and_dominated_duplicates(pts in points_strategy(), rot in 0usize..12) {
        for axis in [CostAxis::Energy, CostAxis::Latency] {
            let reference = frontier_names(&pts, axis);
            let mut rotated = pts.clone();
            let len = rotated.len();
            rotated.rotate_left(rot % len);
            rotated.reverse();
            prop_assert_eq!(&frontier_names(&rotated, axis), &reference);

            let front = pareto_front(&pts, axis);
            let mut padded = pts.clone();
            for &i in &front.dominated {
                let mut dup = pts[i].clone();
                dup.name = format!("{}-dup", dup.name);
                padded.push(dup);
            }
            prop_assert_eq!(&frontier_names(&padded, axis), &reference);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn executed_sets_shrink_as_threshold_rises(
        scores in prop::collection::vec(0.0f64..=1.0, 1..8),
        t1 in 0.0f64..=1.0,
        t2 in 0.0f64..=1.0,
    ) {
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        let a: BTreeSet<usize> = route(&scores, &RoutingPolicy::multi(lo)).into_iter().collect();
        let b: BTreeSet<usize> = route(&scores, &RoutingPolicy::multi(hi)).into_iter().collect();
        prop_assert!(b.is_subset(&a));
        prop_assert_eq!(route(&scores, &RoutingPolicy::multi(0.0)).len(), scores.len());
        prop_assert_eq!(route(&scores, &RoutingPolicy::single()).len(), 1);
    }
}
