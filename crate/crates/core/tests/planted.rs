mod common;

use cobranch::pipeline::{cluster_dataset, ClusterParams};
use cobranch::synth::{generate, PlantedCorpusSpec};

use common::same_partition;

#[test]
fn planted_contexts_are_recovered_across_corpus_seeds() {
    for corpus_seed in [0, 1, 2] {
        let corpus = generate(&PlantedCorpusSpec {
            seed: corpus_seed,
            ..Default::default()
        });
        let mut hits = 0;
        for layout_seed in 0..5 {
            let out = cluster_dataset(
                &corpus.dataset,
                &ClusterParams {
                    layout_seed,
                    ..Default::default()
                },
            )
            .unwrap();
            assert_eq!(
                out.common.members.iter().copied().collect::<Vec<_>>(),
                vec![corpus.common]
            );
            hits += same_partition(&out.assignment.clusters, &corpus.contexts) as usize;
            // The common class rides along with every cluster.
            assert_eq!(out.assignment.common, vec![corpus.common]);
        }
        assert!(hits >= 4, "corpus seed {corpus_seed}: {hits}/5");
    }
}

#[test]
fn three_contexts_with_k3() {
    let corpus = generate(&PlantedCorpusSpec {
        context_sizes: vec![6, 6, 6],
        n_images: 600,
        seed: 11,
        ..Default::default()
    });
    let out = cluster_dataset(
        &corpus.dataset,
        &ClusterParams {
            k: 3,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(
        same_partition(&out.assignment.clusters, &corpus.contexts),
        "{:?}",
        out.assignment.clusters
    );
}
