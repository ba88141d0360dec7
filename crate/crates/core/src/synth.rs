//! Synthetic corpora with planted spatial contexts and a planted common
//! object, used by the demo pipeline and the recovery tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::{Category, Dataset, ImageRecord, Instance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedCorpusSpec {
    /// Number of classes in each planted context.
    pub context_sizes: Vec<usize>,
    pub n_images: usize,
    /// Presence probability of each class of the image's own context.
    pub within_prob: f64,
    /// Presence probability of each class of any other context.
    pub cross_prob: f64,
    /// Presence probability of the common class in a non-empty image.
    pub common_prob: f64,
    /// Fraction of images with no annotations at all.
    pub empty_fraction: f64,
    pub max_instances_per_class: usize,
    pub seed: u64,
}

impl Default for PlantedCorpusSpec {
    fn default() -> Self {
        Self {
            context_sizes: vec![10, 10],
            n_images: 500,
            within_prob: 0.6,
            cross_prob: 0.02,
            common_prob: 0.6,
            empty_fraction: 0.3,
            max_instances_per_class: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub dataset: Dataset,
    /// Category indices of each planted context.
    pub contexts: Vec<Vec<usize>>,
    /// Category index of the planted common class.
    pub common: usize,
    /// Planted context of each image (in dataset image order), `None` for
    /// empty images.
    pub image_contexts: Vec<Option<usize>>,
}

/// Categories are laid out context by context (`ctx0_obj00`, ...) with the
/// common class `person` last. Category ids start at 1.
pub fn generate(spec: &PlantedCorpusSpec) -> PlantedCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut categories = Vec::new();
    let mut contexts = Vec::new();
    for (ctx, &size) in spec.context_sizes.iter().enumerate() {
        let mut members = Vec::new();
        for j in 0..size {
            members.push(categories.len());
            categories.push(Category {
                id: categories.len() as i64 + 1,
                name: format!("ctx{ctx}_obj{j:02}"),
            });
        }
        contexts.push(members);
    }
    let common = categories.len();
    categories.push(Category {
        id: common as i64 + 1,
        name: "person".into(),
    });

    let mut images = Vec::with_capacity(spec.n_images);
    let mut image_contexts = Vec::with_capacity(spec.n_images);
    for i in 0..spec.n_images {
        let mut instances = Vec::new();
        let empty = rng.gen::<f64>() < spec.empty_fraction;
        if empty || contexts.is_empty() {
            image_contexts.push(None);
        } else {
            let own = rng.gen_range(0..contexts.len());
            image_contexts.push(Some(own));
            for (ctx, members) in contexts.iter().enumerate() {
                let p = if ctx == own {
                    spec.within_prob
                } else {
                    spec.cross_prob
                };
                for &c in members {
                    if rng.gen::<f64>() < p {
                        push_instances(
                            &mut rng,
                            &mut instances,
                            c as i64 + 1,
                            spec.max_instances_per_class,
                        );
                    }
                }
            }
            if rng.gen::<f64>() < spec.common_prob {
                push_instances(
                    &mut rng,
                    &mut instances,
                    common as i64 + 1,
                    spec.max_instances_per_class,
                );
            }
        }
        images.push(ImageRecord {
            image_id: i as i64 + 1,
            instances,
        });
    }

    let dataset = Dataset::new(categories, images).expect("generated corpus is valid");
    PlantedCorpus {
        dataset,
        contexts,
        common,
        image_contexts,
    }
}

fn push_instances(rng: &mut ChaCha8Rng, out: &mut Vec<Instance>, category_id: i64, max: usize) {
    let count = rng.gen_range(1..=max.max(1));
    for _ in 0..count {
        let w = rng.gen_range(8.0..200.0f64).round();
        let h = rng.gen_range(8.0..200.0f64).round();
        let x = rng.gen_range(0.0..440.0f64).round();
        let y = rng.gen_range(0.0..280.0f64).round();
        out.push(Instance {
            category_id,
            bbox: [x, y, w, h],
        });
    }
}
