//! COCO-style annotation loading.
//!
//! Only the subset needed for co-occurrence statistics is read:
//! `categories[{id,name}]`, `images[{id}]` and
//! `annotations[{image_id,category_id,bbox}]`. Everything else in the file
//! (segmentation, crowd flags, licenses) is ignored.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};

/// Identifier written into dataset snapshots.
pub const SNAPSHOT_FORMAT: &str = "cobranch-dataset";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: i64,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub category_id: i64,
    /// `[x, y, width, height]` in pixels.
    pub bbox: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: i64,
    pub instances: Vec<Instance>,
}

/// Normalized annotation set. Categories are sorted by id and addressed by
/// their position in that order (the "category index") everywhere else in
/// the crate.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    categories: Vec<Category>,
    images: Vec<ImageRecord>,
    index: BTreeMap<i64, usize>,
}

impl Dataset {
    /// Builds a dataset, validating category uniqueness, referential
    /// integrity and bbox extents. Categories are sorted by id, images by
    /// image id.
    pub fn new(mut categories: Vec<Category>, mut images: Vec<ImageRecord>) -> Result<Self> {
        categories.sort_by_key(|c| c.id);
        let mut index = BTreeMap::new();
        for (i, c) in categories.iter().enumerate() {
            if index.insert(c.id, i).is_some() {
                return Err(Error::Schema(format!("duplicate category id {}", c.id)));
            }
        }
        images.sort_by_key(|im| im.image_id);
        for pair in images.windows(2) {
            if pair[0].image_id == pair[1].image_id {
                return Err(Error::Schema(format!(
                    "duplicate image id {}",
                    pair[0].image_id
                )));
            }
        }
        for im in &images {
            for inst in &im.instances {
                if !index.contains_key(&inst.category_id) {
                    return Err(Error::Schema(format!(
                        "image {} references unknown category_id {}",
                        im.image_id, inst.category_id
                    )));
                }
                check_bbox(&inst.bbox, &format!("instance in image {}", im.image_id))?;
            }
        }
        Ok(Self {
            categories,
            images,
            index,
        })
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn images(&self) -> &[ImageRecord] {
        &self.images
    }

    pub fn n_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn n_images(&self) -> usize {
        self.images.len()
    }

    pub fn category_index(&self, category_id: i64) -> Option<usize> {
        self.index.get(&category_id).copied()
    }

    pub fn category_names(&self) -> Vec<String> {
        self.categories.iter().map(|c| c.name.clone()).collect()
    }

    /// Category indices of every instance in `image`, in annotation order.
    pub fn instance_indices<'a>(
        &'a self,
        image: &'a ImageRecord,
    ) -> impl Iterator<Item = usize> + 'a {
        image
            .instances
            .iter()
            .map(move |inst| self.index[&inst.category_id])
    }

    /// Serializes back into the COCO annotation subset understood by
    /// [`parse_annotations`].
    pub fn to_coco_json(&self) -> Value {
        let mut annotations = Vec::new();
        let mut next_id = 1u64;
        for im in &self.images {
            for inst in &im.instances {
                annotations.push(json!({
                    "id": next_id,
                    "image_id": im.image_id,
                    "category_id": inst.category_id,
                    "bbox": inst.bbox,
                }));
                next_id += 1;
            }
        }
        json!({
            "categories": self.categories,
            "images": self.images.iter().map(|im| json!({"id": im.image_id})).collect::<Vec<_>>(),
            "annotations": annotations,
        })
    }

    /// Writes the toolkit's own JSON snapshot (see README for the layout).
    pub fn to_snapshot(&self) -> Value {
        json!({
            "format": SNAPSHOT_FORMAT,
            "version": SNAPSHOT_VERSION,
            "categories": self.categories,
            "images": self.images,
        })
    }

    pub fn from_snapshot(value: Value) -> Result<Self> {
        #[derive(Deserialize)]
        struct Snapshot {
            format: String,
            version: u32,
            categories: Vec<Category>,
            images: Vec<ImageRecord>,
        }
        let snap: Snapshot = serde_json::from_value(value)?;
        if snap.format != SNAPSHOT_FORMAT {
            return Err(Error::Schema(format!(
                "not a dataset snapshot (format {:?})",
                snap.format
            )));
        }
        if snap.version != SNAPSHOT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported snapshot version {}",
                snap.version
            )));
        }
        Dataset::new(snap.categories, snap.images)
    }

    pub fn read_snapshot(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_snapshot(serde_json::from_str(&text)?)
    }
}

fn check_bbox(bbox: &[f64; 4], what: &str) -> Result<()> {
    if bbox.iter().any(|v| !v.is_finite()) {
        return Err(Error::Schema(format!("{what}: non-finite bbox {bbox:?}")));
    }
    if bbox[2] <= 0.0 || bbox[3] <= 0.0 {
        return Err(Error::Schema(format!(
            "{what}: non-positive bbox extent {bbox:?}"
        )));
    }
    Ok(())
}

#[derive(Deserialize)]
struct RawCoco {
    categories: Option<Vec<RawCategory>>,
    images: Option<Vec<RawImage>>,
    annotations: Option<Vec<RawAnnotation>>,
}

#[derive(Deserialize)]
struct RawCategory {
    id: Option<i64>,
    name: Option<String>,
}

#[derive(Deserialize)]
struct RawImage {
    id: Option<i64>,
}

#[derive(Deserialize)]
struct RawAnnotation {
    id: Option<Value>,
    image_id: Option<i64>,
    category_id: Option<i64>,
    bbox: Option<Vec<f64>>,
}

/// Parses annotation JSON text.
pub fn parse_annotations(text: &str) -> Result<Dataset> {
    let raw: RawCoco = serde_json::from_str(text)?;
    let missing = |key: &str| Error::Schema(format!("missing top-level key `{key}`"));
    let raw_categories = raw.categories.ok_or_else(|| missing("categories"))?;
    let raw_images = raw.images.ok_or_else(|| missing("images"))?;
    let raw_annotations = raw.annotations.ok_or_else(|| missing("annotations"))?;

    let mut categories = Vec::with_capacity(raw_categories.len());
    for (i, c) in raw_categories.into_iter().enumerate() {
        let id =
            c.id.ok_or_else(|| Error::Schema(format!("categories[{i}]: missing `id`")))?;
        let name = c
            .name
            .ok_or_else(|| Error::Schema(format!("categories[{i}] (id {id}): missing `name`")))?;
        categories.push(Category { id, name });
    }

    let mut grouped: BTreeMap<i64, Vec<Instance>> = BTreeMap::new();
    for (i, im) in raw_images.into_iter().enumerate() {
        let id = im
            .id
            .ok_or_else(|| Error::Schema(format!("images[{i}]: missing `id`")))?;
        if grouped.insert(id, Vec::new()).is_some() {
            return Err(Error::Schema(format!(
                "images[{i}]: duplicate image id {id}"
            )));
        }
    }

    let known: BTreeMap<i64, ()> = categories.iter().map(|c| (c.id, ())).collect();
    for (i, a) in raw_annotations.into_iter().enumerate() {
        let label = match &a.id {
            Some(id) => format!("annotations[{i}] (id {id})"),
            None => format!("annotations[{i}]"),
        };
        let image_id = a
            .image_id
            .ok_or_else(|| Error::Schema(format!("{label}: missing `image_id`")))?;
        let category_id = a
            .category_id
            .ok_or_else(|| Error::Schema(format!("{label}: missing `category_id`")))?;
        let bbox = a
            .bbox
            .ok_or_else(|| Error::Schema(format!("{label}: missing `bbox`")))?;
        let bbox: [f64; 4] = bbox.try_into().map_err(|b: Vec<f64>| {
            Error::Schema(format!("{label}: bbox has {} values, expected 4", b.len()))
        })?;
        if !known.contains_key(&category_id) {
            return Err(Error::Schema(format!(
                "{label}: unknown category_id {category_id}"
            )));
        }
        check_bbox(&bbox, &label)?;
        let slot = grouped.get_mut(&image_id).ok_or_else(|| {
            Error::Schema(format!(
                "{label}: image_id {image_id} not present in `images`"
            ))
        })?;
        slot.push(Instance { category_id, bbox });
    }

    let images = grouped
        .into_iter()
        .map(|(image_id, instances)| ImageRecord {
            image_id,
            instances,
        })
        .collect();
    Dataset::new(categories, images)
}

/// Reads and parses a COCO annotation file.
pub fn load_annotations(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text)
}
