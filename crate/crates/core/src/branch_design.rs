//! Per-context head sizing: compression factors, channel-scaled layer lists
//! and exact parameter / MAC accounting.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clustering::ClusterAssignment;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputSource {
    /// Consumes the output of the preceding layer in the list.
    #[default]
    Previous,
    /// Consumes a backbone feature map or a route from an earlier layer.
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub kernel: u64,
    pub in_channels: u64,
    pub out_channels: u64,
    /// H·W summed over the pyramid levels the layer runs on.
    #[serde(default)]
    pub spatial_elements: u64,
    /// Indices into the template's `levels`; when non-empty,
    /// `spatial_elements` is derived from them.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<usize>,
    pub scale_in: bool,
    pub scale_out: bool,
    #[serde(default)]
    pub is_prediction: bool,
    #[serde(default)]
    pub input: InputSource,
    /// Input channels that come from the backbone and never scale (the
    /// unscaled half of a concatenation).
    #[serde(default, skip_serializing_if = "is_zero")]
    pub fixed_in_channels: u64,
}

fn is_zero(v: &u64) -> bool {
    *v == 0
}

impl LayerSpec {
    pub fn new(kernel: u64, in_channels: u64, out_channels: u64, spatial_elements: u64) -> Self {
        Self {
            name: None,
            kernel,
            in_channels,
            out_channels,
            spatial_elements,
            levels: Vec::new(),
            scale_in: true,
            scale_out: true,
            is_prediction: false,
            input: InputSource::Previous,
            fixed_in_channels: 0,
        }
    }

    pub fn params(&self) -> u64 {
        self.kernel * self.kernel * self.in_channels * self.out_channels + self.out_channels
    }

    pub fn macs(&self) -> u64 {
        self.kernel * self.kernel * self.in_channels * self.out_channels * self.spatial_elements
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSize {
    pub height: u64,
    pub width: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadTemplate {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    /// Class count the template's prediction layers are sized for.
    pub native_classes: u64,
    pub anchors_per_cell: u64,
    pub box_fields: u64,
    /// Image side length at which `levels` are given.
    pub input_size: u64,
    pub levels: Vec<GridSize>,
    pub layers: Vec<LayerSpec>,
}

impl HeadTemplate {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let template: HeadTemplate = serde_json::from_str(&text)?;
        let size = template.input_size;
        template.at_image_size(size)
    }

    pub fn prediction_width(&self, num_classes: u64) -> u64 {
        self.anchors_per_cell * (num_classes + self.box_fields)
    }

    /// Rescales the pyramid grids to a square input of side `image_size`
    /// (ceil of the stride division) and recomputes every level-bound
    /// layer's `spatial_elements`. Validates the result.
    pub fn at_image_size(&self, image_size: u64) -> Result<Self> {
        if image_size == 0 || self.input_size == 0 {
            return Err(Error::Parameter("image size must be positive".into()));
        }
        let mut out = self.clone();
        out.input_size = image_size;
        out.levels = self
            .levels
            .iter()
            .map(|g| GridSize {
                height: (g.height * image_size).div_ceil(self.input_size),
                width: (g.width * image_size).div_ceil(self.input_size),
            })
            .collect();
        for (i, layer) in out.layers.iter_mut().enumerate() {
            if layer.levels.is_empty() {
                continue;
            }
            let mut total = 0;
            for &lv in &layer.levels {
                let g = out.levels.get(lv).ok_or_else(|| {
                    Error::Schema(format!("layer {i} references missing level {lv}"))
                })?;
                total += g.height * g.width;
            }
            layer.spatial_elements = total;
        }
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Schema(format!(
                "template {:?} has no layers",
                self.name
            )));
        }
        check_chain(&self.layers)?;
        for (i, l) in self.layers.iter().enumerate() {
            if l.is_prediction && l.out_channels != self.prediction_width(self.native_classes) {
                return Err(Error::Schema(format!(
                    "layer {i}: prediction width {} differs from anchors*(classes+box_fields) = {}",
                    l.out_channels,
                    self.prediction_width(self.native_classes)
                )));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> u64 {
        count_params(&self.layers)
    }

    pub fn macs(&self) -> u64 {
        count_macs(&self.layers)
    }
}

fn check_chain(layers: &[LayerSpec]) -> Result<()> {
    for (i, l) in layers.iter().enumerate() {
        if l.kernel < 1 || l.in_channels < 1 || l.out_channels < 1 {
            return Err(Error::Schema(format!(
                "layer {i}: kernel and channels must be >= 1"
            )));
        }
        if l.is_prediction && l.scale_out {
            return Err(Error::Schema(format!(
                "layer {i}: prediction layer cannot scale its output"
            )));
        }
        if l.fixed_in_channels > l.in_channels {
            return Err(Error::Schema(format!(
                "layer {i}: fixed input exceeds input width"
            )));
        }
        if l.input == InputSource::Previous {
            let Some(prev) = i.checked_sub(1).map(|p| &layers[p]) else {
                return Err(Error::Schema("first layer must take external input".into()));
            };
            if prev.out_channels != l.in_channels {
                return Err(Error::Schema(format!(
                    "layer {i}: input width {} does not match previous output {}",
                    l.in_channels, prev.out_channels
                )));
            }
        }
    }
    Ok(())
}

/// Ratio of a branch's class count to the full vocabulary.
pub fn compression_factor(branch_classes: u64, total_classes: u64) -> Result<f64> {
    if branch_classes == 0 || total_classes == 0 || branch_classes > total_classes {
        return Err(Error::Parameter(format!(
            "compression factor needs 0 < branch classes ({branch_classes}) <= total ({total_classes})"
        )));
    }
    Ok(branch_classes as f64 / total_classes as f64)
}

/// `ceil(factor * channels)`, at least 1. Products within 1e-9 of an integer
/// snap to it so that e.g. 0.6 * 5 gives 3.
pub fn scale_channels(factor: f64, channels: u64) -> u64 {
    let x = factor * channels as f64;
    let r = x.round();
    let v = if (x - r).abs() <= 1e-9 * x.max(1.0) {
        r
    } else {
        x.ceil()
    };
    (v as u64).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPlan {
    pub branch_id: usize,
    /// Category indices the branch predicts.
    pub classes: Vec<usize>,
    pub factor: f64,
    pub layers: Vec<LayerSpec>,
    pub params: u64,
    pub macs: u64,
}

impl BranchPlan {
    /// Checks that stored totals match the layer list.
    pub fn verify(&self) -> Result<()> {
        if self.params != count_params(&self.layers) || self.macs != count_macs(&self.layers) {
            return Err(Error::Consistency(format!(
                "branch {} totals disagree with its layers",
                self.branch_id
            )));
        }
        Ok(())
    }
}

/// Same depth as the template, narrower layers. Prediction layers are
/// resized to `num_classes`; the channel chain is re-established after
/// scaling.
pub fn compress_template(
    template: &HeadTemplate,
    factor: f64,
    num_classes: u64,
) -> Result<BranchPlan> {
    if !(factor > 0.0 && factor <= 1.0) {
        return Err(Error::Parameter(format!(
            "compression factor {factor} outside (0, 1]"
        )));
    }
    if num_classes == 0 {
        return Err(Error::Parameter("num_classes must be >= 1".into()));
    }
    let mut layers: Vec<LayerSpec> = Vec::with_capacity(template.layers.len());
    for l in &template.layers {
        let mut c = l.clone();
        c.in_channels = if l.scale_in {
            l.fixed_in_channels + scale_channels(factor, l.in_channels - l.fixed_in_channels)
        } else {
            l.in_channels
        };
        if l.input == InputSource::Previous {
            if let Some(prev) = layers.last() {
                c.in_channels = prev.out_channels;
            }
        }
        c.out_channels = if l.is_prediction {
            template.prediction_width(num_classes)
        } else if l.scale_out {
            scale_channels(factor, l.out_channels)
        } else {
            l.out_channels
        };
        layers.push(c);
    }
    Ok(BranchPlan {
        branch_id: 0,
        classes: Vec::new(),
        factor,
        params: count_params(&layers),
        macs: count_macs(&layers),
        layers,
    })
}

pub fn count_params(layers: &[LayerSpec]) -> u64 {
    layers.iter().map(LayerSpec::params).sum()
}

pub fn count_macs(layers: &[LayerSpec]) -> u64 {
    layers.iter().map(LayerSpec::macs).sum()
}

/// One plan per cluster, sized by its served class count.
pub fn plan_branches(
    assignment: &ClusterAssignment,
    template: &HeadTemplate,
) -> Result<Vec<BranchPlan>> {
    assignment.validate()?;
    let total = assignment.n_categories as u64;
    (0..assignment.k)
        .map(|c| {
            let classes = assignment.served_classes(c);
            let n = classes.len() as u64;
            let factor = compression_factor(n, total)?;
            let mut plan = compress_template(template, factor, n)?;
            plan.branch_id = c;
            plan.classes = classes;
            Ok(plan)
        })
        .collect()
}
