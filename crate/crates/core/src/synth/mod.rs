//! The concrete causal mechanism: a deterministic procedural glyph renderer
//! plus observational and interventional samplers. Because every sample
//! records its exogenous noise, exact counterfactuals are a re-render away.

mod container;
mod glyphs;
mod render;
mod sampler;

pub use container::{read_dataset, write_dataset};
pub use render::{recover_attribute, render, texture_on, TEXTURE_COUNT};
pub use sampler::{interventional_sample, oracle_counterfactual, sample_assignment, synth_dataset};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::spec::{AttributeRole, AttributeSchema, SpecError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("value {value} out of range for `{attribute}` (cardinality {cardinality})")]
    UnknownValue {
        attribute: String,
        value: usize,
        cardinality: usize,
    },
    #[error("dataset must contain at least one sample")]
    EmptyDataset,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed dataset container: {0}")]
    Malformed(String),
}

/// Renderer parameters: everything the mechanism needs besides the attribute
/// assignment and the exogenous noise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RenderParams {
    /// Image side length in pixels.
    pub side: usize,
    /// Foreground palette, indexed by the foreground-color value.
    pub palette: Vec<[u8; 3]>,
    /// Background palette, indexed by the background-color value. Kept
    /// disjoint from the foreground palette so a glyph never vanishes into
    /// its background.
    pub background_palette: Vec<[u8; 3]>,
    /// Period of the procedural texture patterns, in pixels.
    pub texture_period: usize,
    /// Dilation radii for thickness values `[thin, thick]`.
    pub dilation_radii: [usize; 2],
    /// Maximum absolute translation jitter, in pixels.
    pub jitter: i32,
}

impl RenderParams {
    /// Desk-scale defaults: `side`-pixel canvas, ten foreground hues, ten
    /// dark background tones, texture period 4, thin/thick radii 0/1,
    /// jitter 2.
    pub fn desk(side: usize) -> Self {
        RenderParams {
            side,
            palette: vec![
                [230, 25, 75],
                [60, 180, 75],
                [255, 225, 25],
                [0, 130, 200],
                [245, 130, 48],
                [145, 30, 180],
                [70, 240, 240],
                [240, 50, 230],
                [210, 245, 60],
                [250, 190, 212],
            ],
            background_palette: vec![
                [0, 0, 0],
                [40, 40, 80],
                [0, 60, 40],
                [70, 20, 20],
                [50, 50, 0],
                [30, 0, 50],
                [0, 50, 60],
                [60, 30, 0],
                [35, 35, 35],
                [20, 45, 20],
            ],
            texture_period: 4,
            dilation_radii: [0, 1],
            jitter: 2,
        }
    }

    pub fn validate(&self, schema: &AttributeSchema) -> Vec<String> {
        let mut violations = Vec::new();
        if self.side < 8 {
            violations.push(format!("image side {} is below the minimum of 8", self.side));
        }
        if self.jitter < 0 {
            violations.push("jitter range must be non-negative".to_string());
        }
        for attr in &schema.attributes {
            match attr.role {
                AttributeRole::Label => {
                    if attr.cardinality > glyphs::GLYPH_COUNT {
                        violations.push(format!(
                            "glyph bank covers {} classes but `{}` has cardinality {}",
                            glyphs::GLYPH_COUNT,
                            attr.name,
                            attr.cardinality
                        ));
                    }
                }
                AttributeRole::ForegroundColor => {
                    if attr.cardinality > self.palette.len() {
                        violations.push(format!(
                            "palette holds {} colors but `{}` has cardinality {}",
                            self.palette.len(),
                            attr.name,
                            attr.cardinality
                        ));
                    }
                }
                AttributeRole::BackgroundColor => {
                    if attr.cardinality > self.background_palette.len() {
                        violations.push(format!(
                            "background palette holds {} colors but `{}` has cardinality {}",
                            self.background_palette.len(),
                            attr.name,
                            attr.cardinality
                        ));
                    }
                }
                AttributeRole::Texture => {
                    if attr.cardinality > render::TEXTURE_COUNT {
                        violations.push(format!(
                            "texture bank holds {} patterns but `{}` has cardinality {}",
                            render::TEXTURE_COUNT,
                            attr.name,
                            attr.cardinality
                        ));
                    }
                }
                AttributeRole::Thickness => {
                    if attr.cardinality > self.dilation_radii.len() {
                        violations.push(format!(
                            "thickness kernels cover {} values but `{}` has cardinality {}",
                            self.dilation_radii.len(),
                            attr.name,
                            attr.cardinality
                        ));
                    }
                }
            }
        }
        violations
    }
}

/// Exogenous noise of one rendering: recorded with the sample so abduction
/// is an exact lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderNoise {
    pub dx: i32,
    pub dy: i32,
    pub phase: u32,
    pub draw_seed: u64,
}

/// Attribute value indices, aligned with the schema's attribute order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment(pub Vec<usize>);

impl Assignment {
    pub fn value(&self, index: usize) -> usize {
        self.0[index]
    }

    pub fn value_of(&self, schema: &AttributeSchema, name: &str) -> Option<usize> {
        schema.index_of(name).map(|i| self.0[i])
    }

    /// Number of attributes on which two assignments differ.
    pub fn hamming(&self, other: &Assignment) -> usize {
        self.0
            .iter()
            .zip(&other.0)
            .filter(|(a, b)| a != b)
            .count()
    }
}

/// H x H x 3 image, row-major, RGB interleaved, 8 bits per channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub side: usize,
    pub data: Vec<u8>,
}

impl Image {
    pub fn new(side: usize) -> Self {
        Image {
            side,
            data: vec![0; side * side * 3],
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.side + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.side + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Pixels scaled to `[0, 1]`, channel-major (C, H, W) for network input.
    pub fn to_unit_chw(&self) -> Vec<f32> {
        let hw = self.side * self.side;
        let mut out = vec![0.0; 3 * hw];
        for p in 0..hw {
            for c in 0..3 {
                out[c * hw + p] = self.data[p * 3 + c] as f32 / 255.0;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapperKind {
    Oracle,
    Learned,
}

impl fmt::Display for MapperKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MapperKind::Oracle => "oracle",
            MapperKind::Learned => "learned",
        })
    }
}

impl FromStr for MapperKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(MapperKind::Oracle),
            "learned" => Ok(MapperKind::Learned),
            other => Err(format!("unknown mapper kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Observational,
    Counterfactual {
        source_index: u64,
        attribute: String,
        mapper: MapperKind,
    },
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub image: Image,
    pub assignment: Assignment,
    pub noise: RenderNoise,
    pub origin: Origin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub schema: AttributeSchema,
    pub samples: Vec<Sample>,
    pub split: Split,
    pub spec_hash: String,
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn side(&self) -> usize {
        self.samples.first().map(|s| s.image.side).unwrap_or(0)
    }

    /// Value codes of one attribute across all samples.
    pub fn attr_codes(&self, name: &str) -> Result<Vec<usize>, SynthError> {
        let idx = self
            .schema
            .index_of(name)
            .ok_or_else(|| SynthError::UnknownAttribute(name.to_string()))?;
        Ok(self.samples.iter().map(|s| s.assignment.value(idx)).collect())
    }
}
