//! Materializes a configuration into its VGG-style layer stack:
//! `(conv relu conv relu maxpool)^block, flatten, (fc relu dropout)^2, fc, softmax`.
//!
//! Convolutions are 3x3, stride 1, size-preserving; pooling is 2x2 stride 2,
//! so the 48x48 input side halves once per block. Parameter counts include
//! biases; MAC counts cover multiplies only.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::search_space::{Configuration, SearchSpace, MAX_BLOCKS, MIN_BLOCKS};

pub const INPUT_SIDE: u32 = 48;
pub const INPUT_CHANNELS: u32 = 1;
const KERNEL_AREA: u64 = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv3x3,
    Relu,
    Maxpool2x2,
    Flatten,
    FullyConnected,
    Dropout,
    Softmax,
}

impl LayerKind {
    pub fn is_weighted(self) -> bool {
        matches!(self, LayerKind::Conv3x3 | LayerKind::FullyConnected)
    }
}

/// Activation shape: spatial `(h, w, c)` or flat `(units)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "Vec<u32>", try_from = "Vec<u32>")]
pub enum Shape {
    Spatial { height: u32, width: u32, channels: u32 },
    Flat(u32),
}

impl Shape {
    pub fn elements(&self) -> u64 {
        match *self {
            Shape::Spatial {
                height,
                width,
                channels,
            } => u64::from(height) * u64::from(width) * u64::from(channels),
            Shape::Flat(n) => u64::from(n),
        }
    }
}

impl From<Shape> for Vec<u32> {
    fn from(shape: Shape) -> Self {
        match shape {
            Shape::Spatial {
                height,
                width,
                channels,
            } => vec![height, width, channels],
            Shape::Flat(n) => vec![n],
        }
    }
}

impl TryFrom<Vec<u32>> for Shape {
    type Error = String;

    fn try_from(v: Vec<u32>) -> std::result::Result<Self, Self::Error> {
        match v.as_slice() {
            &[height, width, channels] => Ok(Shape::Spatial {
                height,
                width,
                channels,
            }),
            &[n] => Ok(Shape::Flat(n)),
            other => Err(format!("shape must have 1 or 3 dims, got {}", other.len())),
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Spatial {
                height,
                width,
                channels,
            } => write!(f, "{height}x{width}x{channels}"),
            Shape::Flat(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerDescriptor {
    pub kind: LayerKind,
    #[serde(rename = "in")]
    pub in_shape: Shape,
    #[serde(rename = "out")]
    pub out_shape: Shape,
    pub params: u64,
    pub macs: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureDescriptor {
    pub config: Configuration,
    pub layers: Vec<LayerDescriptor>,
    pub total_params: u64,
    pub total_macs: u64,
    #[serde(rename = "weighted_layers")]
    pub weighted_layer_count: u32,
}

impl ArchitectureDescriptor {
    pub fn input_shape(&self) -> Shape {
        Shape::Spatial {
            height: INPUT_SIDE,
            width: INPUT_SIDE,
            channels: INPUT_CHANNELS,
        }
    }

    pub fn conv_macs(&self) -> u64 {
        self.macs_of(LayerKind::Conv3x3)
    }

    pub fn fc_macs(&self) -> u64 {
        self.macs_of(LayerKind::FullyConnected)
    }

    fn macs_of(&self, kind: LayerKind) -> u64 {
        self.layers
            .iter()
            .filter(|l| l.kind == kind)
            .map(|l| l.macs)
            .sum()
    }

    pub fn flatten_width(&self) -> u64 {
        self.layers
            .iter()
            .find(|l| l.kind == LayerKind::Flatten)
            .map(|l| l.out_shape.elements())
            .unwrap_or_default()
    }

    pub fn kinds(&self) -> Vec<LayerKind> {
        self.layers.iter().map(|l| l.kind).collect()
    }
}

/// Compiles a configuration that is a member of `space`.
pub fn build_architecture_in(config: &Configuration, space: &SearchSpace) -> Result<ArchitectureDescriptor> {
    space.validate(config).into_result()?;
    build_architecture(config)
}

/// Compiles any structurally sound configuration, on-grid or not.
///
/// Published best-model rows include off-grid kernel counts, so grid
/// membership is checked separately by [`build_architecture_in`].
pub fn build_architecture(config: &Configuration) -> Result<ArchitectureDescriptor> {
    check_structure(config)?;

    let mut layers = Vec::with_capacity(5 * config.block as usize + 9);
    let mut side = INPUT_SIDE;
    let mut channels = INPUT_CHANNELS;
    let spatial = |side, channels| Shape::Spatial {
        height: side,
        width: side,
        channels,
    };
    let passthrough = |kind, shape| LayerDescriptor {
        kind,
        in_shape: shape,
        out_shape: shape,
        params: 0,
        macs: 0,
    };

    for kernels in config.kernels() {
        for _ in 0..2 {
            let c_in = u64::from(channels);
            let c_out = u64::from(kernels);
            let area = u64::from(side) * u64::from(side);
            layers.push(LayerDescriptor {
                kind: LayerKind::Conv3x3,
                in_shape: spatial(side, channels),
                out_shape: spatial(side, kernels),
                params: KERNEL_AREA * c_in * c_out + c_out,
                macs: area * KERNEL_AREA * c_in * c_out,
            });
            channels = kernels;
            layers.push(passthrough(LayerKind::Relu, spatial(side, channels)));
        }
        layers.push(LayerDescriptor {
            kind: LayerKind::Maxpool2x2,
            in_shape: spatial(side, channels),
            out_shape: spatial(side / 2, channels),
            params: 0,
            macs: 0,
        });
        side /= 2;
    }

    let flat = side * side * channels;
    layers.push(LayerDescriptor {
        kind: LayerKind::Flatten,
        in_shape: spatial(side, channels),
        out_shape: Shape::Flat(flat),
        params: 0,
        macs: 0,
    });

    let mut units = flat;
    for width in [config.fc1, config.fc2] {
        layers.push(dense(units, width));
        layers.push(passthrough(LayerKind::Relu, Shape::Flat(width)));
        layers.push(passthrough(LayerKind::Dropout, Shape::Flat(width)));
        units = width;
    }
    layers.push(dense(units, config.output_classes));
    layers.push(passthrough(LayerKind::Softmax, Shape::Flat(config.output_classes)));

    let total_params = layers.iter().map(|l| l.params).sum();
    let total_macs = layers.iter().map(|l| l.macs).sum();
    let weighted_layer_count = layers.iter().filter(|l| l.kind.is_weighted()).count() as u32;
    Ok(ArchitectureDescriptor {
        config: config.clone(),
        layers,
        total_params,
        total_macs,
        weighted_layer_count,
    })
}

fn dense(units_in: u32, units_out: u32) -> LayerDescriptor {
    let (i, o) = (u64::from(units_in), u64::from(units_out));
    LayerDescriptor {
        kind: LayerKind::FullyConnected,
        in_shape: Shape::Flat(units_in),
        out_shape: Shape::Flat(units_out),
        params: i * o + o,
        macs: i * o,
    }
}

fn check_structure(config: &Configuration) -> Result<()> {
    let mut problems = Vec::new();
    if !(MIN_BLOCKS..=MAX_BLOCKS).contains(&config.block) {
        problems.push(format!("block={} outside {MIN_BLOCKS}..{MAX_BLOCKS}", config.block));
    }
    if config.k3.is_some() != (config.block >= 3) {
        problems.push(format!("K3 presence does not match block={}", config.block));
    }
    if config.k4.is_some() != (config.block >= 4) {
        problems.push(format!("K4 presence does not match block={}", config.block));
    }
    let widths = [
        Some(config.k1),
        Some(config.k2),
        config.k3,
        config.k4,
        Some(config.fc1),
        Some(config.fc2),
        Some(config.output_classes),
    ];
    if widths.iter().flatten().any(|&w| w == 0) {
        problems.push("layer widths must be positive".into());
    }
    if config.do1.0 >= 100 || config.do2.0 >= 100 {
        problems.push("dropout must stay below 1.00".into());
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(problems))
    }
}

pub fn count_params(arch: &ArchitectureDescriptor) -> u64 {
    arch.layers.iter().map(|l| l.params).sum()
}

pub fn count_macs(arch: &ArchitectureDescriptor) -> u64 {
    arch.layers.iter().map(|l| l.macs).sum()
}

/// Conv layers plus the two hidden FC layers plus the output layer.
pub fn count_layers(config: &Configuration) -> u32 {
    2 * config.block + 3
}
