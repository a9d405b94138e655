//! Checkpoint format: a single-line JSON header (layer graph, shapes,
//! hyperparameters, format version) terminated by a newline, followed by the
//! raw 32-bit little-endian parameter arrays in header order.

use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

use super::layer::Layer;
use super::network::{infer_shapes, Network};
use super::tensor::{Shape, Tensor};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    param_names: Vec<String>,
    param_shapes: Vec<Vec<usize>>,
    /// Free-form training metadata (hyperparameters, attribute names,
    /// centroids and the like).
    hyperparameters: serde_json::Value,
}

pub fn save_checkpoint(
    path: &Path,
    net: &Network<f32>,
    hyperparameters: &serde_json::Value,
) -> Result<(), CheckpointError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let header = Header {
        format_version: CHECKPOINT_FORMAT_VERSION,
        input_shape: net.input_shape().dims().to_vec(),
        layers: net.layers().to_vec(),
        param_names: net.param_names().to_vec(),
        param_shapes: net
            .params()
            .iter()
            .map(|p| p.shape().dims().to_vec())
            .collect(),
        hyperparameters: hyperparameters.clone(),
    };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for p in net.params() {
        for v in p.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Network<f32>, serde_json::Value), CheckpointError> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| CheckpointError::Malformed("missing header terminator".to_string()))?;
    let header: Header = serde_json::from_slice(&bytes[..newline])?;
    if header.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(CheckpointError::Malformed(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }

    let shapes: Vec<Shape> = header
        .param_shapes
        .iter()
        .map(|d| Shape::from_dims(d))
        .collect();
    let total: usize = shapes.iter().map(|s| s.numel()).sum();
    let blob = &bytes[newline + 1..];
    if blob.len() != total * 4 {
        return Err(CheckpointError::Malformed(format!(
            "parameter blob holds {} bytes, expected {}",
            blob.len(),
            total * 4
        )));
    }
    let mut params = Vec::with_capacity(shapes.len());
    let mut offset = 0;
    for shape in &shapes {
        let count = shape.numel();
        let data: Vec<f32> = blob[offset..offset + count * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        offset += count * 4;
        params.push(Tensor::from_vec(*shape, data));
    }

    let input_shape = Shape::from_dims(&header.input_shape);
    let output_shapes = infer_shapes(input_shape, &header.layers, &shapes);
    let net = Network {
        layers: header.layers,
        params,
        param_names: header.param_names,
        input_shape,
        output_shapes,
    };
    Ok((net, header.hyperparameters))
}
