//! Dataset container: a directory holding `manifest.json`, `images.bin`
//! (sample-major, row-major, RGB interleaved), `attrs.csv`, and `noise.csv`.
//! Counterfactual batches carry three extra origin columns in `attrs.csv`.

use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{
    Assignment, Dataset, Image, MapperKind, Origin, RenderNoise, Sample, Split, SynthError,
};
use crate::spec::AttributeSchema;

pub const CONTAINER_FORMAT_VERSION: u32 = 1;

const ORIGIN_COLUMNS: [&str; 3] = ["source_index", "intervened_attribute", "mapper_kind"];

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    schema: AttributeSchema,
    split: Split,
    n: usize,
    side: usize,
    spec_hash: String,
    seed: u64,
}

/// Writes the dataset to `dir`, creating it if needed.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<(), SynthError> {
    if dataset.is_empty() {
        return Err(SynthError::EmptyDataset);
    }
    std::fs::create_dir_all(dir)?;
    let side = dataset.side();

    let manifest = Manifest {
        format_version: CONTAINER_FORMAT_VERSION,
        schema: dataset.schema.clone(),
        split: dataset.split,
        n: dataset.len(),
        side,
        spec_hash: dataset.spec_hash.clone(),
        seed: dataset.seed,
    };
    let mut mf = BufWriter::new(File::create(dir.join("manifest.json"))?);
    serde_json::to_writer_pretty(&mut mf, &manifest)?;
    mf.flush()?;

    let mut imgf = BufWriter::new(File::create(dir.join("images.bin"))?);
    for sample in &dataset.samples {
        imgf.write_all(&sample.image.data)?;
    }
    imgf.flush()?;

    let has_cfs = dataset
        .samples
        .iter()
        .any(|s| matches!(s.origin, Origin::Counterfactual { .. }));
    let mut attrs = csv::Writer::from_path(dir.join("attrs.csv"))?;
    let mut header: Vec<String> = dataset
        .schema
        .attributes
        .iter()
        .map(|a| a.name.clone())
        .collect();
    if has_cfs {
        header.extend(ORIGIN_COLUMNS.iter().map(|c| c.to_string()));
    }
    attrs.write_record(&header)?;
    for sample in &dataset.samples {
        let mut row: Vec<String> = sample.assignment.0.iter().map(|v| v.to_string()).collect();
        if has_cfs {
            match &sample.origin {
                Origin::Observational => row.extend(["", "", ""].map(String::from)),
                Origin::Counterfactual {
                    source_index,
                    attribute,
                    mapper,
                } => {
                    row.push(source_index.to_string());
                    row.push(attribute.clone());
                    row.push(mapper.to_string());
                }
            }
        }
        attrs.write_record(&row)?;
    }
    attrs.flush()?;

    let mut noise = csv::Writer::from_path(dir.join("noise.csv"))?;
    noise.write_record(["dx", "dy", "phase", "draw_seed"])?;
    for sample in &dataset.samples {
        let n = &sample.noise;
        noise.write_record([
            n.dx.to_string(),
            n.dy.to_string(),
            n.phase.to_string(),
            n.draw_seed.to_string(),
        ])?;
    }
    noise.flush()?;
    Ok(())
}

fn parse<T: std::str::FromStr>(field: &str, what: &str) -> Result<T, SynthError> {
    field
        .parse()
        .map_err(|_| SynthError::Malformed(format!("bad {what}: `{field}`")))
}

/// Reads a dataset container written by [`write_dataset`].
pub fn read_dataset(dir: &Path) -> Result<Dataset, SynthError> {
    let manifest: Manifest =
        serde_json::from_reader(BufReader::new(File::open(dir.join("manifest.json"))?))?;
    if manifest.format_version != CONTAINER_FORMAT_VERSION {
        return Err(SynthError::Malformed(format!(
            "unsupported container format version {}",
            manifest.format_version
        )));
    }

    let mut image_bytes = Vec::new();
    File::open(dir.join("images.bin"))?.read_to_end(&mut image_bytes)?;
    let stride = manifest.side * manifest.side * 3;
    if image_bytes.len() != manifest.n * stride {
        return Err(SynthError::Malformed(format!(
            "images.bin holds {} bytes, expected {}",
            image_bytes.len(),
            manifest.n * stride
        )));
    }

    let mut attrs = csv::Reader::from_path(dir.join("attrs.csv"))?;
    let header = attrs.headers()?.clone();
    let attr_count = manifest.schema.attributes.len();
    let expected: Vec<&str> = manifest
        .schema
        .attributes
        .iter()
        .map(|a| a.name.as_str())
        .collect();
    if header.len() < attr_count || header.iter().take(attr_count).ne(expected.iter().copied()) {
        return Err(SynthError::Malformed(
            "attrs.csv header does not match the schema".to_string(),
        ));
    }
    let has_origin = header.len() == attr_count + ORIGIN_COLUMNS.len();
    if !has_origin && header.len() != attr_count {
        return Err(SynthError::Malformed(
            "attrs.csv has an unexpected column count".to_string(),
        ));
    }

    let mut assignments: Vec<(Assignment, Origin)> = Vec::with_capacity(manifest.n);
    for record in attrs.records() {
        let record = record?;
        let values: Vec<usize> = record
            .iter()
            .take(attr_count)
            .map(|f| parse(f, "attribute code"))
            .collect::<Result<_, _>>()?;
        for (value, attr) in values.iter().zip(&manifest.schema.attributes) {
            if *value >= attr.cardinality {
                return Err(SynthError::Malformed(format!(
                    "code {value} out of range for `{}`",
                    attr.name
                )));
            }
        }
        let origin = if has_origin && !record[attr_count].is_empty() {
            Origin::Counterfactual {
                source_index: parse(&record[attr_count], "source index")?,
                attribute: record[attr_count + 1].to_string(),
                mapper: record[attr_count + 2]
                    .parse::<MapperKind>()
                    .map_err(SynthError::Malformed)?,
            }
        } else {
            Origin::Observational
        };
        assignments.push((Assignment(values), origin));
    }
    if assignments.len() != manifest.n {
        return Err(SynthError::Malformed(format!(
            "attrs.csv holds {} rows, expected {}",
            assignments.len(),
            manifest.n
        )));
    }

    let mut noise_reader = csv::Reader::from_path(dir.join("noise.csv"))?;
    let mut noises: Vec<RenderNoise> = Vec::with_capacity(manifest.n);
    for record in noise_reader.records() {
        let record = record?;
        noises.push(RenderNoise {
            dx: parse(&record[0], "dx")?,
            dy: parse(&record[1], "dy")?,
            phase: parse(&record[2], "phase")?,
            draw_seed: parse(&record[3], "draw_seed")?,
        });
    }
    if noises.len() != manifest.n {
        return Err(SynthError::Malformed(format!(
            "noise.csv holds {} rows, expected {}",
            noises.len(),
            manifest.n
        )));
    }

    let samples = assignments
        .into_iter()
        .zip(noises)
        .enumerate()
        .map(|(i, ((assignment, origin), noise))| Sample {
            image: Image {
                side: manifest.side,
                data: image_bytes[i * stride..(i + 1) * stride].to_vec(),
            },
            assignment,
            noise,
            origin,
        })
        .collect();

    Ok(Dataset {
        schema: manifest.schema,
        samples,
        split: manifest.split,
        spec_hash: manifest.spec_hash,
        seed: manifest.seed,
    })
}
