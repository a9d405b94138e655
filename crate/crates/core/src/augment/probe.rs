//! Frozen attribute probes: small convolutional embedders trained with the
//! margin contrastive loss on same/different-attribute pairs, then used as
//! fixed critics during mapper training.

use rand::Rng;
use serde_json::json;

use super::{image_batch, AugmentError};
use crate::nn::{
    load_checkpoint, save_checkpoint, AdamParams, AdamState, NetBuilder, Network, Shape, Tensor,
};
use crate::rng::{domain, stream};
use crate::synth::Dataset;

#[derive(Debug, Clone)]
pub struct ProbeConfig {
    pub steps: usize,
    pub batch_pairs: usize,
    pub embed_dim: usize,
    pub base_channels: usize,
    pub margin: f64,
    pub lr: f64,
    /// Required nearest-centroid accuracy on the validation batch.
    pub min_accuracy: f64,
    /// Same-value partners are drawn this many times and the most
    /// pixel-distant candidate kept, so rare positives that violate a
    /// shortcut feature keep appearing in the batches.
    pub hard_candidates: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            steps: 600,
            batch_pairs: 64,
            embed_dim: 16,
            base_channels: 8,
            margin: 1.0,
            lr: 1e-3,
            min_accuracy: 0.95,
            hard_candidates: 8,
            seed: 7,
        }
    }
}

/// A trained embedder for one attribute. Parameters are frozen after
/// pretraining; [`Probe::params_hash`] witnesses that.
#[derive(Debug, Clone)]
pub struct Probe {
    pub net: Network<f32>,
    pub attribute: String,
    pub cardinality: usize,
    /// Mean embedding per attribute value, from the training data.
    pub centroids: Vec<Vec<f32>>,
}

impl Probe {
    pub fn embed(&self, images: &Tensor<f32>) -> Tensor<f32> {
        self.net.infer(images)
    }

    pub fn classify_embeddings(&self, embeddings: &Tensor<f32>) -> Vec<usize> {
        let (n, d) = (embeddings.shape().n(), embeddings.shape().c());
        (0..n)
            .map(|ni| {
                let e = &embeddings.data()[ni * d..(ni + 1) * d];
                let mut best = 0;
                let mut best_dist = f32::INFINITY;
                for (v, c) in self.centroids.iter().enumerate() {
                    let dist: f32 = e.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                    if dist < best_dist {
                        best_dist = dist;
                        best = v;
                    }
                }
                best
            })
            .collect()
    }

    pub fn classify(&self, images: &Tensor<f32>) -> Vec<usize> {
        let e = self.embed(images);
        self.classify_embeddings(&e)
    }

    pub fn params_hash(&self) -> String {
        self.net.params_hash()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), AugmentError> {
        let extra = json!({
            "probe": {
                "attribute": self.attribute,
                "cardinality": self.cardinality,
                "centroids": self.centroids,
            }
        });
        save_checkpoint(path, &self.net, &extra)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Probe, AugmentError> {
        let (net, extra) = load_checkpoint(path)?;
        let info = &extra["probe"];
        let attribute = info["attribute"]
            .as_str()
            .ok_or_else(|| AugmentError::Malformed("probe checkpoint lacks attribute".into()))?
            .to_string();
        let cardinality = info["cardinality"]
            .as_u64()
            .ok_or_else(|| AugmentError::Malformed("probe checkpoint lacks cardinality".into()))?
            as usize;
        let centroids: Vec<Vec<f32>> = serde_json::from_value(info["centroids"].clone())
            .map_err(|e| AugmentError::Malformed(format!("probe centroids: {e}")))?;
        Ok(Probe {
            net,
            attribute,
            cardinality,
            centroids,
        })
    }
}

pub(crate) fn embedder_net(
    side: usize,
    embed_dim: usize,
    base_channels: usize,
    seed: u64,
) -> Network<f32> {
    NetBuilder::new(Shape::d4(1, 3, side, side), seed)
        .conv(base_channels, 2)
        .leaky_relu(0.2)
        .conv(base_channels * 2, 2)
        .leaky_relu(0.2)
        .flatten()
        .dense(embed_dim)
        .l2_normalize()
        .build()
}

fn pixel_distance(data: &Dataset, a: usize, b: usize) -> u64 {
    data.samples[a]
        .image
        .data
        .iter()
        .zip(&data.samples[b].image.data)
        .map(|(x, y)| u64::from(x.abs_diff(*y)))
        .sum()
}

struct PairSampler {
    by_value: Vec<Vec<usize>>,
    populated: Vec<usize>,
}

impl PairSampler {
    fn new(codes: &[usize], cardinality: usize) -> Result<Self, AugmentError> {
        let mut by_value = vec![Vec::new(); cardinality];
        for (i, &v) in codes.iter().enumerate() {
            by_value[v].push(i);
        }
        let populated: Vec<usize> = (0..cardinality).filter(|&v| !by_value[v].is_empty()).collect();
        if populated.len() < 2 {
            return Err(AugmentError::Malformed(
                "probe pretraining needs at least two attribute values in the data".to_string(),
            ));
        }
        Ok(PairSampler { by_value, populated })
    }

    fn sample(
        &self,
        data: &Dataset,
        codes: &[usize],
        hard_candidates: usize,
        rng: &mut impl Rng,
    ) -> (usize, usize, bool) {
        let anchor = rng.gen_range(0..codes.len());
        let v = codes[anchor];
        if rng.gen::<f64>() < 0.5 {
            let list = &self.by_value[v];
            let mut best = list[rng.gen_range(0..list.len())];
            let mut best_dist = pixel_distance(data, anchor, best);
            for _ in 1..hard_candidates.max(1) {
                let candidate = list[rng.gen_range(0..list.len())];
                let dist = pixel_distance(data, anchor, candidate);
                if dist > best_dist {
                    best_dist = dist;
                    best = candidate;
                }
            }
            (anchor, best, true)
        } else {
            let mut u = self.populated[rng.gen_range(0..self.populated.len())];
            while u == v {
                u = self.populated[rng.gen_range(0..self.populated.len())];
            }
            let list = &self.by_value[u];
            (anchor, list[rng.gen_range(0..list.len())], false)
        }
    }
}

/// Trains a frozen embedder for `attribute` on `train`, then requires
/// nearest-centroid accuracy of at least `config.min_accuracy` on the
/// (unconfounded) `validation` data.
pub fn pretrain_probe(
    train: &Dataset,
    validation: &Dataset,
    attribute: &str,
    config: &ProbeConfig,
) -> Result<Probe, AugmentError> {
    let attr = train
        .schema
        .attribute(attribute)
        .ok_or_else(|| AugmentError::UnknownAttribute(attribute.to_string()))?;
    let cardinality = attr.cardinality;
    let side = train.side();
    let codes = train.attr_codes(attribute)?;
    let sampler = PairSampler::new(&codes, cardinality)?;

    let mut net = embedder_net(side, config.embed_dim, config.base_channels, config.seed);
    let mut adam = AdamState::new(
        &net,
        AdamParams {
            lr: config.lr,
            ..AdamParams::default()
        },
    );

    let mut rng = stream(config.seed, domain::PROBE, 0);
    for step in 0..config.steps {
        let mut lhs = Vec::with_capacity(config.batch_pairs);
        let mut rhs = Vec::with_capacity(config.batch_pairs);
        let mut same = Vec::with_capacity(config.batch_pairs);
        for _ in 0..config.batch_pairs {
            let (a, b, s) = sampler.sample(train, &codes, config.hard_candidates, &mut rng);
            lhs.push(a);
            rhs.push(b);
            same.push(s);
        }
        let x1 = image_batch(train, &lhs);
        let x2 = image_batch(train, &rhs);
        let t1 = net.forward(&x1);
        let t2 = net.forward(&x2);
        let (loss, g1, g2) =
            crate::nn::loss::contrastive(t1.output(), t2.output(), &same, config.margin);
        if !loss.is_finite() {
            return Err(AugmentError::Diverged {
                step,
                detail: format!("probe contrastive loss became {loss}"),
            });
        }
        let (mut grads, _) = net.backward(&t1, g1);
        let (grads2, _) = net.backward(&t2, g2);
        grads.add_assign(&grads2);
        adam.step(&mut net, &grads);
    }

    // centroids from the training data
    let take = train.len().min(4096);
    let idxs: Vec<usize> = (0..take).collect();
    let all = image_batch(train, &idxs);
    let emb = net.infer(&all);
    let d = emb.shape().c();
    let mut sums = vec![vec![0.0f64; d]; cardinality];
    let mut counts = vec![0usize; cardinality];
    for (ni, &i) in idxs.iter().enumerate() {
        let v = codes[i];
        counts[v] += 1;
        for j in 0..d {
            sums[v][j] += emb.data()[ni * d + j] as f64;
        }
    }
    let centroids: Vec<Vec<f32>> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| {
            if c == 0 {
                vec![f32::INFINITY; d]
            } else {
                s.iter().map(|v| (*v / c as f64) as f32).collect()
            }
        })
        .collect();

    let probe = Probe {
        net,
        attribute: attribute.to_string(),
        cardinality,
        centroids,
    };

    let accuracy = probe_accuracy(&probe, validation)?;
    if accuracy < config.min_accuracy {
        return Err(AugmentError::ProbeAccuracy {
            attribute: attribute.to_string(),
            accuracy,
            required: config.min_accuracy,
        });
    }
    Ok(probe)
}

/// Nearest-centroid accuracy of a probe on a labeled dataset.
pub fn probe_accuracy(probe: &Probe, data: &Dataset) -> Result<f64, AugmentError> {
    let codes = data.attr_codes(&probe.attribute)?;
    let idxs: Vec<usize> = (0..data.len()).collect();
    let images = image_batch(data, &idxs);
    let predicted = probe.classify(&images);
    let correct = predicted
        .iter()
        .zip(&codes)
        .filter(|(p, t)| p == t)
        .count();
    Ok(correct as f64 / codes.len().max(1) as f64)
}
