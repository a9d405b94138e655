//! Counterfactual mappers. The oracle re-renders from the known mechanism
//! with recorded noise. The learned mapper is a conditional cycle-consistent
//! translator between the two domains of one confounding edge, regularized
//! by two frozen probes: the target-attribute probe pushes the embeddings of
//! an input and its translation apart, the preserved-attribute probe pulls
//! them together.

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::path::Path;

use super::probe::Probe;
use super::{condition_input, image_batch, AugmentError, DomainPair};
use crate::nn::{
    load_checkpoint, loss, save_checkpoint, AdamParams, AdamState, Grads, NetBuilder, Network,
    Shape, Tensor,
};
use crate::rng::{domain, stream};
use crate::spec::AttributeSchema;
use crate::synth::{
    oracle_counterfactual, Dataset, Image, MapperKind, Origin, RenderParams, Sample,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversarialLoss {
    /// Least-squares objective; the default at this scale.
    LeastSquares,
    /// Non-saturating logistic objective.
    Logistic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapperConfig {
    pub steps: usize,
    pub batch: usize,
    /// Weight of the two probe terms.
    pub alpha: f64,
    /// Margin of the contrastive terms.
    pub margin: f64,
    /// Weight of the cycle-reconstruction terms.
    pub cycle_weight: f64,
    pub adversarial: AdversarialLoss,
    /// Use the literal negated contrastive pull (unbounded) instead of the
    /// bounded push-apart hinge for the target-probe terms.
    pub literal_negated_contrastive: bool,
    pub base_channels: usize,
    pub seed: u64,
    /// Print losses every this many steps; 0 is silent.
    pub log_every: usize,
}

impl Default for MapperConfig {
    fn default() -> Self {
        MapperConfig {
            steps: 3000,
            batch: 256,
            alpha: 1.0,
            margin: 1.0,
            cycle_weight: 10.0,
            adversarial: AdversarialLoss::LeastSquares,
            literal_negated_contrastive: false,
            base_channels: 8,
            seed: 7,
            log_every: 0,
        }
    }
}

impl MapperConfig {
    /// Small-batch, short-schedule settings for 16-pixel experiments.
    pub fn desk(seed: u64) -> Self {
        MapperConfig {
            steps: 1500,
            batch: 32,
            seed,
            ..MapperConfig::default()
        }
    }
}

/// Three-level encoder-decoder generator with skip connections; the input
/// carries the image plus one-hot condition channels for the desired target
/// value.
fn generator_net(side: usize, condition: usize, base: usize, seed: u64) -> Network<f32> {
    let mut b = NetBuilder::new(Shape::d4(1, 3 + condition, side, side), seed);
    b = b.conv(base, 1).leaky_relu(0.2);
    let full = b.mark();
    b = b.conv(base * 2, 2).leaky_relu(0.2);
    let half = b.mark();
    b = b
        .conv(base * 4, 2)
        .leaky_relu(0.2)
        .conv_t(base * 2)
        .leaky_relu(0.2)
        .concat_from(half)
        .conv_t(base)
        .leaky_relu(0.2)
        .concat_from(full)
        .conv(3, 1)
        .sigmoid();
    b.build()
}

/// Four-stage encoder discriminator emitting one raw score per image.
fn discriminator_net(side: usize, base: usize, seed: u64) -> Network<f32> {
    NetBuilder::new(Shape::d4(1, 3, side, side), seed)
        .conv(base, 2)
        .leaky_relu(0.2)
        .conv(base * 2, 2)
        .leaky_relu(0.2)
        .conv(base * 4, 2)
        .leaky_relu(0.2)
        .flatten()
        .dense(1)
        .build()
}

/// A trained domain translator for one confounding edge.
#[derive(Debug, Clone)]
pub struct LearnedMapper {
    pub g1: Network<f32>,
    pub g2: Network<f32>,
    pub d_t1: Network<f32>,
    pub d_t2: Network<f32>,
    pub probe_target: Probe,
    pub probe_keep: Probe,
    pub target_attr: String,
    pub target_value: usize,
    pub keep_attr: String,
    pub keep_value: usize,
    pub target_cardinality: usize,
    pub config: MapperConfig,
}

/// Counterfactual translator per one edge: either the exact mechanism
/// re-render or a learned translation network.
#[derive(Debug, Clone)]
pub enum Mapper {
    Oracle { render: RenderParams },
    Learned(Box<LearnedMapper>),
}

impl Mapper {
    pub fn kind(&self) -> MapperKind {
        match self {
            Mapper::Oracle { .. } => MapperKind::Oracle,
            Mapper::Learned(_) => MapperKind::Learned,
        }
    }
}

/// Applies a mapper to one sample: the oracle delegates to the exact
/// counterfactual; the learned kind runs its forward generator conditioned
/// on the target value and stamps the assignment with it.
pub fn apply_mapper(
    mapper: &Mapper,
    schema: &AttributeSchema,
    sample: &Sample,
    source_index: u64,
    attr: &str,
    value: usize,
) -> Result<Sample, AugmentError> {
    match mapper {
        Mapper::Oracle { render } => {
            Ok(oracle_counterfactual(schema, render, sample, source_index, attr, value)?)
        }
        Mapper::Learned(m) => {
            if attr != m.target_attr || value != m.target_value {
                return Err(AugmentError::LearnedTargetMismatch {
                    trained_attr: m.target_attr.clone(),
                    trained_value: m.target_value,
                    requested_attr: attr.to_string(),
                    requested_value: value,
                });
            }
            let side = sample.image.side;
            let x = Tensor::stack_chw(&[sample.image.to_unit_chw()], 3, side, side);
            let input = condition_input(&x, &[value], m.target_cardinality);
            let out = m.g1.infer(&input);
            let mut data = Vec::with_capacity(side * side * 3);
            let hw = side * side;
            for p in 0..hw {
                for c in 0..3 {
                    let v = out.data()[c * hw + p].clamp(0.0, 1.0);
                    data.push((v * 255.0).round() as u8);
                }
            }
            let idx = schema
                .index_of(attr)
                .ok_or_else(|| AugmentError::UnknownAttribute(attr.to_string()))?;
            let mut assignment = sample.assignment.clone();
            assignment.0[idx] = value;
            Ok(Sample {
                image: Image { side, data },
                assignment,
                noise: sample.noise,
                origin: Origin::Counterfactual {
                    source_index,
                    attribute: attr.to_string(),
                    mapper: MapperKind::Learned,
                },
            })
        }
    }
}

struct GanLosses;

impl GanLosses {
    fn generator(kind: AdversarialLoss, d_fake: &Tensor<f32>) -> (f64, Tensor<f32>) {
        match kind {
            AdversarialLoss::LeastSquares => loss::lsgan_generator(d_fake),
            AdversarialLoss::Logistic => loss::logistic_generator(d_fake),
        }
    }

    fn discriminator(
        kind: AdversarialLoss,
        d_real: &Tensor<f32>,
        d_fake: &Tensor<f32>,
    ) -> (f64, Tensor<f32>, Tensor<f32>) {
        match kind {
            AdversarialLoss::LeastSquares => loss::lsgan_discriminator(d_real, d_fake),
            AdversarialLoss::Logistic => loss::logistic_discriminator(d_real, d_fake),
        }
    }
}

/// Probe regularizer on a (source, translated) pair. `push_apart` selects
/// the target-probe behavior (embeddings must differ); otherwise embeddings
/// must match. Returns the loss and the gradient at the translated images.
fn probe_term(
    probe: &Probe,
    source: &Tensor<f32>,
    translated: &Tensor<f32>,
    push_apart: bool,
    literal: bool,
    margin: f64,
    weight: f64,
) -> (f64, Tensor<f32>) {
    let e_src = probe.net.infer(source);
    let tape = probe.net.forward(translated);
    let n = source.shape().n();
    let (value, mut g_emb) = if push_apart {
        if literal {
            // literal negated pull: -dist^2 (unbounded below)
            let same = vec![true; n];
            let (v, _, mut g) = loss::contrastive(&e_src, tape.output(), &same, margin);
            g.scale(-1.0);
            (-v, g)
        } else {
            // bounded hinge: penalize only while embeddings are still close
            let same = vec![false; n];
            let (v, _, g) = loss::contrastive(&e_src, tape.output(), &same, margin);
            (v, g)
        }
    } else {
        let same = vec![true; n];
        let (v, _, g) = loss::contrastive(&e_src, tape.output(), &same, margin);
        (v, g)
    };
    g_emb.scale(weight as f32);
    // probe parameters stay frozen: only the input gradient is used
    let (_, g_input) = probe.net.backward(&tape, g_emb);
    (value * weight, g_input)
}

/// Trains the translator between `pair.t1` (source domain, target attribute
/// differs from the coupled value) and `pair.t2` (the heavily-populated
/// coupled cell). Alternates one discriminator update and one generator
/// update per step.
#[allow(clippy::too_many_arguments)]
pub fn train_mapper(
    data: &Dataset,
    pair: &DomainPair,
    probe_target: Probe,
    probe_keep: Probe,
    target_attr: &str,
    target_value: usize,
    keep_attr: &str,
    keep_value: usize,
    config: &MapperConfig,
) -> Result<LearnedMapper, AugmentError> {
    if pair.t1.is_empty() || pair.t2.is_empty() {
        return Err(AugmentError::DegenerateDomain {
            t1: pair.t1.len(),
            t2: pair.t2.len(),
        });
    }
    let side = data.side();
    let target_idx = data
        .schema
        .index_of(target_attr)
        .ok_or_else(|| AugmentError::UnknownAttribute(target_attr.to_string()))?;
    let cardinality = data.schema.attributes[target_idx].cardinality;

    let mut g1 = generator_net(side, cardinality, config.base_channels, config.seed);
    let mut g2 = generator_net(side, cardinality, config.base_channels, config.seed ^ 0x1);
    let mut d_t2 = discriminator_net(side, config.base_channels, config.seed ^ 0x2);
    let mut d_t1 = discriminator_net(side, config.base_channels, config.seed ^ 0x3);
    let adv = AdamParams::adversarial();
    let mut opt_g1 = AdamState::new(&g1, adv);
    let mut opt_g2 = AdamState::new(&g2, adv);
    let mut opt_d2 = AdamState::new(&d_t2, adv);
    let mut opt_d1 = AdamState::new(&d_t1, adv);

    let probe_hash_before = (probe_target.params_hash(), probe_keep.params_hash());
    let mut rng = stream(config.seed, domain::MAPPER, 0);

    for step in 0..config.steps {
        let idx1: Vec<usize> = (0..config.batch)
            .map(|_| pair.t1[rng.gen_range(0..pair.t1.len())])
            .collect();
        let idx2: Vec<usize> = (0..config.batch)
            .map(|_| pair.t2[rng.gen_range(0..pair.t2.len())])
            .collect();
        let x1 = image_batch(data, &idx1);
        let x2 = image_batch(data, &idx2);
        // per-sample translation targets: T1 -> the coupled value; T2 -> a
        // uniformly drawn non-coupled value
        let targets_fwd = vec![target_value; config.batch];
        let targets_bwd: Vec<usize> = (0..config.batch)
            .map(|_| {
                let mut v = rng.gen_range(0..cardinality);
                while v == target_value {
                    v = rng.gen_range(0..cardinality);
                }
                v
            })
            .collect();
        let orig1: Vec<usize> = idx1
            .iter()
            .map(|&i| data.samples[i].assignment.value(target_idx))
            .collect();

        let in1 = condition_input(&x1, &targets_fwd, cardinality);
        let tape_f2 = g1.forward(&in1);
        let fake2 = tape_f2.output().clone();
        let in2 = condition_input(&x2, &targets_bwd, cardinality);
        let tape_f1 = g2.forward(&in2);
        let fake1 = tape_f1.output().clone();

        // discriminator step
        let taped_real2 = d_t2.forward(&x2);
        let taped_fake2 = d_t2.forward(&fake2);
        let (ld2, gr2, gf2) = GanLosses::discriminator(
            config.adversarial,
            taped_real2.output(),
            taped_fake2.output(),
        );
        let (mut gd2, _) = d_t2.backward(&taped_real2, gr2);
        let (gd2b, _) = d_t2.backward(&taped_fake2, gf2);
        gd2.add_assign(&gd2b);
        opt_d2.step(&mut d_t2, &gd2);

        let taped_real1 = d_t1.forward(&x1);
        let taped_fake1 = d_t1.forward(&fake1);
        let (ld1, gr1, gf1) = GanLosses::discriminator(
            config.adversarial,
            taped_real1.output(),
            taped_fake1.output(),
        );
        let (mut gd1, _) = d_t1.backward(&taped_real1, gr1);
        let (gd1b, _) = d_t1.backward(&taped_fake1, gf1);
        gd1.add_assign(&gd1b);
        opt_d1.step(&mut d_t1, &gd1);

        // generator step: adversarial + cycle + probe terms
        let mut g1_grads = Grads::zeros_like(&g1);
        let mut g2_grads = Grads::zeros_like(&g2);

        let tape_adv2 = d_t2.forward(&fake2);
        let (ladv1, g_adv2) = GanLosses::generator(config.adversarial, tape_adv2.output());
        let (_, mut d_fake2) = d_t2.backward(&tape_adv2, g_adv2);

        let tape_adv1 = d_t1.forward(&fake1);
        let (ladv2, g_adv1) = GanLosses::generator(config.adversarial, tape_adv1.output());
        let (_, mut d_fake1) = d_t1.backward(&tape_adv1, g_adv1);

        // cycle T1 -> T2 -> T1, conditioned on each source's own value
        let in_r1 = condition_input(&fake2, &orig1, cardinality);
        let tape_r1 = g2.forward(&in_r1);
        let (lcyc1, mut g_r1) = loss::cycle_l1(&x1, tape_r1.output());
        g_r1.scale(config.cycle_weight as f32);
        let (g2_cyc, d_in_r1) = g2.backward(&tape_r1, g_r1);
        g2_grads.add_assign(&g2_cyc);
        let (d_fake2_cyc, _) = crate::nn::layer::split_axis1(&d_in_r1, fake2.shape());
        d_fake2.add_assign(&d_fake2_cyc);

        // cycle T2 -> T1 -> T2, conditioned on the coupled value
        let in_r2 = condition_input(&fake1, &targets_fwd, cardinality);
        let tape_r2 = g1.forward(&in_r2);
        let (lcyc2, mut g_r2) = loss::cycle_l1(&x2, tape_r2.output());
        g_r2.scale(config.cycle_weight as f32);
        let (g1_cyc, d_in_r2) = g1.backward(&tape_r2, g_r2);
        g1_grads.add_assign(&g1_cyc);
        let (d_fake1_cyc, _) = crate::nn::layer::split_axis1(&d_in_r2, fake1.shape());
        d_fake1.add_assign(&d_fake1_cyc);

        // probe terms, both passes
        let (lp1, g_probe) = probe_term(
            &probe_target,
            &x1,
            &fake2,
            true,
            config.literal_negated_contrastive,
            config.margin,
            config.alpha,
        );
        d_fake2.add_assign(&g_probe);
        let (lp2, g_probe) = probe_term(
            &probe_keep,
            &x1,
            &fake2,
            false,
            false,
            config.margin,
            config.alpha,
        );
        d_fake2.add_assign(&g_probe);
        let (lp3, g_probe) = probe_term(
            &probe_target,
            &x2,
            &fake1,
            true,
            config.literal_negated_contrastive,
            config.margin,
            config.alpha,
        );
        d_fake1.add_assign(&g_probe);
        let (lp4, g_probe) = probe_term(
            &probe_keep,
            &x2,
            &fake1,
            false,
            false,
            config.margin,
            config.alpha,
        );
        d_fake1.add_assign(&g_probe);

        let (g1_main, _) = g1.backward(&tape_f2, d_fake2);
        g1_grads.add_assign(&g1_main);
        let (g2_main, _) = g2.backward(&tape_f1, d_fake1);
        g2_grads.add_assign(&g2_main);
        opt_g1.step(&mut g1, &g1_grads);
        opt_g2.step(&mut g2, &g2_grads);

        let total = ld1 + ld2 + ladv1 + ladv2 + lcyc1 + lcyc2 + lp1 + lp2 + lp3 + lp4;
        if !total.is_finite() {
            return Err(AugmentError::Diverged {
                step,
                detail: format!(
                    "non-finite loss: d=({ld1:.3},{ld2:.3}) adv=({ladv1:.3},{ladv2:.3}) \
                     cycle=({lcyc1:.3},{lcyc2:.3}) probes=({lp1:.3},{lp2:.3},{lp3:.3},{lp4:.3})"
                ),
            });
        }
        if config.log_every > 0 && (step % config.log_every == 0 || step + 1 == config.steps) {
            eprintln!(
                "step {step}: disc {:.4} adv {:.4} cycle {:.4} probes {:.4}",
                ld1 + ld2,
                ladv1 + ladv2,
                lcyc1 + lcyc2,
                lp1 + lp2 + lp3 + lp4
            );
        }
    }

    assert_eq!(
        (probe_target.params_hash(), probe_keep.params_hash()),
        probe_hash_before,
        "probes are frozen during mapper training"
    );

    Ok(LearnedMapper {
        g1,
        g2,
        d_t1,
        d_t2,
        probe_target,
        probe_keep,
        target_attr: target_attr.to_string(),
        target_value,
        keep_attr: keep_attr.to_string(),
        keep_value,
        target_cardinality: cardinality,
        config: config.clone(),
    })
}

/// Quality summary of a learned mapper on held-out source-domain samples.
#[derive(Debug, Clone, Serialize)]
pub struct MapperEval {
    /// Fraction of translations the target probe classifies as the target
    /// value.
    pub target_accuracy: f64,
    /// Fraction of translations whose preserved-attribute probe class
    /// matches the source's.
    pub keep_agreement: f64,
    /// Mean absolute round-trip reconstruction error, unit-scaled pixels.
    pub cycle_mae: f64,
    pub n: usize,
}

pub fn evaluate_mapper(
    mapper: &LearnedMapper,
    data: &Dataset,
    indices: &[usize],
) -> Result<MapperEval, AugmentError> {
    if indices.is_empty() {
        return Err(AugmentError::Malformed(
            "mapper evaluation needs at least one sample".to_string(),
        ));
    }
    let target_idx = data
        .schema
        .index_of(&mapper.target_attr)
        .ok_or_else(|| AugmentError::UnknownAttribute(mapper.target_attr.clone()))?;
    let x = image_batch(data, indices);
    let n = indices.len();
    let targets = vec![mapper.target_value; n];
    let translated = mapper
        .g1
        .infer(&condition_input(&x, &targets, mapper.target_cardinality));

    let predicted_target = mapper.probe_target.classify(&translated);
    let target_accuracy = predicted_target
        .iter()
        .filter(|&&v| v == mapper.target_value)
        .count() as f64
        / n as f64;

    let keep_src = mapper.probe_keep.classify(&x);
    let keep_out = mapper.probe_keep.classify(&translated);
    let keep_agreement = keep_src
        .iter()
        .zip(&keep_out)
        .filter(|(a, b)| a == b)
        .count() as f64
        / n as f64;

    let originals: Vec<usize> = indices
        .iter()
        .map(|&i| data.samples[i].assignment.value(target_idx))
        .collect();
    let back = mapper.g2.infer(&condition_input(
        &translated,
        &originals,
        mapper.target_cardinality,
    ));
    let (cycle_mae, _) = loss::cycle_l1(&x, &back);

    Ok(MapperEval {
        target_accuracy,
        keep_agreement,
        cycle_mae,
        n,
    })
}

#[derive(Serialize, Deserialize)]
struct MapperManifest {
    target_attr: String,
    target_value: usize,
    keep_attr: String,
    keep_value: usize,
    target_cardinality: usize,
    config: MapperConfig,
}

impl LearnedMapper {
    /// Saves the mapper as a directory of network checkpoints plus a
    /// manifest.
    pub fn save(&self, dir: &Path) -> Result<(), AugmentError> {
        std::fs::create_dir_all(dir).map_err(|e| AugmentError::Malformed(e.to_string()))?;
        save_checkpoint(&dir.join("g1.ckpt"), &self.g1, &json!({"role": "forward generator"}))?;
        save_checkpoint(&dir.join("g2.ckpt"), &self.g2, &json!({"role": "backward generator"}))?;
        save_checkpoint(&dir.join("d_t1.ckpt"), &self.d_t1, &json!({"role": "t1 discriminator"}))?;
        save_checkpoint(&dir.join("d_t2.ckpt"), &self.d_t2, &json!({"role": "t2 discriminator"}))?;
        self.probe_target.save(&dir.join("probe_target.ckpt"))?;
        self.probe_keep.save(&dir.join("probe_keep.ckpt"))?;
        let manifest = MapperManifest {
            target_attr: self.target_attr.clone(),
            target_value: self.target_value,
            keep_attr: self.keep_attr.clone(),
            keep_value: self.keep_value,
            target_cardinality: self.target_cardinality,
            config: self.config.clone(),
        };
        std::fs::write(
            dir.join("mapper.json"),
            serde_json::to_string_pretty(&manifest)
                .map_err(|e| AugmentError::Malformed(e.to_string()))?,
        )
        .map_err(|e| AugmentError::Malformed(e.to_string()))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<LearnedMapper, AugmentError> {
        let manifest: MapperManifest = serde_json::from_str(
            &std::fs::read_to_string(dir.join("mapper.json"))
                .map_err(|e| AugmentError::Malformed(format!("mapper manifest: {e}")))?,
        )
        .map_err(|e| AugmentError::Malformed(format!("mapper manifest: {e}")))?;
        let (g1, _) = load_checkpoint(&dir.join("g1.ckpt"))?;
        let (g2, _) = load_checkpoint(&dir.join("g2.ckpt"))?;
        let (d_t1, _) = load_checkpoint(&dir.join("d_t1.ckpt"))?;
        let (d_t2, _) = load_checkpoint(&dir.join("d_t2.ckpt"))?;
        let probe_target = Probe::load(&dir.join("probe_target.ckpt"))?;
        let probe_keep = Probe::load(&dir.join("probe_keep.ckpt"))?;
        Ok(LearnedMapper {
            g1,
            g2,
            d_t1,
            d_t2,
            probe_target,
            probe_keep,
            target_attr: manifest.target_attr,
            target_value: manifest.target_value,
            keep_attr: manifest.keep_attr,
            keep_value: manifest.keep_value,
            target_cardinality: manifest.target_cardinality,
            config: manifest.config,
        })
    }
}
