//! Downstream image classifier: plain empirical-risk training on the
//! observed data, or augmented training on originals plus counterfactuals
//! with a within-batch contrastive term on the logits.

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::augment::AugmentedDataset;
use crate::nn::{
    load_checkpoint, loss, save_checkpoint, AdamParams, AdamState, CheckpointError, NetBuilder,
    Network, Scalar, Shape, Tensor,
};
use crate::rng::{domain, stream};
use crate::synth::{Dataset, Sample, SynthError};

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("{0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub batch: usize,
    /// Weight of the within-batch contrastive term on the logits; zero
    /// recovers plain cross-entropy training on the (augmented) data.
    pub lambda: f64,
    /// Margin of the logit-space contrastive distance.
    pub margin: f64,
    pub lr: f64,
    pub base_channels: usize,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            epochs: 10,
            batch: 256,
            lambda: 0.5,
            margin: 1.0,
            lr: 1e-3,
            base_channels: 12,
            hidden: 64,
            seed: 7,
        }
    }
}

impl ClassifierConfig {
    fn validate(&self) -> Result<(), ClassifyError> {
        if self.lambda < 0.0 {
            return Err(ClassifyError::InvalidConfig(
                "lambda must be non-negative".to_string(),
            ));
        }
        if self.lambda > 0.0 && self.batch < 2 {
            return Err(ClassifyError::InvalidConfig(
                "contrastive pairs need batch size of at least 2".to_string(),
            ));
        }
        if self.epochs == 0 || self.batch == 0 {
            return Err(ClassifyError::InvalidConfig(
                "epochs and batch must be positive".to_string(),
            ));
        }
        Ok(())
    }
}

/// A trained classifier: two convolution blocks and a dense head.
#[derive(Debug, Clone)]
pub struct Model {
    pub net: Network<f32>,
    pub label_attribute: String,
    pub classes: usize,
    pub config: ClassifierConfig,
    /// Mean training loss per epoch, in order.
    pub epoch_losses: Vec<f64>,
}

fn classifier_net(side: usize, classes: usize, cfg: &ClassifierConfig) -> Network<f32> {
    NetBuilder::new(Shape::d4(1, 3, side, side), cfg.seed)
        .conv(cfg.base_channels, 2)
        .leaky_relu(0.2)
        .conv(cfg.base_channels * 2, 2)
        .leaky_relu(0.2)
        .flatten()
        .dense(cfg.hidden)
        .leaky_relu(0.2)
        .dense(classes)
        .build()
}

fn batch_of<S: Scalar>(samples: &[&Sample], indices: &[usize]) -> Tensor<S> {
    let side = samples[0].image.side;
    let rows: Vec<Vec<S>> = indices
        .iter()
        .map(|&i| {
            samples[i]
                .image
                .to_unit_chw()
                .into_iter()
                .map(|v| S::from_f64(v as f64))
                .collect()
        })
        .collect();
    Tensor::stack_chw(&rows, 3, side, side)
}

/// Contrastive term over all unordered within-batch pairs of logit rows,
/// with same-label pairs pulled together and different-label pairs pushed
/// beyond the margin. Returns the mean pair loss and its gradient.
fn within_batch_pair_term(
    logits: &Tensor<f32>,
    labels: &[usize],
    margin: f64,
) -> (f64, Tensor<f32>) {
    let (n, c) = (logits.shape().n(), logits.shape().c());
    let pair_count = n * (n - 1) / 2;
    let mut grad = Tensor::zeros(logits.shape());
    if pair_count == 0 {
        return (0.0, grad);
    }
    let inv = 1.0 / pair_count as f64;
    let ld = logits.data();
    let gd = grad.data_mut();
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let zi = &ld[i * c..(i + 1) * c];
            let zj = &ld[j * c..(j + 1) * c];
            let mut sq = 0.0f64;
            for (a, b) in zi.iter().zip(zj) {
                let d = (*a - *b) as f64;
                sq += d * d;
            }
            let dist = sq.sqrt();
            if labels[i] == labels[j] {
                total += sq * inv;
                let k = (2.0 * inv) as f32;
                for t in 0..c {
                    let d = zi[t] - zj[t];
                    gd[i * c + t] += k * d;
                    gd[j * c + t] -= k * d;
                }
            } else {
                let slack = margin - dist;
                if slack > 0.0 && dist > 1e-12 {
                    total += slack * slack * inv;
                    let k = (2.0 * slack / dist * inv) as f32;
                    for t in 0..c {
                        let d = zi[t] - zj[t];
                        gd[i * c + t] -= k * d;
                        gd[j * c + t] += k * d;
                    }
                }
            }
        }
    }
    (total, grad)
}

fn train_loop(
    samples: &[&Sample],
    labels: &[usize],
    schema_label: &str,
    classes: usize,
    side: usize,
    config: &ClassifierConfig,
) -> Result<Model, ClassifyError> {
    config.validate()?;
    if samples.is_empty() {
        return Err(ClassifyError::EmptyDataset);
    }
    let mut net = classifier_net(side, classes, config);
    let mut adam = AdamState::new(
        &net,
        AdamParams {
            lr: config.lr,
            ..AdamParams::default()
        },
    );

    let n = samples.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut rng = stream(config.seed, domain::CLASSIFIER, epoch as u64);
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch) {
            let x = batch_of::<f32>(samples, chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let tape = net.forward(&x);
            let (ce, mut dlogits) = loss::cross_entropy(tape.output(), &y);
            let mut batch_loss = ce;
            if config.lambda > 0.0 && chunk.len() >= 2 {
                let (pair_loss, mut pair_grad) =
                    within_batch_pair_term(tape.output(), &y, config.margin);
                batch_loss += config.lambda * pair_loss;
                pair_grad.scale(config.lambda as f32);
                dlogits.add_assign(&pair_grad);
            }
            let (grads, _) = net.backward(&tape, dlogits);
            adam.step(&mut net, &grads);
            epoch_loss += batch_loss;
            batches += 1;
        }
        epoch_losses.push(epoch_loss / batches.max(1) as f64);
    }

    Ok(Model {
        net,
        label_attribute: schema_label.to_string(),
        classes,
        config: config.clone(),
        epoch_losses,
    })
}

/// Plain empirical risk minimization: mean cross-entropy over the observed
/// data. Deterministic given the config seed.
pub fn train_erm(train: &Dataset, config: &ClassifierConfig) -> Result<Model, ClassifyError> {
    let erm_config = ClassifierConfig {
        lambda: 0.0,
        ..config.clone()
    };
    let label = train.schema.label_attribute.clone();
    let classes = train.schema.label().cardinality;
    let label_idx = train.schema.label_index();
    let samples: Vec<&Sample> = train.samples.iter().collect();
    let labels: Vec<usize> = samples.iter().map(|s| s.assignment.value(label_idx)).collect();
    train_loop(&samples, &labels, &label, classes, train.side(), &erm_config)
}

/// Augmented training over originals plus counterfactuals. With a positive
/// `lambda` the objective adds the within-batch contrastive term on the
/// logits; at `lambda = 0` the code path and the trajectory are identical to
/// cross-entropy alone.
pub fn train_aug(aug: &AugmentedDataset, config: &ClassifierConfig) -> Result<Model, ClassifyError> {
    let label = aug.base.schema.label_attribute.clone();
    let classes = aug.base.schema.label().cardinality;
    let label_idx = aug.base.schema.label_index();
    let samples: Vec<&Sample> = aug.iter_samples().collect();
    if samples.is_empty() {
        return Err(ClassifyError::EmptyDataset);
    }
    let labels: Vec<usize> = samples.iter().map(|s| s.assignment.value(label_idx)).collect();
    train_loop(&samples, &labels, &label, classes, aug.base.side(), config)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupAccuracy {
    pub label: usize,
    pub attribute: String,
    pub value: usize,
    pub n: u64,
    pub correct: u64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall_accuracy: f64,
    pub n: u64,
    pub groups: Vec<GroupAccuracy>,
    pub confusion: Vec<Vec<u64>>,
    pub seed: u64,
    pub test_spec_hash: String,
}

impl EvalReport {
    pub fn to_json_string(&self) -> Result<String, serde_json::Error> {
        serde_json::to_string_pretty(self)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("label,attribute,value,n,correct,accuracy\n");
        for g in &self.groups {
            out.push_str(&format!(
                "{},{},{},{},{},{:.6}\n",
                g.label, g.attribute, g.value, g.n, g.correct, g.accuracy
            ));
        }
        out
    }
}

pub fn predict(model: &Model, data: &Dataset) -> Vec<usize> {
    let samples: Vec<&Sample> = data.samples.iter().collect();
    let mut out = Vec::with_capacity(samples.len());
    let all: Vec<usize> = (0..samples.len()).collect();
    for chunk in all.chunks(512) {
        let x = batch_of::<f32>(&samples, chunk);
        let logits = model.net.infer(&x);
        let c = logits.shape().c();
        for ni in 0..chunk.len() {
            let row = &logits.data()[ni * c..(ni + 1) * c];
            let mut best = 0;
            for (j, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = j;
                }
            }
            out.push(best);
        }
    }
    out
}

/// Scores externally produced predictions; the per-group accuracies
/// partition the data once per non-label attribute.
pub fn evaluate_predictions(
    test: &Dataset,
    predicted: &[usize],
    seed: u64,
) -> Result<EvalReport, ClassifyError> {
    if test.is_empty() {
        return Err(ClassifyError::EmptyDataset);
    }
    if predicted.len() != test.len() {
        return Err(ClassifyError::Malformed(format!(
            "{} predictions for {} samples",
            predicted.len(),
            test.len()
        )));
    }
    let label_idx = test.schema.label_index();
    let classes = test.schema.label().cardinality;
    let truth: Vec<usize> = test.samples.iter().map(|s| s.assignment.value(label_idx)).collect();

    let mut confusion = vec![vec![0u64; classes]; classes];
    let mut correct_total = 0u64;
    for (&p, &t) in predicted.iter().zip(&truth) {
        confusion[t][p.min(classes - 1)] += 1;
        if p == t {
            correct_total += 1;
        }
    }

    let mut groups = Vec::new();
    for (attr_idx, attr) in test.schema.attributes.iter().enumerate() {
        if attr_idx == label_idx {
            continue;
        }
        let mut n = vec![vec![0u64; attr.cardinality]; classes];
        let mut correct = vec![vec![0u64; attr.cardinality]; classes];
        for ((s, &p), &t) in test.samples.iter().zip(predicted).zip(&truth) {
            let v = s.assignment.value(attr_idx);
            n[t][v] += 1;
            if p == t {
                correct[t][v] += 1;
            }
        }
        for label in 0..classes {
            for value in 0..attr.cardinality {
                if n[label][value] == 0 {
                    continue;
                }
                groups.push(GroupAccuracy {
                    label,
                    attribute: attr.name.clone(),
                    value,
                    n: n[label][value],
                    correct: correct[label][value],
                    accuracy: correct[label][value] as f64 / n[label][value] as f64,
                });
            }
        }
    }

    Ok(EvalReport {
        overall_accuracy: correct_total as f64 / test.len() as f64,
        n: test.len() as u64,
        groups,
        confusion,
        seed,
        test_spec_hash: test.spec_hash.clone(),
    })
}

/// Runs the model over the test split and scores it.
pub fn evaluate(model: &Model, test: &Dataset) -> Result<EvalReport, ClassifyError> {
    let predicted = predict(model, test);
    evaluate_predictions(test, &predicted, model.config.seed)
}

impl Model {
    pub fn save(&self, path: &std::path::Path) -> Result<(), ClassifyError> {
        let extra = json!({
            "classifier": {
                "label_attribute": self.label_attribute,
                "classes": self.classes,
                "config": self.config,
                "epoch_losses": self.epoch_losses,
            }
        });
        save_checkpoint(path, &self.net, &extra)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Model, ClassifyError> {
        let (net, extra) = load_checkpoint(path)?;
        let info = &extra["classifier"];
        let config: ClassifierConfig = serde_json::from_value(info["config"].clone())
            .map_err(|e| ClassifyError::Malformed(format!("classifier config: {e}")))?;
        Ok(Model {
            net,
            label_attribute: info["label_attribute"]
                .as_str()
                .ok_or_else(|| ClassifyError::Malformed("missing label attribute".into()))?
                .to_string(),
            classes: info["classes"]
                .as_u64()
                .ok_or_else(|| ClassifyError::Malformed("missing class count".into()))?
                as usize,
            epoch_losses: serde_json::from_value(info["epoch_losses"].clone()).unwrap_or_default(),
            config,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::{preset_spec, Preset};
    use crate::synth::{recover_attribute, synth_dataset, Split};

    fn quick_config(seed: u64) -> ClassifierConfig {
        ClassifierConfig {
            epochs: 4,
            batch: 64,
            seed,
            ..ClassifierConfig::default()
        }
    }

    #[test]
    fn erm_learns_cleanly_separable_shapes() {
        // every strength zeroed: train and test draw from one distribution
        let spec = preset_spec(Preset::Cm, 4, 0.0, 16, 61).strengths_zeroed();
        let train = synth_dataset(&spec, 3000, Split::Train).unwrap();
        let test = synth_dataset(&spec, 600, Split::Test).unwrap();
        let cfg = ClassifierConfig {
            epochs: 10,
            batch: 64,
            seed: 1,
            ..ClassifierConfig::default()
        };
        let model = train_erm(&train, &cfg).unwrap();
        let report = evaluate(&model, &test).unwrap();
        assert!(report.overall_accuracy >= 0.98, "accuracy {}", report.overall_accuracy);
    }

    #[test]
    fn loss_decreases_on_a_tiny_run() {
        let spec = preset_spec(Preset::Cm, 4, 0.5, 16, 62);
        let train = synth_dataset(&spec, 10, Split::Train).unwrap();
        let cfg = ClassifierConfig {
            epochs: 2,
            batch: 10,
            lambda: 0.0,
            ..quick_config(2)
        };
        let model = train_erm(&train, &cfg).unwrap();
        assert!(model.epoch_losses[1] < model.epoch_losses[0]);
    }

    #[test]
    fn lambda_zero_matches_the_pure_objective_exactly() {
        let spec = preset_spec(Preset::Cm, 4, 0.9, 16, 63);
        let train = synth_dataset(&spec, 400, Split::Train).unwrap();
        let aug = AugmentedDataset {
            base: train.clone(),
            counterfactuals: Vec::new(),
        };
        let cfg = ClassifierConfig {
            lambda: 0.0,
            epochs: 3,
            batch: 64,
            ..quick_config(3)
        };
        let a = train_aug(&aug, &cfg).unwrap();
        let b = train_erm(&train, &cfg).unwrap();
        assert_eq!(a.net.params_hash(), b.net.params_hash(), "identical trajectories");
        assert_eq!(a.epoch_losses, b.epoch_losses);
        // and a positive lambda changes the trajectory
        let c = train_aug(&aug, &ClassifierConfig { lambda: 0.5, ..cfg }).unwrap();
        assert_ne!(a.net.params_hash(), c.net.params_hash());
    }

    #[test]
    fn lambda_with_batch_one_is_rejected() {
        let spec = preset_spec(Preset::Cm, 4, 0.9, 16, 64);
        let train = synth_dataset(&spec, 8, Split::Train).unwrap();
        let cfg = ClassifierConfig {
            lambda: 0.5,
            batch: 1,
            ..quick_config(4)
        };
        assert!(matches!(
            train_erm(&train, &ClassifierConfig { lambda: 0.0, batch: 1, ..cfg.clone() }),
            Ok(_)
        ));
        let aug = AugmentedDataset {
            base: train,
            counterfactuals: Vec::new(),
        };
        assert!(matches!(
            train_aug(&aug, &cfg),
            Err(ClassifyError::InvalidConfig(_))
        ));
    }

    #[test]
    fn constant_predictor_scores_the_base_rate() {
        let spec = preset_spec(Preset::Cm, 4, 0.0, 16, 65);
        let test = synth_dataset(&spec, 2000, Split::Test).unwrap();
        let predictions = vec![0usize; test.len()];
        let report = evaluate_predictions(&test, &predictions, 0).unwrap();
        assert!((report.overall_accuracy - 0.25).abs() < 0.04);
    }

    #[test]
    fn oracle_decoder_scores_perfectly() {
        let spec = preset_spec(Preset::Cm, 4, 0.0, 16, 66);
        let test = synth_dataset(&spec, 60, Split::Test).unwrap();
        let predictions: Vec<usize> = test
            .samples
            .iter()
            .map(|s| recover_attribute(&test.schema, &spec.render, s, "label").unwrap())
            .collect();
        let report = evaluate_predictions(&test, &predictions, 0).unwrap();
        assert_eq!(report.overall_accuracy, 1.0);
    }

    #[test]
    fn group_accuracies_recombine_to_overall() {
        let spec = preset_spec(Preset::Cm, 4, 0.0, 16, 67);
        let train = synth_dataset(&spec, 600, Split::Train).unwrap();
        let test = synth_dataset(&spec, 500, Split::Test).unwrap();
        let model = train_erm(&train, &quick_config(5)).unwrap();
        let report = evaluate(&model, &test).unwrap();
        for attr in ["color", "thickness"] {
            let (n, correct): (u64, u64) = report
                .groups
                .iter()
                .filter(|g| g.attribute == attr)
                .fold((0, 0), |(n, c), g| (n + g.n, c + g.correct));
            assert_eq!(n, report.n, "partition covers the data for {attr}");
            let weighted = correct as f64 / n as f64;
            assert!((weighted - report.overall_accuracy).abs() < 1e-9);
        }
    }

    #[test]
    fn training_is_deterministic_given_the_seed() {
        let spec = preset_spec(Preset::Cm, 4, 0.5, 16, 68);
        let train = synth_dataset(&spec, 300, Split::Train).unwrap();
        let a = train_erm(&train, &quick_config(9)).unwrap();
        let b = train_erm(&train, &quick_config(9)).unwrap();
        assert_eq!(a.net.params_hash(), b.net.params_hash());
        let c = train_erm(&train, &quick_config(10)).unwrap();
        assert_ne!(a.net.params_hash(), c.net.params_hash());
    }

    #[test]
    fn model_checkpoint_round_trip() {
        let spec = preset_spec(Preset::Cm, 4, 0.5, 16, 69);
        let train = synth_dataset(&spec, 200, Split::Train).unwrap();
        let test = synth_dataset(&spec, 100, Split::Test).unwrap();
        let model = train_erm(&train, &quick_config(11)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clf.ckpt");
        model.save(&path).unwrap();
        let back = Model::load(&path).unwrap();
        assert_eq!(back.net.params_hash(), model.net.params_hash());
        assert_eq!(
            evaluate(&back, &test).unwrap().overall_accuracy,
            evaluate(&model, &test).unwrap().overall_accuracy
        );
    }
}
