//! Counterfactual data augmentation along confounding edges: domain
//! partitioning, probe pretraining, mapper construction, counterfactual
//! generation, and the full per-edge augmentation loop.

pub mod mapper;
pub mod probe;

pub use mapper::{
    apply_mapper, evaluate_mapper, train_mapper, AdversarialLoss, LearnedMapper, Mapper,
    MapperConfig, MapperEval,
};
pub use probe::{pretrain_probe, probe_accuracy, Probe, ProbeConfig};

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::metrics::{empirical_joint, MetricsError};
use crate::nn::{layer, CheckpointError, Shape, Tensor};
use crate::rng::{domain, stream};
use crate::spec::{CausalSpec, SpecError};
use crate::synth::{Dataset, MapperKind, Origin, Sample, Split, SynthError};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("degenerate domain: |T1|={t1}, |T2|={t2} (both must be non-empty)")]
    DegenerateDomain { t1: usize, t2: usize },
    #[error("probe for `{attribute}` reached accuracy {accuracy:.3}, required {required:.3}")]
    ProbeAccuracy {
        attribute: String,
        accuracy: f64,
        required: f64,
    },
    #[error("balance budget requires the oracle mapper; a learned mapper covers one target value")]
    BalanceRequiresOracle,
    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },
    #[error(
        "learned mapper translates `{trained_attr}` to value {trained_value}, \
         not `{requested_attr}` to {requested_value}"
    )]
    LearnedTargetMismatch {
        trained_attr: String,
        trained_value: usize,
        requested_attr: String,
        requested_value: usize,
    },
    #[error("{0}")]
    Malformed(String),
}

/// Builds an (N, 3, H, W) unit-scaled batch from dataset samples.
pub(crate) fn image_batch(data: &Dataset, indices: &[usize]) -> Tensor<f32> {
    let side = data.side();
    let rows: Vec<Vec<f32>> = indices
        .iter()
        .map(|&i| data.samples[i].image.to_unit_chw())
        .collect();
    Tensor::stack_chw(&rows, 3, side, side)
}

/// Appends one-hot condition channels (the desired target value, tiled over
/// the plane) to an image batch.
pub(crate) fn condition_input(
    images: &Tensor<f32>,
    values: &[usize],
    cardinality: usize,
) -> Tensor<f32> {
    let s = images.shape();
    let (n, h, w) = (s.n(), s.h(), s.w());
    assert_eq!(n, values.len());
    let mut cond = Tensor::zeros(Shape::d4(n, cardinality, h, w));
    let plane = h * w;
    let data = cond.data_mut();
    for (ni, &v) in values.iter().enumerate() {
        debug_assert!(v < cardinality);
        let base = (ni * cardinality + v) * plane;
        for p in &mut data[base..base + plane] {
            *p = 1.0;
        }
    }
    layer::concat_axis1(images, &cond)
}

/// The two translation domains of one confounding edge, as index sets into
/// the dataset: `t1` holds samples with `Z_j != z_j_p` and `Z_l == z_l_q`,
/// `t2` those with `Z_j == z_j_p` and `Z_l == z_l_q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainPair {
    pub t1: Vec<usize>,
    pub t2: Vec<usize>,
}

pub fn partition_domains(
    data: &Dataset,
    target_attr: &str,
    target_value: usize,
    keep_attr: &str,
    keep_value: usize,
) -> Result<DomainPair, AugmentError> {
    let tj = data
        .schema
        .index_of(target_attr)
        .ok_or_else(|| AugmentError::UnknownAttribute(target_attr.to_string()))?;
    let tl = data
        .schema
        .index_of(keep_attr)
        .ok_or_else(|| AugmentError::UnknownAttribute(keep_attr.to_string()))?;
    let mut t1 = Vec::new();
    let mut t2 = Vec::new();
    for (i, s) in data.samples.iter().enumerate() {
        if s.assignment.value(tl) != keep_value {
            continue;
        }
        if s.assignment.value(tj) == target_value {
            t2.push(i);
        } else {
            t1.push(i);
        }
    }
    if t1.is_empty() || t2.is_empty() {
        return Err(AugmentError::DegenerateDomain {
            t1: t1.len(),
            t2: t2.len(),
        });
    }
    Ok(DomainPair { t1, t2 })
}

/// One partner of a confounding edge: the attribute whose coupling with the
/// edge target must be broken, and the pair of values they take together
/// under the confounder.
#[derive(Debug, Clone)]
pub struct EdgePartner {
    pub attr: String,
    /// Coupled value of the edge target (`z_j_p`).
    pub target_value: usize,
    /// Coupled value of the partner (`z_l_q`).
    pub keep_value: usize,
}

/// A confounding edge `C -> Z_j` together with every partner edge
/// `C -> Z_l` (the label always among them).
#[derive(Debug, Clone)]
pub struct ConfoundingEdge {
    pub confounder: String,
    pub target: String,
    pub partners: Vec<EdgePartner>,
}

impl ConfoundingEdge {
    /// Derives the edge from a spec and picks each partner's coupled value
    /// pair as the most frequent cell of the empirical joint.
    pub fn from_spec(
        spec: &CausalSpec,
        data: &Dataset,
        confounder_id: &str,
        target: &str,
    ) -> Result<ConfoundingEdge, AugmentError> {
        let conf = spec
            .confounders
            .iter()
            .find(|c| c.id == confounder_id)
            .ok_or_else(|| {
                AugmentError::Malformed(format!("unknown confounder `{confounder_id}`"))
            })?;
        if !conf.edges.iter().any(|e| e.target == target) {
            return Err(AugmentError::Malformed(format!(
                "confounder `{confounder_id}` has no edge to `{target}`"
            )));
        }
        let mut partner_names: Vec<String> = vec![spec.schema.label_attribute.clone()];
        for e in &conf.edges {
            if e.target != target {
                partner_names.push(e.target.clone());
            }
        }
        let mut partners = Vec::new();
        for name in partner_names {
            let joint = empirical_joint(data, target, &name, 0.0)?;
            let (di, dj) = joint.dims();
            let mut best = (0usize, 0usize);
            let mut best_mass = -1.0;
            for a in 0..di {
                for b in 0..dj {
                    if joint.cell(a, b) > best_mass {
                        best_mass = joint.cell(a, b);
                        best = (a, b);
                    }
                }
            }
            partners.push(EdgePartner {
                attr: name,
                target_value: best.0,
                keep_value: best.1,
            });
        }
        Ok(ConfoundingEdge {
            confounder: confounder_id.to_string(),
            target: target.to_string(),
            partners,
        })
    }
}

/// Counterfactual budget for one generation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Budget {
    /// Draw this many factuals (without replacement, up to the eligible
    /// count) and translate each to the coupled target value.
    Count(usize),
    /// Equalize the (target, partner) contingency table by generating each
    /// cell's deficit; oracle mapper only.
    Balance,
}

impl std::str::FromStr for Budget {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "balance" {
            return Ok(Budget::Balance);
        }
        if let Some(rest) = s.strip_prefix("count:") {
            return rest
                .parse()
                .map(Budget::Count)
                .map_err(|_| format!("bad count in budget `{s}`"));
        }
        Err(format!("unknown budget `{s}` (expected `count:N` or `balance`)"))
    }
}

/// Generates counterfactual samples for one (target, partner) pair. Every
/// emitted sample differs from its source in exactly the target attribute.
pub fn generate_cfs(
    data: &Dataset,
    mapper: &Mapper,
    partner: &EdgePartner,
    target_attr: &str,
    budget: Budget,
    seed: u64,
) -> Result<Vec<Sample>, AugmentError> {
    let tj = data
        .schema
        .index_of(target_attr)
        .ok_or_else(|| AugmentError::UnknownAttribute(target_attr.to_string()))?;
    let tl = data
        .schema
        .index_of(&partner.attr)
        .ok_or_else(|| AugmentError::UnknownAttribute(partner.attr.clone()))?;
    let mut rng = stream(seed, domain::AUGMENT, 1);

    match budget {
        Budget::Count(n) => {
            if n == 0 {
                return Ok(Vec::new());
            }
            // factuals: differ from the coupled pair on both attributes
            let mut eligible: Vec<usize> = data
                .samples
                .iter()
                .enumerate()
                .filter(|(_, s)| {
                    s.assignment.value(tj) != partner.target_value
                        && s.assignment.value(tl) != partner.keep_value
                })
                .map(|(i, _)| i)
                .collect();
            eligible.shuffle(&mut rng);
            eligible.truncate(n);
            eligible
                .into_iter()
                .map(|i| {
                    apply_mapper(
                        mapper,
                        &data.schema,
                        &data.samples[i],
                        i as u64,
                        target_attr,
                        partner.target_value,
                    )
                })
                .collect()
        }
        Budget::Balance => {
            if mapper.kind() != MapperKind::Oracle {
                return Err(AugmentError::BalanceRequiresOracle);
            }
            let joint = empirical_joint(data, target_attr, &partner.attr, 0.0)?;
            let (di, dj) = joint.dims();
            let mut counts = vec![vec![0u64; dj]; di];
            for s in &data.samples {
                counts[s.assignment.value(tj)][s.assignment.value(tl)] += 1;
            }

            // sources grouped by the partner value; the target value is what
            // the intervention changes
            let mut by_partner: Vec<Vec<usize>> = vec![Vec::new(); dj];
            for (i, s) in data.samples.iter().enumerate() {
                by_partner[s.assignment.value(tl)].push(i);
            }
            for list in &mut by_partner {
                list.shuffle(&mut rng);
            }

            // equalize each partner column: afterwards the target is uniform
            // conditioned on every partner value, so the pair decouples
            let mut out = Vec::new();
            for vl in 0..dj {
                let column_max = (0..di).map(|vj| counts[vj][vl]).max().unwrap_or(0);
                for vj in 0..di {
                    let deficit = (column_max - counts[vj][vl]) as usize;
                    if deficit == 0 {
                        continue;
                    }
                    let pool: Vec<usize> = by_partner[vl]
                        .iter()
                        .copied()
                        .filter(|&i| data.samples[i].assignment.value(tj) != vj)
                        .collect();
                    debug_assert!(!pool.is_empty(), "a deficit implies another populated cell");
                    for k in 0..deficit {
                        let i = pool[k % pool.len()];
                        out.push(apply_mapper(
                            mapper,
                            &data.schema,
                            &data.samples[i],
                            i as u64,
                            target_attr,
                            vj,
                        )?);
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Base dataset plus accepted counterfactuals.
#[derive(Debug, Clone)]
pub struct AugmentedDataset {
    pub base: Dataset,
    pub counterfactuals: Vec<Sample>,
}

impl AugmentedDataset {
    pub fn len(&self) -> usize {
        self.base.len() + self.counterfactuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter_samples(&self) -> impl Iterator<Item = &Sample> {
        self.base.samples.iter().chain(self.counterfactuals.iter())
    }

    /// Every counterfactual differs from its recorded source in exactly one
    /// attribute.
    pub fn one_attribute_delta_holds(&self) -> bool {
        self.counterfactuals.iter().all(|cf| match &cf.origin {
            Origin::Counterfactual { source_index, .. } => {
                let source = &self.base.samples[*source_index as usize];
                cf.assignment.hamming(&source.assignment) == 1
            }
            Origin::Observational => false,
        })
    }

    /// Flat dataset view (base followed by counterfactuals) for measurement
    /// and container IO.
    pub fn combined(&self) -> Dataset {
        let mut combined = self.base.clone();
        combined.samples.extend(self.counterfactuals.iter().cloned());
        combined
    }

    /// The counterfactual batch alone, as a dataset container payload.
    pub fn counterfactual_batch(&self) -> Dataset {
        Dataset {
            schema: self.base.schema.clone(),
            samples: self.counterfactuals.clone(),
            split: self.base.split,
            spec_hash: self.base.spec_hash.clone(),
            seed: self.base.seed,
        }
    }
}

/// Configuration for the full per-edge augmentation loop.
#[derive(Debug, Clone)]
pub struct AugmentRun {
    pub budget: Budget,
    pub mapper_kind: MapperKind,
    pub seed: u64,
    pub probe_config: ProbeConfig,
    pub mapper_config: MapperConfig,
}

/// Every confounding edge of the spec, with partner values from the data.
pub fn enumerate_edges(
    spec: &CausalSpec,
    data: &Dataset,
) -> Result<Vec<ConfoundingEdge>, AugmentError> {
    let mut edges = Vec::new();
    for conf in &spec.confounders {
        for e in &conf.edges {
            edges.push(ConfoundingEdge::from_spec(spec, data, &conf.id, &e.target)?);
        }
    }
    Ok(edges)
}

/// Applies [`run_edge_augmentation`] to every confounding edge of the spec
/// and pools the counterfactuals. Each edge's factuals are drawn from the
/// original data.
pub fn run_full_augmentation(
    data: &Dataset,
    spec: &CausalSpec,
    run: &AugmentRun,
    probe_validation: Option<&Dataset>,
) -> Result<AugmentedDataset, AugmentError> {
    let mut counterfactuals = Vec::new();
    for edge in enumerate_edges(spec, data)? {
        let part = run_edge_augmentation(data, spec, &edge, run, probe_validation)?;
        counterfactuals.extend(part.counterfactuals);
    }
    Ok(AugmentedDataset {
        base: data.clone(),
        counterfactuals,
    })
}

/// The complete counterfactual-generation loop for one confounding edge:
/// for each partner edge of the same confounder, partition the data into
/// the two domains, build the mapper (exact re-render, or probes plus a
/// trained translator), generate counterfactuals from the eligible
/// factuals, and collect them alongside the base data. A `Count` budget is
/// split evenly across partners.
pub fn run_edge_augmentation(
    data: &Dataset,
    spec: &CausalSpec,
    edge: &ConfoundingEdge,
    run: &AugmentRun,
    probe_validation: Option<&Dataset>,
) -> Result<AugmentedDataset, AugmentError> {
    let mut counterfactuals = Vec::new();
    let per_partner_budget = match run.budget {
        Budget::Balance => Budget::Balance,
        Budget::Count(n) => Budget::Count(n / edge.partners.len().max(1)),
    };

    let validation_owned;
    let validation: Option<&Dataset> = match probe_validation {
        Some(v) => Some(v),
        None if run.mapper_kind == MapperKind::Learned => {
            validation_owned = crate::synth::synth_dataset(spec, 1000, Split::Test)?;
            Some(&validation_owned)
        }
        None => None,
    };

    for partner in &edge.partners {
        let mapper = match run.mapper_kind {
            MapperKind::Oracle => Mapper::Oracle {
                render: spec.render.clone(),
            },
            MapperKind::Learned => {
                let validation = validation.expect("validation data for learned mapper");
                let pair = partition_domains(
                    data,
                    &edge.target,
                    partner.target_value,
                    &partner.attr,
                    partner.keep_value,
                )?;
                let probe_target =
                    pretrain_probe(data, validation, &edge.target, &run.probe_config)?;
                let keep_probe_config = ProbeConfig {
                    seed: run.probe_config.seed ^ 0x9,
                    ..run.probe_config.clone()
                };
                let probe_keep =
                    pretrain_probe(data, validation, &partner.attr, &keep_probe_config)?;
                let learned = train_mapper(
                    data,
                    &pair,
                    probe_target,
                    probe_keep,
                    &edge.target,
                    partner.target_value,
                    &partner.attr,
                    partner.keep_value,
                    &run.mapper_config,
                )?;
                Mapper::Learned(Box::new(learned))
            }
        };
        let cfs = generate_cfs(data, &mapper, partner, &edge.target, per_partner_budget, run.seed)?;
        counterfactuals.extend(cfs);
    }

    Ok(AugmentedDataset {
        base: data.clone(),
        counterfactuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{confounding_marginal_assumption, empirical_joint};
    use crate::spec::{preset_spec, Preset};
    use crate::synth::synth_dataset;

    #[test]
    fn partition_matches_the_defining_predicates() {
        let spec = preset_spec(Preset::Cm, 4, 0.95, 16, 51);
        let ds = synth_dataset(&spec, 600, Split::Train).unwrap();
        let pair = partition_domains(&ds, "color", 2, "label", 2).unwrap();
        let ci = ds.schema.index_of("color").unwrap();
        let li = ds.schema.index_of("label").unwrap();
        for &i in &pair.t1 {
            let a = &ds.samples[i].assignment;
            assert!(a.value(ci) != 2 && a.value(li) == 2);
        }
        for &i in &pair.t2 {
            let a = &ds.samples[i].assignment;
            assert!(a.value(ci) == 2 && a.value(li) == 2);
        }
        // exhaustive: nothing satisfying the predicates was missed
        let t1_expect = ds
            .samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.assignment.value(ci) != 2 && s.assignment.value(li) == 2)
            .count();
        assert_eq!(pair.t1.len(), t1_expect);
        assert!(pair.t1.len() < pair.t2.len(), "T1 is the rare domain");
    }

    #[test]
    fn hand_built_partition_example() {
        let spec = preset_spec(Preset::Cm, 4, 0.95, 16, 51);
        let mut ds = synth_dataset(&spec, 6, Split::Train).unwrap();
        let ci = ds.schema.index_of("color").unwrap();
        let li = ds.schema.index_of("label").unwrap();
        let table = [(0, 1), (1, 1), (1, 0), (1, 2), (0, 0), (3, 1)];
        for (s, (c, l)) in ds.samples.iter_mut().zip(table) {
            s.assignment.0[ci] = c;
            s.assignment.0[li] = l;
        }
        // target color 1, keep label 1
        let pair = partition_domains(&ds, "color", 1, "label", 1).unwrap();
        assert_eq!(pair.t1, vec![0, 5]);
        assert_eq!(pair.t2, vec![1]);
    }

    #[test]
    fn degenerate_domain_is_a_hard_error() {
        let spec = preset_spec(Preset::Cm, 4, 1.0, 16, 51);
        let ds = synth_dataset(&spec, 400, Split::Train).unwrap();
        // at strength 1 every label-3 sample has color 3: T1 is empty
        assert!(matches!(
            partition_domains(&ds, "color", 3, "label", 3),
            Err(AugmentError::DegenerateDomain { t1: 0, .. })
        ));
    }

    #[test]
    fn domain_size_ratio_tracks_the_analytic_cells() {
        let spec = preset_spec(Preset::Cm, 10, 0.95, 16, 52);
        let ds = synth_dataset(&spec, 60_000, Split::Train).unwrap();
        let pair = partition_domains(&ds, "color", 7, "label", 7).unwrap();
        let ratio = pair.t2.len() as f64 / pair.t1.len() as f64;
        // analytic cell ratio 0.0955 / 0.0045 = 21.2
        assert!((ratio - 21.2).abs() < 6.0, "ratio {ratio}");

        let spec0 = preset_spec(Preset::Cm, 10, 0.0, 16, 53);
        let ds0 = synth_dataset(&spec0, 60_000, Split::Train).unwrap();
        let pair0 = partition_domains(&ds0, "color", 7, "label", 7).unwrap();
        let ratio0 = pair0.t1.len() as f64 / pair0.t2.len() as f64;
        assert!((ratio0 - 9.0).abs() < 1.5, "independent ratio {ratio0}");
    }

    #[test]
    fn zero_budget_yields_no_counterfactuals() {
        let spec = preset_spec(Preset::Cm, 4, 0.95, 16, 54);
        let ds = synth_dataset(&spec, 300, Split::Train).unwrap();
        let mapper = Mapper::Oracle {
            render: spec.render.clone(),
        };
        let partner = EdgePartner {
            attr: "label".to_string(),
            target_value: 0,
            keep_value: 0,
        };
        let cfs = generate_cfs(&ds, &mapper, &partner, "color", Budget::Count(0), 1).unwrap();
        assert!(cfs.is_empty());
    }

    #[test]
    fn count_budget_counterfactuals_differ_in_exactly_the_target() {
        let spec = preset_spec(Preset::Cm, 4, 0.95, 16, 54);
        let ds = synth_dataset(&spec, 500, Split::Train).unwrap();
        let mapper = Mapper::Oracle {
            render: spec.render.clone(),
        };
        let partner = EdgePartner {
            attr: "label".to_string(),
            target_value: 1,
            keep_value: 1,
        };
        let cfs = generate_cfs(&ds, &mapper, &partner, "color", Budget::Count(50), 1).unwrap();
        assert_eq!(cfs.len(), 50);
        let ci = ds.schema.index_of("color").unwrap();
        for cf in &cfs {
            assert_eq!(cf.assignment.value(ci), 1);
            match &cf.origin {
                Origin::Counterfactual { source_index, attribute, .. } => {
                    assert_eq!(attribute, "color");
                    let src = &ds.samples[*source_index as usize];
                    assert_eq!(cf.assignment.hamming(&src.assignment), 1);
                }
                _ => panic!("counterfactual origin expected"),
            }
        }
    }

    #[test]
    fn balance_mode_equalizes_the_table_and_kills_confounding() {
        let spec = preset_spec(Preset::Cm, 4, 0.95, 16, 55);
        let ds = synth_dataset(&spec, 4000, Split::Train).unwrap();
        let mapper = Mapper::Oracle {
            render: spec.render.clone(),
        };
        let partner = EdgePartner {
            attr: "label".to_string(),
            target_value: 0,
            keep_value: 0,
        };
        let cfs = generate_cfs(&ds, &mapper, &partner, "color", Budget::Balance, 2).unwrap();
        // deficit arithmetic: ~950 per off-diagonal cell, 12 cells
        assert!(
            (10_000..13_000).contains(&cfs.len()),
            "counterfactual count {}",
            cfs.len()
        );
        let aug = AugmentedDataset {
            base: ds,
            counterfactuals: cfs,
        };
        assert!(aug.one_attribute_delta_holds());
        let combined = aug.combined();
        let joint = empirical_joint(&combined, "label", "color", 0.0).unwrap();
        let c = confounding_marginal_assumption(&joint).unwrap();
        assert!(c < 0.05, "confounding after balancing: {c}");
        // every label column is exactly equalized across colors
        let li = combined.schema.index_of("label").unwrap();
        let ci = combined.schema.index_of("color").unwrap();
        let mut counts = vec![0u64; 16];
        for s in &combined.samples {
            counts[s.assignment.value(li) * 4 + s.assignment.value(ci)] += 1;
        }
        for y in 0..4 {
            let col = &counts[y * 4..(y + 1) * 4];
            assert!(col.iter().all(|&v| v == col[0]), "label {y} cells {col:?}");
        }
    }

    #[test]
    fn balance_with_learned_mapper_is_rejected() {
        let spec = preset_spec(Preset::Cm, 4, 0.95, 16, 55);
        let ds = synth_dataset(&spec, 200, Split::Train).unwrap();
        let probe = {
            let cfg = ProbeConfig {
                steps: 1,
                min_accuracy: 0.0,
                ..ProbeConfig::default()
            };
            pretrain_probe(&ds, &ds, "color", &cfg).unwrap()
        };
        let learned = LearnedMapper {
            g1: probe.net.clone(),
            g2: probe.net.clone(),
            d_t1: probe.net.clone(),
            d_t2: probe.net.clone(),
            probe_target: probe.clone(),
            probe_keep: probe,
            target_attr: "color".to_string(),
            target_value: 0,
            keep_attr: "label".to_string(),
            keep_value: 0,
            target_cardinality: 4,
            config: MapperConfig::desk(1),
        };
        let partner = EdgePartner {
            attr: "label".to_string(),
            target_value: 0,
            keep_value: 0,
        };
        assert!(matches!(
            generate_cfs(
                &ds,
                &Mapper::Learned(Box::new(learned)),
                &partner,
                "color",
                Budget::Balance,
                1
            ),
            Err(AugmentError::BalanceRequiresOracle)
        ));
    }

    #[test]
    fn edge_from_spec_picks_the_coupled_cell() {
        let spec = preset_spec(Preset::Cm, 4, 0.95, 16, 56);
        let ds = synth_dataset(&spec, 2000, Split::Train).unwrap();
        let edge = ConfoundingEdge::from_spec(&spec, &ds, "c_style", "color").unwrap();
        assert_eq!(edge.partners.len(), 1);
        let p = &edge.partners[0];
        assert_eq!(p.attr, "label");
        // identity theme: the modal cell is on the diagonal
        assert_eq!(p.target_value, p.keep_value);
    }

    #[test]
    fn oracle_edge_augmentation_reduces_measured_confounding() {
        let spec = preset_spec(Preset::Cm, 4, 0.95, 16, 57);
        let ds = synth_dataset(&spec, 2000, Split::Train).unwrap();
        let edge = ConfoundingEdge::from_spec(&spec, &ds, "c_style", "color").unwrap();
        let run = AugmentRun {
            budget: Budget::Count(500),
            mapper_kind: MapperKind::Oracle,
            seed: 3,
            probe_config: ProbeConfig::default(),
            mapper_config: MapperConfig::desk(3),
        };
        let aug = run_edge_augmentation(&ds, &spec, &edge, &run, None).unwrap();
        assert_eq!(aug.len(), 2500);
        assert!(aug.one_attribute_delta_holds());
        let before = confounding_marginal_assumption(
            &empirical_joint(&ds, "label", "color", 0.0).unwrap(),
        )
        .unwrap();
        let after = confounding_marginal_assumption(
            &empirical_joint(&aug.combined(), "label", "color", 0.0).unwrap(),
        )
        .unwrap();
        assert!(after < before, "confounding {before} -> {after}");
    }
}
