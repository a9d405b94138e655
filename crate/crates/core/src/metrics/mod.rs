//! Information-theoretic confounding measurement over discrete attribute
//! pairs: plug-in joint distributions, mutual information, directed
//! information against interventional tables, the paired confounding
//! measure, and Pearson correlation on value codes. All logarithms are
//! natural, so every figure is in nats.

mod report;
mod svg;

pub use report::{report, ConfoundingReport, PairReport};
pub use svg::write_scatter_svg;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::synth::{interventional_sample, sample_assignment, Dataset, SynthError};
use crate::rng::{domain, stream};
use crate::spec::CausalSpec;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("shape mismatch: joint is {joint:?}, table is {table:?}")]
    ShapeMismatch {
        joint: (usize, usize),
        table: (usize, usize),
    },
    #[error("not a distribution: {0}")]
    NotADistribution(String),
    #[error("support violation: conditional mass at ({row},{col}) but the interventional table is zero there")]
    SupportViolation { row: usize, col: usize },
    #[error("zero variance in attribute `{0}`")]
    ZeroVariance(String),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

/// A joint probability table over an attribute pair. Rows index the first
/// attribute. Marginals are cached at construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointDistribution {
    di: usize,
    dj: usize,
    table: Vec<f64>,
    row_marginal: Vec<f64>,
    col_marginal: Vec<f64>,
    /// Number of samples behind the estimate; 0 for analytic tables.
    pub sample_count: u64,
    /// Laplace smoothing constant used when counting.
    pub smoothing: f64,
}

impl JointDistribution {
    pub fn from_table(di: usize, dj: usize, table: Vec<f64>) -> Result<Self, MetricsError> {
        if table.len() != di * dj {
            return Err(MetricsError::NotADistribution(format!(
                "{} cells for a {di}x{dj} table",
                table.len()
            )));
        }
        if table.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(MetricsError::NotADistribution(
                "negative or non-finite cell".to_string(),
            ));
        }
        let total: f64 = table.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(MetricsError::NotADistribution(format!(
                "cells sum to {total}"
            )));
        }
        let mut row_marginal = vec![0.0; di];
        let mut col_marginal = vec![0.0; dj];
        for a in 0..di {
            for b in 0..dj {
                row_marginal[a] += table[a * dj + b];
                col_marginal[b] += table[a * dj + b];
            }
        }
        Ok(JointDistribution {
            di,
            dj,
            table,
            row_marginal,
            col_marginal,
            sample_count: 0,
            smoothing: 0.0,
        })
    }

    /// Plug-in estimate: cell (a,b) = (count + smoothing) / (n + smoothing*di*dj).
    pub fn from_counts(
        di: usize,
        dj: usize,
        counts: &[u64],
        smoothing: f64,
    ) -> Result<Self, MetricsError> {
        if counts.len() != di * dj {
            return Err(MetricsError::NotADistribution(format!(
                "{} count cells for a {di}x{dj} table",
                counts.len()
            )));
        }
        let n: u64 = counts.iter().sum();
        if n == 0 {
            return Err(MetricsError::EmptyDataset);
        }
        let denom = n as f64 + smoothing * (di * dj) as f64;
        let table: Vec<f64> = counts
            .iter()
            .map(|&c| (c as f64 + smoothing) / denom)
            .collect();
        let mut joint = Self::from_table(di, dj, table)?;
        joint.sample_count = n;
        joint.smoothing = smoothing;
        Ok(joint)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.di, self.dj)
    }

    pub fn cell(&self, a: usize, b: usize) -> f64 {
        self.table[a * self.dj + b]
    }

    pub fn row_marginal(&self) -> &[f64] {
        &self.row_marginal
    }

    pub fn col_marginal(&self) -> &[f64] {
        &self.col_marginal
    }

    /// The same distribution with the attribute order swapped.
    pub fn transposed(&self) -> JointDistribution {
        let mut table = vec![0.0; self.di * self.dj];
        for a in 0..self.di {
            for b in 0..self.dj {
                table[b * self.di + a] = self.cell(a, b);
            }
        }
        JointDistribution {
            di: self.dj,
            dj: self.di,
            table,
            row_marginal: self.col_marginal.clone(),
            col_marginal: self.row_marginal.clone(),
            sample_count: self.sample_count,
            smoothing: self.smoothing,
        }
    }
}

/// Counts the joint occurrences of two attributes across a dataset.
pub fn empirical_joint(
    dataset: &Dataset,
    attr_i: &str,
    attr_j: &str,
    smoothing: f64,
) -> Result<JointDistribution, MetricsError> {
    if dataset.is_empty() {
        return Err(MetricsError::EmptyDataset);
    }
    let xi = dataset
        .schema
        .attribute(attr_i)
        .ok_or_else(|| MetricsError::UnknownAttribute(attr_i.to_string()))?;
    let xj = dataset
        .schema
        .attribute(attr_j)
        .ok_or_else(|| MetricsError::UnknownAttribute(attr_j.to_string()))?;
    let (di, dj) = (xi.cardinality, xj.cardinality);
    let codes_i = dataset.attr_codes(attr_i)?;
    let codes_j = dataset.attr_codes(attr_j)?;
    let mut counts = vec![0u64; di * dj];
    for (&a, &b) in codes_i.iter().zip(&codes_j) {
        counts[a * dj + b] += 1;
    }
    JointDistribution::from_counts(di, dj, &counts, smoothing)
}

/// Mutual information of a joint, in nats, with `0 ln 0 = 0`.
pub fn mutual_information(joint: &JointDistribution) -> f64 {
    let (di, dj) = joint.dims();
    let mut total = 0.0;
    for a in 0..di {
        for b in 0..dj {
            let pab = joint.cell(a, b);
            if pab > 0.0 {
                total += pab * (pab / (joint.row_marginal[a] * joint.col_marginal[b])).ln();
            }
        }
    }
    total
}

/// Where an interventional table came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableProvenance {
    /// Columns equal the observational marginal, valid when confounding
    /// flows only through shared parents of the pair.
    MarginalAssumption,
    /// Estimated by sampling the mechanism under `do()`, `n` draws per value.
    Sampled { n: u64 },
    UserSupplied,
}

/// `p(Z_i = a | do(Z_j = z))` for every `z`: a column-stochastic `di x dj`
/// table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InterventionalTable {
    di: usize,
    dj: usize,
    table: Vec<f64>,
    pub provenance: TableProvenance,
}

impl InterventionalTable {
    pub fn from_columns(
        di: usize,
        dj: usize,
        table: Vec<f64>,
        provenance: TableProvenance,
    ) -> Result<Self, MetricsError> {
        if table.len() != di * dj {
            return Err(MetricsError::NotADistribution(format!(
                "{} cells for a {di}x{dj} interventional table",
                table.len()
            )));
        }
        for z in 0..dj {
            let col: f64 = (0..di).map(|a| table[a * dj + z]).sum();
            if (col - 1.0).abs() > 1e-9 {
                return Err(MetricsError::NotADistribution(format!(
                    "interventional column {z} sums to {col}"
                )));
            }
        }
        if table.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(MetricsError::NotADistribution(
                "negative or non-finite interventional cell".to_string(),
            ));
        }
        Ok(InterventionalTable {
            di,
            dj,
            table,
            provenance,
        })
    }

    /// Every column is the given marginal of `Z_i`.
    pub fn marginal_assumption(marginal: &[f64], dj: usize) -> Result<Self, MetricsError> {
        let di = marginal.len();
        let mut table = vec![0.0; di * dj];
        for a in 0..di {
            for z in 0..dj {
                table[a * dj + z] = marginal[a];
            }
        }
        Self::from_columns(di, dj, table, TableProvenance::MarginalAssumption)
    }

    /// Estimates the table by forcing each value of `attr_j` and sampling
    /// the mechanism `n_per_value` times.
    pub fn sampled(
        spec: &CausalSpec,
        attr_i: &str,
        attr_j: &str,
        n_per_value: usize,
        seed: u64,
    ) -> Result<Self, MetricsError> {
        let ai = spec
            .schema
            .attribute(attr_i)
            .ok_or_else(|| MetricsError::UnknownAttribute(attr_i.to_string()))?;
        let aj = spec
            .schema
            .attribute(attr_j)
            .ok_or_else(|| MetricsError::UnknownAttribute(attr_j.to_string()))?;
        let (di, dj) = (ai.cardinality, aj.cardinality);
        let idx_i = spec.schema.index_of(attr_i).expect("attribute exists");
        let mut table = vec![0.0; di * dj];
        for z in 0..dj {
            let mut counts = vec![0u64; di];
            for s in 0..n_per_value {
                let mut rng = stream(seed, domain::AUGMENT, (z * n_per_value + s) as u64);
                let (assignment, _) = interventional_sample(spec, attr_j, z, &mut rng)?;
                counts[assignment.value(idx_i)] += 1;
            }
            for a in 0..di {
                table[a * dj + z] = counts[a] as f64 / n_per_value as f64;
            }
        }
        Self::from_columns(
            di,
            dj,
            table,
            TableProvenance::Sampled {
                n: n_per_value as u64,
            },
        )
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.di, self.dj)
    }

    pub fn cell(&self, a: usize, z: usize) -> f64 {
        self.table[a * self.dj + z]
    }
}

/// Directed information `I(Z_i -> Z_j)`: the expected KL divergence between
/// the conditional `p(Z_i | Z_j)` and the interventional `p(Z_i | do(Z_j))`.
/// Cells with zero conditional mass contribute nothing; conditional mass on
/// a zero interventional cell is reported as a support violation instead of
/// an infinite value.
pub fn directed_information(
    joint: &JointDistribution,
    table: &InterventionalTable,
) -> Result<f64, MetricsError> {
    if joint.dims() != table.dims() {
        return Err(MetricsError::ShapeMismatch {
            joint: joint.dims(),
            table: table.dims(),
        });
    }
    let (di, dj) = joint.dims();
    let mut total = 0.0;
    for b in 0..dj {
        let pb = joint.col_marginal[b];
        if pb == 0.0 {
            continue;
        }
        for a in 0..di {
            let pab = joint.cell(a, b);
            if pab == 0.0 {
                continue;
            }
            let conditional = pab / pb;
            let interventional = table.cell(a, b);
            if interventional == 0.0 {
                return Err(MetricsError::SupportViolation { row: a, col: b });
            }
            total += pab * (conditional / interventional).ln();
        }
    }
    Ok(total)
}

/// The confounding between a pair: directed information summed over both
/// directions. `forward` carries `p(Z_i | do(Z_j))`, `backward` carries
/// `p(Z_j | do(Z_i))`.
pub fn confounding(
    joint: &JointDistribution,
    forward: &InterventionalTable,
    backward: &InterventionalTable,
) -> Result<f64, MetricsError> {
    Ok(directed_information(joint, forward)? + directed_information(&joint.transposed(), backward)?)
}

/// Confounding under the marginal assumption, with both interventional
/// tables built from the joint's own marginals.
pub fn confounding_marginal_assumption(joint: &JointDistribution) -> Result<f64, MetricsError> {
    let (_, dj) = joint.dims();
    let (di, _) = joint.dims();
    let forward = InterventionalTable::marginal_assumption(joint.row_marginal(), dj)?;
    let backward = InterventionalTable::marginal_assumption(joint.col_marginal(), di)?;
    confounding(joint, &forward, &backward)
}

fn pearson_raw(xs: &[f64], ys: &[f64], weights: &[f64]) -> Option<f64> {
    let w: f64 = weights.iter().sum();
    let mean = |vals: &[f64]| -> f64 {
        vals.iter().zip(weights).map(|(v, wt)| v * wt).sum::<f64>() / w
    };
    let mx = mean(xs);
    let my = mean(ys);
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for ((&x, &y), &wt) in xs.iter().zip(ys).zip(weights) {
        cov += wt * (x - mx) * (y - my);
        vx += wt * (x - mx) * (x - mx);
        vy += wt * (y - my) * (y - my);
    }
    if vx <= 0.0 || vy <= 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

/// Product-moment correlation of two attributes' integer value codes.
pub fn pearson(dataset: &Dataset, attr_i: &str, attr_j: &str) -> Result<f64, MetricsError> {
    if dataset.len() < 2 {
        return Err(MetricsError::EmptyDataset);
    }
    let xs: Vec<f64> = dataset
        .attr_codes(attr_i)?
        .into_iter()
        .map(|v| v as f64)
        .collect();
    let ys: Vec<f64> = dataset
        .attr_codes(attr_j)?
        .into_iter()
        .map(|v| v as f64)
        .collect();
    let weights = vec![1.0; xs.len()];
    pearson_raw(&xs, &ys, &weights).ok_or_else(|| {
        let constant = if xs.iter().all(|&v| v == xs[0]) {
            attr_i
        } else {
            attr_j
        };
        MetricsError::ZeroVariance(constant.to_string())
    })
}

/// Population Pearson correlation of a joint table under integer codes.
pub fn pearson_of_joint(joint: &JointDistribution) -> Result<f64, MetricsError> {
    let (di, dj) = joint.dims();
    let mut xs = Vec::with_capacity(di * dj);
    let mut ys = Vec::with_capacity(di * dj);
    let mut ws = Vec::with_capacity(di * dj);
    for a in 0..di {
        for b in 0..dj {
            xs.push(a as f64);
            ys.push(b as f64);
            ws.push(joint.cell(a, b));
        }
    }
    pearson_raw(&xs, &ys, &ws).ok_or_else(|| MetricsError::ZeroVariance("joint".to_string()))
}

/// Largest absolute gap between any sampled interventional column
/// `p(Z_i | do(Z_j = z))` and the observational marginal of `Z_i`, both
/// estimated with `n` draws. Near zero when the pair is confounded only
/// through shared parents.
pub fn interventional_marginal_gap(
    spec: &CausalSpec,
    attr_i: &str,
    attr_j: &str,
    n: usize,
    seed: u64,
) -> Result<f64, MetricsError> {
    let ai = spec
        .schema
        .attribute(attr_i)
        .ok_or_else(|| MetricsError::UnknownAttribute(attr_i.to_string()))?;
    let di = ai.cardinality;
    let idx_i = spec.schema.index_of(attr_i).expect("attribute exists");

    let mut observational = vec![0.0; di];
    for s in 0..n {
        let mut rng = stream(seed, domain::TRAIN_SAMPLE, s as u64);
        let (assignment, _) = sample_assignment(spec, &mut rng);
        observational[assignment.value(idx_i)] += 1.0;
    }
    for v in &mut observational {
        *v /= n as f64;
    }

    let table = InterventionalTable::sampled(spec, attr_i, attr_j, n, seed ^ 0x5eed)?;
    let (_, dj) = table.dims();
    let mut gap: f64 = 0.0;
    for z in 0..dj {
        for a in 0..di {
            gap = gap.max((table.cell(a, z) - observational[a]).abs());
        }
    }
    Ok(gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::{preset_spec, Preset};
    use crate::synth::{synth_dataset, Split};

    fn cm(d: usize, p: f64, seed: u64) -> CausalSpec {
        preset_spec(Preset::Cm, d, p, 16, seed)
    }

    #[test]
    fn empirical_joint_counts_and_smoothing() {
        let spec = cm(2, 0.5, 1);
        let mut ds = synth_dataset(&spec, 4, Split::Train).unwrap();
        let li = ds.schema.index_of("label").unwrap();
        let ci = ds.schema.index_of("color").unwrap();
        let pairs = [(0, 0), (0, 0), (1, 1), (1, 1)];
        for (s, (a, b)) in ds.samples.iter_mut().zip(pairs) {
            s.assignment.0[li] = a;
            s.assignment.0[ci] = b;
        }
        let plain = empirical_joint(&ds, "label", "color", 0.0).unwrap();
        assert_eq!(plain.cell(0, 0), 0.5);
        assert_eq!(plain.cell(0, 1), 0.0);
        assert_eq!(plain.cell(1, 1), 0.5);
        let smoothed = empirical_joint(&ds, "label", "color", 1.0).unwrap();
        assert!((smoothed.cell(0, 0) - 3.0 / 8.0).abs() < 1e-15);
        assert!((smoothed.cell(0, 1) - 1.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn mutual_information_reference_points() {
        let uniform = JointDistribution::from_table(10, 10, vec![0.01; 100]).unwrap();
        assert!(mutual_information(&uniform).abs() < 1e-12);

        let mut diag = vec![0.0; 100];
        for a in 0..10 {
            diag[a * 10 + a] = 0.1;
        }
        let coupled = JointDistribution::from_table(10, 10, diag).unwrap();
        assert!((mutual_information(&coupled) - 10f64.ln()).abs() < 1e-12);

        let analytic = cm(10, 0.95, 1).analytic_joint("label", "color").unwrap();
        assert!((mutual_information(&analytic) - 2.0201889).abs() < 1e-6);
    }

    #[test]
    fn directed_information_reference_points() {
        let spec = cm(10, 0.95, 1);
        let analytic = spec.analytic_joint("label", "color").unwrap();
        let table =
            InterventionalTable::marginal_assumption(analytic.row_marginal(), 10).unwrap();
        let di = directed_information(&analytic, &table).unwrap();
        assert!((di - 2.0201889).abs() < 1e-6);

        let independent = JointDistribution::from_table(10, 10, vec![0.01; 100]).unwrap();
        let t0 =
            InterventionalTable::marginal_assumption(independent.row_marginal(), 10).unwrap();
        assert!(directed_information(&independent, &t0).unwrap().abs() < 1e-15);

        // The table equal to the conditional itself gives zero divergence.
        let mut cond = vec![0.0; 100];
        for b in 0..10 {
            for a in 0..10 {
                cond[a * 10 + b] = analytic.cell(a, b) / analytic.col_marginal()[b];
            }
        }
        let t_cond =
            InterventionalTable::from_columns(10, 10, cond, TableProvenance::UserSupplied)
                .unwrap();
        assert!(directed_information(&analytic, &t_cond).unwrap().abs() < 1e-12);
    }

    #[test]
    fn confounding_is_twice_mutual_information_under_marginal_tables() {
        for &p in &[0.0, 0.1, 0.5, 0.9, 0.95, 1.0] {
            let analytic = cm(10, p, 1).analytic_joint("label", "color").unwrap();
            let c = confounding_marginal_assumption(&analytic).unwrap();
            assert!(
                (c - 2.0 * mutual_information(&analytic)).abs() < 1e-12,
                "analytic identity at p={p}"
            );
        }
        let spec = cm(10, 0.95, 9);
        let ds = synth_dataset(&spec, 4000, Split::Train).unwrap();
        let joint = empirical_joint(&ds, "label", "color", 0.0).unwrap();
        let c = confounding_marginal_assumption(&joint).unwrap();
        assert!((c - 2.0 * mutual_information(&joint)).abs() < 1e-9, "empirical identity");
    }

    #[test]
    fn directed_information_coincides_in_both_directions() {
        let spec = cm(10, 0.7, 3);
        let ds = synth_dataset(&spec, 2000, Split::Train).unwrap();
        let joint = empirical_joint(&ds, "label", "color", 0.0).unwrap();
        let mi = mutual_information(&joint);
        let fwd = InterventionalTable::marginal_assumption(joint.row_marginal(), 10).unwrap();
        let bwd = InterventionalTable::marginal_assumption(joint.col_marginal(), 10).unwrap();
        let f = directed_information(&joint, &fwd).unwrap();
        let b = directed_information(&joint.transposed(), &bwd).unwrap();
        assert!((f - mi).abs() < 1e-12);
        assert!((b - mi).abs() < 1e-12);
    }

    #[test]
    fn support_violation_is_a_distinguished_outcome() {
        let joint = JointDistribution::from_table(2, 2, vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        let table = InterventionalTable::from_columns(
            2,
            2,
            vec![0.0, 1.0, 1.0, 0.0],
            TableProvenance::UserSupplied,
        )
        .unwrap();
        assert!(matches!(
            directed_information(&joint, &table),
            Err(MetricsError::SupportViolation { row: 0, col: 0 })
        ));
    }

    #[test]
    fn empirical_statistics_track_the_generator() {
        let spec = cm(10, 0.95, 42);
        let ds = synth_dataset(&spec, 60_000, Split::Train).unwrap();
        let joint = empirical_joint(&ds, "label", "color", 0.0).unwrap();
        for a in 0..10 {
            assert!(
                (joint.cell(a, a) - 0.0955).abs() < 0.004,
                "diagonal cell {a} = {}",
                joint.cell(a, a)
            );
        }
        let r = pearson(&ds, "label", "color").unwrap();
        assert!((r - 0.95).abs() < 0.01, "pearson {r}");

        let spec0 = cm(10, 0.0, 43);
        let ds0 = synth_dataset(&spec0, 60_000, Split::Train).unwrap();
        let joint0 = empirical_joint(&ds0, "label", "color", 0.0).unwrap();
        assert!(mutual_information(&joint0) < 0.01);
    }

    #[test]
    fn pearson_edge_cases() {
        let spec = cm(10, 1.0, 7);
        let ds = synth_dataset(&spec, 500, Split::Train).unwrap();
        let r = pearson(&ds, "label", "color").unwrap();
        assert!((r - 1.0).abs() < 1e-9);

        let mut constant = ds.clone();
        let ci = constant.schema.index_of("color").unwrap();
        for s in &mut constant.samples {
            s.assignment.0[ci] = 4;
        }
        assert!(matches!(
            pearson(&constant, "label", "color"),
            Err(MetricsError::ZeroVariance(_))
        ));
    }

    #[test]
    fn sampled_interventional_table_approaches_the_marginal() {
        let spec = cm(10, 0.95, 11);
        let table = InterventionalTable::sampled(&spec, "label", "color", 4000, 11).unwrap();
        for z in 0..10 {
            for a in 0..10 {
                assert!(
                    (table.cell(a, z) - 0.1).abs() < 0.03,
                    "cell ({a},{z}) = {}",
                    table.cell(a, z)
                );
            }
        }
    }

    #[test]
    fn mutual_information_bounds_and_symmetry() {
        use rand::Rng;
        let mut rng = stream(99, domain::AUGMENT, 0);
        for _ in 0..50 {
            let di = rng.gen_range(2..6);
            let dj = rng.gen_range(2..6);
            let mut cells: Vec<f64> = (0..di * dj).map(|_| rng.gen::<f64>() + 1e-6).collect();
            let total: f64 = cells.iter().sum();
            for c in &mut cells {
                *c /= total;
            }
            let joint = JointDistribution::from_table(di, dj, cells).unwrap();
            let mi = mutual_information(&joint);
            assert!(mi >= -1e-12);
            assert!(mi <= (di as f64).ln().min((dj as f64).ln()) + 1e-12);
            assert!((mutual_information(&joint.transposed()) - mi).abs() < 1e-12);
        }
    }
}
