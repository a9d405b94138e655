//! Declarative causal generative specs.
//!
//! A [`CausalSpec`] describes the generative process behind every synthetic
//! dataset: a label `Y`, generative attributes `Z_1..Z_n`, and confounder
//! groups whose shared state drives themed attribute values. The label equals
//! the confounder state, so confounding between any attribute pair flows only
//! through that shared state. This module owns validation, canonical
//! serialization (hashable provenance), and the closed-form joint
//! distributions used as oracles by the measurement code.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::metrics::JointDistribution;
use crate::synth::RenderParams;

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("invalid spec: {}", violations.join("; "))]
    Invalid { violations: Vec<String> },
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("no common confounder for `{0}` and `{1}`")]
    NoCommonConfounder(String, String),
    #[error("analytic joint for `{0}`, `{1}` requires a joint-mode confounder")]
    NotJointMode(String, String),
    #[error("serialization: {0}")]
    Serialize(#[from] serde_json::Error),
}

/// Rendering role of an attribute. At most one attribute may carry each role;
/// exactly one attribute carries `Label`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttributeRole {
    Label,
    ForegroundColor,
    BackgroundColor,
    Texture,
    Thickness,
}

impl fmt::Display for AttributeRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AttributeRole::Label => "label",
            AttributeRole::ForegroundColor => "foreground-color",
            AttributeRole::BackgroundColor => "background-color",
            AttributeRole::Texture => "texture",
            AttributeRole::Thickness => "thickness",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub cardinality: usize,
    pub role: AttributeRole,
    pub value_labels: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttributeSchema {
    /// Ordered; dataset containers store value codes in this order.
    pub attributes: Vec<Attribute>,
    pub label_attribute: String,
}

impl AttributeSchema {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&Attribute, SpecError> {
        self.attribute(name)
            .ok_or_else(|| SpecError::UnknownAttribute(name.to_string()))
    }

    /// Index of the attribute carrying `role`, if any.
    pub fn role_index(&self, role: AttributeRole) -> Option<usize> {
        self.attributes.iter().position(|a| a.role == role)
    }

    pub fn label(&self) -> &Attribute {
        self.attribute(&self.label_attribute)
            .expect("validated schema has a label attribute")
    }

    pub fn label_index(&self) -> usize {
        self.index_of(&self.label_attribute)
            .expect("validated schema has a label attribute")
    }
}

/// One themed edge `C -> Z`: a total map from confounder state to a value of
/// the target attribute.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThemeEdge {
    pub target: String,
    /// `theme[c]` is the value index the target takes when following state `c`.
    pub theme: Vec<usize>,
    /// Per-edge strength override; only meaningful in independent mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strength: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfounderMode {
    /// One follow flag per sample governs every edge of the group.
    Joint,
    /// Each edge draws its own follow flag, at its own strength.
    Independent,
}

/// A group of confounded edges driven by the shared per-sample state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfounderSpec {
    pub id: String,
    pub edges: Vec<ThemeEdge>,
    /// Probability that an edge follows its theme (group default).
    pub strength: f64,
    pub mode: ConfounderMode,
    /// Number of confounder states; must equal the label cardinality because
    /// the label is defined as the state itself.
    pub state_count: usize,
}

impl ConfounderSpec {
    /// Strength in effect for edge `i` (per-edge override wins in
    /// independent mode).
    pub fn edge_strength(&self, i: usize) -> f64 {
        match self.mode {
            ConfounderMode::Joint => self.strength,
            ConfounderMode::Independent => self.edges[i].strength.unwrap_or(self.strength),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CausalSpec {
    pub schema: AttributeSchema,
    pub confounders: Vec<ConfounderSpec>,
    pub render: RenderParams,
    pub seed: u64,
}

impl CausalSpec {
    /// Checks every structural invariant; returns the full list of
    /// human-readable violations rather than stopping at the first.
    pub fn validate(&self) -> Result<(), SpecError> {
        let mut violations = Vec::new();
        let schema = &self.schema;

        let mut seen = BTreeSet::new();
        for attr in &schema.attributes {
            if !seen.insert(attr.name.as_str()) {
                violations.push(format!("duplicate attribute name `{}`", attr.name));
            }
            if attr.cardinality < 2 {
                violations.push(format!(
                    "attribute `{}` has cardinality {} (minimum 2)",
                    attr.name, attr.cardinality
                ));
            }
            if attr.value_labels.len() != attr.cardinality {
                violations.push(format!(
                    "attribute `{}` has {} value labels for cardinality {}",
                    attr.name,
                    attr.value_labels.len(),
                    attr.cardinality
                ));
            }
        }

        let mut roles = BTreeSet::new();
        for attr in &schema.attributes {
            if !roles.insert(attr.role) {
                violations.push(format!("duplicate role `{}`", attr.role));
            }
        }

        let label_count = schema
            .attributes
            .iter()
            .filter(|a| a.role == AttributeRole::Label)
            .count();
        if label_count != 1 {
            violations.push(format!(
                "expected exactly one label attribute, found {label_count}"
            ));
        }
        match schema.attribute(&schema.label_attribute) {
            None => violations.push(format!(
                "label_attribute `{}` is not in the schema",
                schema.label_attribute
            )),
            Some(a) if a.role != AttributeRole::Label => violations.push(format!(
                "label_attribute `{}` does not carry the label role",
                schema.label_attribute
            )),
            _ => {}
        }
        let label_cardinality = schema
            .attribute(&schema.label_attribute)
            .map(|a| a.cardinality);

        let mut confounder_ids = BTreeSet::new();
        for conf in &self.confounders {
            if !confounder_ids.insert(conf.id.as_str()) {
                violations.push(format!("duplicate confounder id `{}`", conf.id));
            }
            if !(0.0..=1.0).contains(&conf.strength) {
                violations.push(format!(
                    "confounder `{}`: strength outside [0,1] (got {})",
                    conf.id, conf.strength
                ));
            }
            if let Some(k) = label_cardinality {
                if conf.state_count != k {
                    violations.push(format!(
                        "confounder `{}`: state count {} must equal label cardinality {}",
                        conf.id, conf.state_count, k
                    ));
                }
            }
            if conf.edges.is_empty() {
                violations.push(format!("confounder `{}` has no edges", conf.id));
            }
            let mut targets = BTreeSet::new();
            for (i, edge) in conf.edges.iter().enumerate() {
                if !targets.insert(edge.target.as_str()) {
                    violations.push(format!(
                        "confounder `{}`: duplicate edge target `{}`",
                        conf.id, edge.target
                    ));
                }
                if edge.target == schema.label_attribute {
                    violations.push(format!(
                        "confounder `{}`: edge targets the label attribute, which is \
                         already defined as the confounder state",
                        conf.id
                    ));
                }
                match schema.attribute(&edge.target) {
                    None => violations.push(format!(
                        "confounder `{}`: edge target `{}` is not in the schema",
                        conf.id, edge.target
                    )),
                    Some(attr) => {
                        if edge.theme.len() != conf.state_count {
                            violations.push(format!(
                                "confounder `{}`: theme table not total for `{}` \
                                 ({} entries for {} states)",
                                conf.id,
                                edge.target,
                                edge.theme.len(),
                                conf.state_count
                            ));
                        }
                        if edge.theme.iter().any(|&v| v >= attr.cardinality) {
                            violations.push(format!(
                                "confounder `{}`: theme for `{}` maps outside its domain",
                                conf.id, edge.target
                            ));
                        }
                    }
                }
                if let Some(s) = edge.strength {
                    if conf.mode == ConfounderMode::Joint {
                        violations.push(format!(
                            "confounder `{}`: per-edge strength on `{}` is only \
                             allowed in independent mode",
                            conf.id, edge.target
                        ));
                    }
                    if !(0.0..=1.0).contains(&s) {
                        violations.push(format!(
                            "confounder `{}`: strength outside [0,1] on edge `{}` (got {s})",
                            conf.id, edge.target
                        ));
                    }
                }
                let _ = i;
            }
        }

        violations.extend(self.render.validate(schema));

        if violations.is_empty() {
            Ok(())
        } else {
            Err(SpecError::Invalid { violations })
        }
    }

    /// The list of violations, empty when the spec is well formed.
    pub fn violations(&self) -> Vec<String> {
        match self.validate() {
            Ok(()) => Vec::new(),
            Err(SpecError::Invalid { violations }) => violations,
            Err(other) => vec![other.to_string()],
        }
    }

    /// Canonical JSON: keys sorted lexicographically, no insignificant
    /// whitespace. The byte string is the hashing pre-image for provenance.
    pub fn canonical_json(&self) -> Result<String, SpecError> {
        let value = serde_json::to_value(self)?;
        Ok(value.to_string())
    }

    /// SHA-256 of the canonical bytes, hex-encoded.
    pub fn hash_hex(&self) -> Result<String, SpecError> {
        let canonical = self.canonical_json()?;
        let digest = Sha256::digest(canonical.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Copy of the spec with every confounding strength forced to zero;
    /// attributes become independent and uniform. Test splits sample from
    /// this variant.
    pub fn strengths_zeroed(&self) -> CausalSpec {
        let mut spec = self.clone();
        for conf in &mut spec.confounders {
            conf.strength = 0.0;
            for edge in &mut conf.edges {
                if edge.strength.is_some() {
                    edge.strength = Some(0.0);
                }
            }
        }
        spec
    }

    pub fn label_cardinality(&self) -> usize {
        self.schema.label().cardinality
    }

    /// The confounder group (and edge index within it) targeting `attr`.
    /// First-listed group wins when several target the same attribute.
    pub fn edge_for(&self, attr: &str) -> Option<(&ConfounderSpec, usize)> {
        for conf in &self.confounders {
            if let Some(i) = conf.edges.iter().position(|e| e.target == attr) {
                return Some((conf, i));
            }
        }
        None
    }

    /// Closed-form marginal distribution of one attribute under the
    /// generative process. The label is uniform over its classes; a themed
    /// attribute mixes the theme pushforward with a uniform draw.
    pub fn analytic_marginal(&self, attr: &str) -> Result<Vec<f64>, SpecError> {
        let a = self.schema.require(attr)?;
        if attr == self.schema.label_attribute {
            return Ok(vec![1.0 / a.cardinality as f64; a.cardinality]);
        }
        match self.edge_for(attr) {
            None => Ok(vec![1.0 / a.cardinality as f64; a.cardinality]),
            Some((conf, i)) => {
                let p = conf.edge_strength(i);
                let k = conf.state_count as f64;
                let d = a.cardinality as f64;
                let mut out = vec![(1.0 - p) / d; a.cardinality];
                for &v in &conf.edges[i].theme {
                    out[v] += p / k;
                }
                Ok(out)
            }
        }
    }

    /// Closed-form joint distribution over an attribute pair. Covers the
    /// label paired with any single-confounder attribute, and two attributes
    /// sharing one joint-mode confounder. Rows index the first attribute.
    pub fn analytic_joint(&self, attr_i: &str, attr_j: &str) -> Result<JointDistribution, SpecError> {
        let ai = self.schema.require(attr_i)?;
        let aj = self.schema.require(attr_j)?;
        if attr_i == attr_j {
            return Err(SpecError::NoCommonConfounder(
                attr_i.to_string(),
                attr_j.to_string(),
            ));
        }
        let label = self.schema.label_attribute.as_str();
        let (di, dj) = (ai.cardinality, aj.cardinality);

        let table: Vec<f64> = if attr_i == label || attr_j == label {
            let (other, other_d, label_rows) = if attr_i == label {
                (attr_j, dj, true)
            } else {
                (attr_i, di, false)
            };
            let (conf, i) = self.edge_for(other).ok_or_else(|| {
                SpecError::NoCommonConfounder(attr_i.to_string(), attr_j.to_string())
            })?;
            let p = conf.edge_strength(i);
            let theme = &conf.edges[i].theme;
            let k = conf.state_count;
            let kf = k as f64;
            let df = other_d as f64;
            // P(y, b) = (1/K) * (p * 1{b == theme(y)} + (1 - p)/d)
            let mut t = vec![0.0; di * dj];
            for y in 0..k {
                for b in 0..other_d {
                    let mut cell = (1.0 - p) / (kf * df);
                    if theme[y] == b {
                        cell += p / kf;
                    }
                    let (r, c) = if label_rows { (y, b) } else { (b, y) };
                    t[r * dj + c] = cell;
                }
            }
            t
        } else {
            let (ci, ei) = self.edge_for(attr_i).ok_or_else(|| {
                SpecError::NoCommonConfounder(attr_i.to_string(), attr_j.to_string())
            })?;
            let (cj, ej) = self.edge_for(attr_j).ok_or_else(|| {
                SpecError::NoCommonConfounder(attr_i.to_string(), attr_j.to_string())
            })?;
            if ci.id != cj.id {
                return Err(SpecError::NoCommonConfounder(
                    attr_i.to_string(),
                    attr_j.to_string(),
                ));
            }
            if ci.mode != ConfounderMode::Joint {
                return Err(SpecError::NotJointMode(
                    attr_i.to_string(),
                    attr_j.to_string(),
                ));
            }
            let p = ci.strength;
            let k = ci.state_count;
            let kf = k as f64;
            let theme_i = &ci.edges[ei].theme;
            let theme_j = &ci.edges[ej].theme;
            // P(a, b) = p * #{c : theme_i(c)=a, theme_j(c)=b}/K + (1-p)/(d_i d_j)
            let base = (1.0 - p) / (di as f64 * dj as f64);
            let mut t = vec![base; di * dj];
            for c in 0..k {
                t[theme_i[c] * dj + theme_j[c]] += p / kf;
            }
            t
        };

        Ok(JointDistribution::from_table(di, dj, table)
            .expect("closed-form table is a distribution"))
    }

    /// Twice the mutual information of the analytic joint, in nats: the
    /// closed-form confounding between the pair.
    pub fn analytic_confounding(&self, attr_i: &str, attr_j: &str) -> Result<f64, SpecError> {
        let joint = self.analytic_joint(attr_i, attr_j)?;
        Ok(2.0 * crate::metrics::mutual_information(&joint))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Label and foreground color confounded at strength `p`; thickness
    /// deterministic by class.
    Cm,
    /// Label, foreground color, and background color jointly confounded.
    Dcm,
    /// Label, foreground texture, and background color jointly confounded.
    Wlm,
}

impl FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cm" => Ok(Preset::Cm),
            "dcm" => Ok(Preset::Dcm),
            "wlm" => Ok(Preset::Wlm),
            other => Err(format!("unknown preset `{other}` (expected cm, dcm, or wlm)")),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Cm => "cm",
            Preset::Dcm => "dcm",
            Preset::Wlm => "wlm",
        })
    }
}

fn attribute(name: &str, cardinality: usize, role: AttributeRole, prefix: &str) -> Attribute {
    Attribute {
        name: name.to_string(),
        cardinality,
        role,
        value_labels: (0..cardinality).map(|v| format!("{prefix}{v}")).collect(),
    }
}

/// Builds one of the stock dataset specs with `d` classes at strength `p`.
pub fn preset_spec(preset: Preset, d: usize, p: f64, side: usize, seed: u64) -> CausalSpec {
    let identity: Vec<usize> = (0..d).collect();
    let shifted: Vec<usize> = (0..d).map(|c| (c + d / 2) % d).collect();
    let thickness_theme: Vec<usize> = (0..d).map(|c| usize::from(c >= d / 2)).collect();

    let mut attributes = vec![attribute("label", d, AttributeRole::Label, "class")];
    let mut confounders = Vec::new();

    match preset {
        Preset::Cm => {
            attributes.push(attribute("color", d, AttributeRole::ForegroundColor, "color"));
            confounders.push(ConfounderSpec {
                id: "c_style".to_string(),
                edges: vec![ThemeEdge {
                    target: "color".to_string(),
                    theme: identity,
                    strength: None,
                }],
                strength: p,
                mode: ConfounderMode::Joint,
                state_count: d,
            });
        }
        Preset::Dcm => {
            attributes.push(attribute("color", d, AttributeRole::ForegroundColor, "color"));
            attributes.push(attribute(
                "background",
                d,
                AttributeRole::BackgroundColor,
                "bg",
            ));
            confounders.push(ConfounderSpec {
                id: "c_style".to_string(),
                edges: vec![
                    ThemeEdge {
                        target: "color".to_string(),
                        theme: identity,
                        strength: None,
                    },
                    ThemeEdge {
                        target: "background".to_string(),
                        theme: shifted,
                        strength: None,
                    },
                ],
                strength: p,
                mode: ConfounderMode::Joint,
                state_count: d,
            });
        }
        Preset::Wlm => {
            let texture_theme: Vec<usize> = (0..d).map(|c| c % 5).collect();
            attributes.push(attribute("texture", 5.min(d), AttributeRole::Texture, "tex"));
            attributes.push(attribute(
                "background",
                d,
                AttributeRole::BackgroundColor,
                "bg",
            ));
            confounders.push(ConfounderSpec {
                id: "c_style".to_string(),
                edges: vec![
                    ThemeEdge {
                        target: "texture".to_string(),
                        theme: texture_theme.iter().map(|&v| v % 5.min(d)).collect(),
                        strength: None,
                    },
                    ThemeEdge {
                        target: "background".to_string(),
                        theme: shifted,
                        strength: None,
                    },
                ],
                strength: p,
                mode: ConfounderMode::Joint,
                state_count: d,
            });
        }
    }

    attributes.push(attribute("thickness", 2, AttributeRole::Thickness, "t"));
    confounders.push(ConfounderSpec {
        id: "c_thickness".to_string(),
        edges: vec![ThemeEdge {
            target: "thickness".to_string(),
            theme: thickness_theme,
            strength: None,
        }],
        strength: 1.0,
        mode: ConfounderMode::Joint,
        state_count: d,
    });

    CausalSpec {
        schema: AttributeSchema {
            attributes,
            label_attribute: "label".to_string(),
        },
        confounders,
        render: RenderParams::desk(side),
        seed,
    }
}

/// Minimal two-attribute process: a label and one themed attribute coupled
/// at strength `p` through a single joint confounder. The smallest spec that
/// still exhibits confounding; translation experiments run on it.
pub fn pair_spec(d: usize, p: f64, side: usize, seed: u64) -> CausalSpec {
    CausalSpec {
        schema: AttributeSchema {
            attributes: vec![
                attribute("label", d, AttributeRole::Label, "class"),
                attribute("color", d, AttributeRole::ForegroundColor, "color"),
            ],
            label_attribute: "label".to_string(),
        },
        confounders: vec![ConfounderSpec {
            id: "c_style".to_string(),
            edges: vec![ThemeEdge {
                target: "color".to_string(),
                theme: (0..d).collect(),
                strength: None,
            }],
            strength: p,
            mode: ConfounderMode::Joint,
            state_count: d,
        }],
        render: RenderParams::desk(side),
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{mutual_information, pearson_of_joint};

    fn cm(d: usize, p: f64) -> CausalSpec {
        preset_spec(Preset::Cm, d, p, 16, 7)
    }

    /// Test-side oracle: the joint over (label, color) by brute-force
    /// enumeration of every generative outcome (state, follow flag, uniform
    /// draws), independent of the closed form under test.
    fn enumerated_label_pair(d: usize, p: f64, theme: &[usize]) -> Vec<f64> {
        let k = d;
        let mut t = vec![0.0; d * d];
        for c in 0..k {
            let py = 1.0 / k as f64;
            t[c * d + theme[c]] += py * p;
            for b in 0..d {
                t[c * d + b] += py * (1.0 - p) / d as f64;
            }
        }
        t
    }

    #[test]
    fn well_formed_spec_validates() {
        cm(10, 0.95).validate().unwrap();
    }

    #[test]
    fn strength_outside_range_is_rejected() {
        let mut spec = cm(10, 1.3);
        let violations = spec.violations();
        assert!(violations.iter().any(|v| v.contains("strength outside [0,1]")));
        spec.confounders[0].strength = -0.1;
        assert!(!spec.violations().is_empty());
    }

    #[test]
    fn duplicate_attribute_name_is_rejected() {
        let mut spec = cm(4, 0.5);
        let mut extra = spec.schema.attributes[1].clone();
        extra.role = AttributeRole::BackgroundColor;
        spec.schema.attributes.push(extra);
        let violations = spec.violations();
        assert!(violations.iter().any(|v| v.contains("duplicate attribute name")));
    }

    #[test]
    fn partial_theme_table_is_rejected() {
        let mut spec = cm(10, 0.5);
        spec.confounders[0].edges[0].theme.pop();
        let violations = spec.violations();
        assert!(violations.iter().any(|v| v.contains("theme table not total")));
    }

    #[test]
    fn label_targeting_edge_is_rejected() {
        let mut spec = cm(4, 0.5);
        spec.confounders[0].edges.push(ThemeEdge {
            target: "label".to_string(),
            theme: (0..4).collect(),
            strength: None,
        });
        let violations = spec.violations();
        assert!(violations.iter().any(|v| v.contains("targets the label")));
    }

    #[test]
    fn analytic_joint_matches_enumeration_oracle() {
        for &(d, p) in &[(10usize, 0.95f64), (10, 0.4), (4, 0.95), (7, 0.0), (5, 1.0)] {
            let spec = cm(d, p);
            let joint = spec.analytic_joint("label", "color").unwrap();
            let oracle = enumerated_label_pair(d, p, &(0..d).collect::<Vec<_>>());
            for a in 0..d {
                for b in 0..d {
                    assert!(
                        (joint.cell(a, b) - oracle[a * d + b]).abs() < 1e-12,
                        "d={d} p={p} cell ({a},{b})"
                    );
                }
            }
        }
    }

    #[test]
    fn analytic_joint_cells_at_p95() {
        let joint = cm(10, 0.95).analytic_joint("label", "color").unwrap();
        assert!((joint.cell(3, 3) - 0.0955).abs() < 1e-15);
        assert!((joint.cell(3, 4) - 0.0005).abs() < 1e-15);
    }

    #[test]
    fn analytic_joint_independence_and_perfect_coupling() {
        let joint0 = cm(10, 0.0).analytic_joint("label", "color").unwrap();
        for a in 0..10 {
            for b in 0..10 {
                assert!((joint0.cell(a, b) - 0.01).abs() < 1e-15);
            }
        }
        let joint1 = cm(10, 1.0).analytic_joint("label", "color").unwrap();
        for a in 0..10 {
            for b in 0..10 {
                let expect = if a == b { 0.1 } else { 0.0 };
                assert!((joint1.cell(a, b) - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn analytic_confounding_frozen_values() {
        // Frozen from the closed form (cross-checked against the enumeration
        // oracle above): 2 * MI over the 100-cell table.
        let cases = [
            (0.10, 0.0732204),
            (0.20, 0.2552602),
            (0.50, 1.2513904),
            (0.90, 3.6045941),
            (0.95, 4.0403777),
        ];
        for (p, expect) in cases {
            let got = cm(10, p).analytic_confounding("label", "color").unwrap();
            assert!(
                (got - expect).abs() < 1e-6,
                "p={p}: got {got}, expected {expect}"
            );
        }
        assert!(cm(10, 0.0).analytic_confounding("label", "color").unwrap().abs() < 1e-12);
    }

    #[test]
    fn analytic_confounding_d4_frozen_value() {
        let got = cm(4, 0.95).analytic_confounding("label", "color").unwrap();
        assert!((got - 2.3703609).abs() < 1e-6, "got {got}");
    }

    #[test]
    fn analytic_confounding_monotone_in_strength() {
        let mut last = -1.0;
        for i in 0..=10 {
            let p = i as f64 / 10.0;
            let c = cm(10, p).analytic_confounding("label", "color").unwrap();
            assert!(c >= last, "not monotone at p={p}: {c} < {last}");
            last = c;
        }
    }

    #[test]
    fn analytic_joint_is_a_distribution() {
        for &p in &[0.0, 0.3, 0.77, 1.0] {
            let joint = cm(9, p).analytic_joint("label", "color").unwrap();
            let total: f64 = (0..9)
                .flat_map(|a| (0..9).map(move |b| (a, b)))
                .map(|(a, b)| joint.cell(a, b))
                .sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pearson_of_analytic_joint_equals_strength() {
        for &p in &[0.0, 0.25, 0.5, 0.95, 1.0] {
            let joint = cm(10, p).analytic_joint("label", "color").unwrap();
            let r = pearson_of_joint(&joint).unwrap();
            assert!((r - p).abs() < 1e-12, "p={p}, r={r}");
        }
    }

    #[test]
    fn pair_without_shared_confounder_errors() {
        let spec = cm(10, 0.95);
        let err = spec.analytic_joint("color", "thickness").unwrap_err();
        assert!(matches!(err, SpecError::NoCommonConfounder(_, _)));
    }

    #[test]
    fn joint_between_two_themed_attributes() {
        let spec = preset_spec(Preset::Dcm, 10, 0.95, 16, 7);
        let joint = spec.analytic_joint("color", "background").unwrap();
        // Theme pair (c, (c+5) % 10): coupled cells hold p/K + base.
        assert!((joint.cell(0, 5) - 0.0955).abs() < 1e-15);
        assert!((joint.cell(0, 6) - 0.0005).abs() < 1e-15);
        let mi = mutual_information(&joint);
        assert!((2.0 * mi - 4.0403777).abs() < 1e-6);
    }

    #[test]
    fn canonical_json_sorts_keys_and_hash_is_stable() {
        let spec = cm(4, 0.5);
        let canonical = spec.canonical_json().unwrap();
        assert!(!canonical.contains(' '), "no insignificant whitespace");
        let keys: Vec<_> = ["confounders", "render", "schema", "seed"]
            .iter()
            .map(|k| canonical.find(&format!("\"{k}\"")).unwrap())
            .collect();
        let mut sorted = keys.clone();
        sorted.sort_unstable();
        assert_eq!(keys, sorted, "top-level keys in lexicographic order");
        assert_eq!(spec.hash_hex().unwrap(), spec.hash_hex().unwrap());
        assert_ne!(
            spec.hash_hex().unwrap(),
            cm(4, 0.6).hash_hex().unwrap(),
            "different strength, different hash"
        );
    }

    #[test]
    fn zeroed_strengths_spec_is_independent() {
        let spec = cm(10, 0.95).strengths_zeroed();
        assert!(spec.analytic_confounding("label", "color").unwrap().abs() < 1e-12);
    }

    #[test]
    fn analytic_marginal_mixes_theme_and_uniform() {
        let spec = cm(10, 0.95);
        let m = spec.analytic_marginal("color").unwrap();
        assert!(m.iter().all(|&v| (v - 0.1).abs() < 1e-12));
        let t = spec.analytic_marginal("thickness").unwrap();
        assert!((t[0] - 0.5).abs() < 1e-12 && (t[1] - 0.5).abs() < 1e-12);
    }
}
