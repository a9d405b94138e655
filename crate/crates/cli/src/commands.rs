//! Subcommand implementations. Every command writes exactly one run
//! manifest next to its primary output; all randomness descends from the
//! seed flags.

use anyhow::{anyhow, bail, Context, Result};
use serde_json::json;
use std::path::{Path, PathBuf};

use deconf_core::augment::{
    generate_cfs, pretrain_probe, run_edge_augmentation, train_mapper,
    AdversarialLoss, AugmentRun, AugmentedDataset, Budget, ConfoundingEdge, DomainPair,
    EdgePartner, LearnedMapper, Mapper, MapperConfig, Probe, ProbeConfig,
};
use deconf_core::classify::{evaluate, train_aug, train_erm, ClassifierConfig, Model};
use deconf_core::metrics::{
    confounding_marginal_assumption, empirical_joint, pearson, report, write_scatter_svg,
};
use deconf_core::spec::{pair_spec, preset_spec, CausalSpec, Preset};
use deconf_core::synth::{read_dataset, synth_dataset, write_dataset, Dataset, MapperKind, Split};

use crate::manifest::ManifestBuilder;

/// Relative output paths land under `DECONF_OUT_ROOT` when it is set.
fn resolve(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os("DECONF_OUT_ROOT") {
        Some(root) => Path::new(&root).join(path),
        None => path.to_path_buf(),
    }
}

fn load_spec(path: &Path) -> Result<CausalSpec> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading spec {}", path.display()))?;
    let spec: CausalSpec = serde_json::from_str(&text).context("parsing spec JSON")?;
    Ok(spec)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

pub fn spec_init(preset: &str, d: usize, p: f64, side: usize, seed: u64, out: &Path) -> Result<()> {
    let preset: Preset = preset.parse().map_err(|e: String| anyhow!(e))?;
    let spec = preset_spec(preset, d, p, side, seed);
    spec.validate()?;
    let out = resolve(out);
    ensure_parent(&out)?;
    std::fs::write(&out, spec.canonical_json()?)?;
    println!("wrote {} (hash {})", out.display(), spec.hash_hex()?);
    let mut mb = ManifestBuilder::new(
        "spec init",
        json!({"preset": preset.to_string(), "d": d, "p": p, "side": side}),
        Some(seed),
    );
    mb.output(&out);
    mb.write(&out)?;
    Ok(())
}

pub fn spec_validate(spec_path: &Path) -> Result<()> {
    let spec = load_spec(spec_path)?;
    let violations = spec.violations();
    if violations.is_empty() {
        println!("OK {}", spec.hash_hex()?);
        Ok(())
    } else {
        for v in &violations {
            eprintln!("violation: {v}");
        }
        bail!("{} violation(s)", violations.len());
    }
}

pub fn synth(spec_path: &Path, n: usize, split: &str, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut spec = load_spec(spec_path)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let split: Split = split.parse().map_err(|e: String| anyhow!(e))?;
    let dataset = synth_dataset(&spec, n, split)?;
    let out = resolve(out);
    write_dataset(&out, &dataset)?;
    println!(
        "wrote {} ({} samples, split {split}, spec {})",
        out.display(),
        dataset.len(),
        &dataset.spec_hash[..12]
    );
    let mut mb = ManifestBuilder::new(
        "synth",
        json!({"n": n, "split": split.to_string()}),
        Some(spec.seed),
    );
    mb.input(spec_path).output(&out);
    mb.write(&out)?;
    Ok(())
}

pub fn measure(data: &Path, spec_path: Option<&Path>, out: &Path, svg: Option<&Path>) -> Result<()> {
    let dataset = read_dataset(data)?;
    let spec = spec_path.map(load_spec).transpose()?;
    let rep = report(&dataset, spec.as_ref())?;
    let out = resolve(out);
    ensure_parent(&out)?;
    let csv_path = out.with_extension("csv");
    let json_path = out.with_extension("json");
    std::fs::write(&csv_path, rep.to_csv_string())?;
    std::fs::write(&json_path, rep.to_json_string()?)?;
    for pair in &rep.pairs {
        println!(
            "{} / {}: confounding {:.4} nats, pearson {}",
            pair.attr_i,
            pair.attr_j,
            pair.confounding,
            pair.pearson
                .map(|r| format!("{r:.4}"))
                .unwrap_or_else(|| "n/a".to_string())
        );
    }
    let mut mb = ManifestBuilder::new("measure", json!({"pairs": rep.pairs.len()}), None);
    mb.input(data).output(&csv_path).output(&json_path);
    if let Some(svg_path) = svg {
        let svg_path = resolve(svg_path);
        write_scatter_svg(
            &svg_path,
            &rep.scatter_points(),
            "pearson correlation",
            "confounding (nats)",
            "attribute pairs",
        )?;
        mb.output(&svg_path);
    }
    mb.write(&csv_path)?;
    Ok(())
}

pub fn table3(
    d: usize,
    grid: &[f64],
    n: usize,
    seed: u64,
    out: &Path,
    svg: Option<&Path>,
) -> Result<()> {
    let out = resolve(out);
    ensure_parent(&out)?;
    let mut csv = String::from("p,pearson,confounding_nats,analytic_nats\n");
    let mut points = Vec::new();
    for (i, &p) in grid.iter().enumerate() {
        let spec = pair_spec(d, p, 16, seed.wrapping_add(i as u64));
        let dataset = synth_dataset(&spec, n, Split::Train)?;
        let joint = empirical_joint(&dataset, "label", "color", 0.0)?;
        let measured = confounding_marginal_assumption(&joint)?;
        let analytic = spec.analytic_confounding("label", "color")?;
        let r = pearson(&dataset, "label", "color")?;
        println!("p={p:.2}: pearson {r:.4}, confounding {measured:.4} nats (closed form {analytic:.4})");
        csv.push_str(&format!("{p},{r:.6},{measured:.6},{analytic:.6}\n"));
        points.push((r, measured));
    }
    std::fs::write(&out, &csv)?;
    let mut mb = ManifestBuilder::new(
        "table3",
        json!({"d": d, "grid": grid, "n": n}),
        Some(seed),
    );
    mb.output(&out);
    if let Some(svg_path) = svg {
        let svg_path = resolve(svg_path);
        write_scatter_svg(
            &svg_path,
            &points,
            "pearson correlation",
            "confounding (nats)",
            "correlation vs confounding",
        )?;
        mb.output(&svg_path);
    }
    mb.write(&out)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn probes(
    data: &Path,
    attr: &str,
    val: Option<&Path>,
    spec_path: Option<&Path>,
    out: &Path,
    steps: usize,
    batch: usize,
    min_accuracy: f64,
    seed: u64,
) -> Result<()> {
    let train = read_dataset(data)?;
    let validation = match (val, spec_path) {
        (Some(v), _) => read_dataset(v)?,
        (None, Some(sp)) => synth_dataset(&load_spec(sp)?, 1000, Split::Test)?,
        (None, None) => bail!("probe validation needs --val DIR or --spec FILE"),
    };
    let config = ProbeConfig {
        steps,
        batch_pairs: batch,
        min_accuracy,
        seed,
        ..ProbeConfig::default()
    };
    let probe = pretrain_probe(&train, &validation, attr, &config)?;
    let accuracy = deconf_core::augment::probe_accuracy(&probe, &validation)?;
    let out = resolve(out);
    probe.save(&out)?;
    println!(
        "wrote {} (attribute {attr}, validation accuracy {accuracy:.4}, params {})",
        out.display(),
        probe.params_hash()
    );
    let mut mb = ManifestBuilder::new(
        "probes",
        json!({"attr": attr, "steps": steps, "accuracy": accuracy}),
        Some(seed),
    );
    mb.input(data).output(&out);
    mb.write(&out)?;
    Ok(())
}

/// Parses a domain filter like "color!=1,label=2" into clauses.
fn parse_filter(filter: &str) -> Result<Vec<(String, bool, usize)>> {
    let mut clauses = Vec::new();
    for piece in filter.split(',') {
        let piece = piece.trim();
        if piece.is_empty() {
            continue;
        }
        let (attr, equals, value) = if let Some((a, v)) = piece.split_once("!=") {
            (a, false, v)
        } else if let Some((a, v)) = piece.split_once('=') {
            (a, true, v)
        } else {
            bail!("bad filter clause `{piece}` (expected attr=V or attr!=V)");
        };
        clauses.push((
            attr.trim().to_string(),
            equals,
            value
                .trim()
                .parse()
                .with_context(|| format!("bad value in `{piece}`"))?,
        ));
    }
    if clauses.is_empty() {
        bail!("empty domain filter");
    }
    Ok(clauses)
}

fn apply_filter(data: &Dataset, clauses: &[(String, bool, usize)]) -> Result<Vec<usize>> {
    let mut resolved = Vec::new();
    for (attr, equals, value) in clauses {
        let idx = data
            .schema
            .index_of(attr)
            .ok_or_else(|| anyhow!("unknown attribute `{attr}` in filter"))?;
        resolved.push((idx, *equals, *value));
    }
    Ok((0..data.len())
        .filter(|&i| {
            resolved.iter().all(|&(idx, equals, value)| {
                (data.samples[i].assignment.value(idx) == value) == equals
            })
        })
        .collect())
}

fn filter_equality(clauses: &[(String, bool, usize)], attr: &str) -> Result<usize> {
    clauses
        .iter()
        .find(|(a, equals, _)| a == attr && *equals)
        .map(|(_, _, v)| *v)
        .ok_or_else(|| anyhow!("the --t2 filter must pin `{attr}` with an equality clause"))
}

#[allow(clippy::too_many_arguments)]
pub fn mapper(
    data: &Path,
    t1: &str,
    t2: &str,
    probe_target_path: &Path,
    probe_keep_path: &Path,
    alpha: f64,
    steps: usize,
    batch: usize,
    gan_loss: &str,
    seed: u64,
    log_every: usize,
    out: &Path,
) -> Result<()> {
    let dataset = read_dataset(data)?;
    let probe_target = Probe::load(probe_target_path)?;
    let probe_keep = Probe::load(probe_keep_path)?;
    let t1_clauses = parse_filter(t1)?;
    let t2_clauses = parse_filter(t2)?;
    let target_value = filter_equality(&t2_clauses, &probe_target.attribute)?;
    let keep_value = filter_equality(&t2_clauses, &probe_keep.attribute)?;
    let pair = DomainPair {
        t1: apply_filter(&dataset, &t1_clauses)?,
        t2: apply_filter(&dataset, &t2_clauses)?,
    };
    println!("|T1| = {}, |T2| = {}", pair.t1.len(), pair.t2.len());

    let adversarial = match gan_loss {
        "least_squares" | "lsgan" => AdversarialLoss::LeastSquares,
        "logistic" => AdversarialLoss::Logistic,
        other => bail!("unknown GAN loss `{other}`"),
    };
    let config = MapperConfig {
        steps,
        batch,
        alpha,
        adversarial,
        seed,
        log_every,
        ..MapperConfig::default()
    };
    let target_attr = probe_target.attribute.clone();
    let keep_attr = probe_keep.attribute.clone();
    let learned = train_mapper(
        &dataset,
        &pair,
        probe_target,
        probe_keep,
        &target_attr,
        target_value,
        &keep_attr,
        keep_value,
        &config,
    )?;
    let out = resolve(out);
    learned.save(&out)?;
    println!(
        "wrote {} (translates {target_attr} -> {target_value}, preserves {keep_attr})",
        out.display()
    );
    let mut mb = ManifestBuilder::new(
        "mapper",
        json!({"t1": t1, "t2": t2, "alpha": alpha, "steps": steps, "batch": batch}),
        Some(seed),
    );
    mb.input(data)
        .input(probe_target_path)
        .input(probe_keep_path)
        .output(&out)
        .not_reproducible("learned-mapper training is exempt from the reproducibility guarantee");
    mb.write(&out)?;
    Ok(())
}

pub fn augment(
    data: &Path,
    spec_path: &Path,
    edge: &str,
    mapper_arg: &str,
    budget: &str,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let dataset = read_dataset(data)?;
    let spec = load_spec(spec_path)?;
    let budget: Budget = budget.parse().map_err(|e: String| anyhow!(e))?;
    let out = resolve(out);

    let counterfactuals = if mapper_arg == "oracle" {
        let run = AugmentRun {
            budget,
            mapper_kind: MapperKind::Oracle,
            seed,
            probe_config: ProbeConfig::default(),
            mapper_config: MapperConfig::desk(seed),
        };
        if edge == "all" {
            deconf_core::augment::run_full_augmentation(&dataset, &spec, &run, None)?
                .counterfactuals
        } else {
            let (confounder, target) = edge
                .split_once(':')
                .ok_or_else(|| anyhow!("edge must be `confounder:target` or `all`"))?;
            let edge = ConfoundingEdge::from_spec(&spec, &dataset, confounder, target)?;
            run_edge_augmentation(&dataset, &spec, &edge, &run, None)?.counterfactuals
        }
    } else {
        let learned = LearnedMapper::load(Path::new(mapper_arg))?;
        let partner = EdgePartner {
            attr: learned.keep_attr.clone(),
            target_value: learned.target_value,
            keep_value: learned.keep_value,
        };
        let target_attr = learned.target_attr.clone();
        let mapper = Mapper::Learned(Box::new(learned));
        generate_cfs(&dataset, &mapper, &partner, &target_attr, budget, seed)?
    };

    let aug = AugmentedDataset {
        base: dataset,
        counterfactuals,
    };
    if !aug.one_attribute_delta_holds() {
        bail!("internal error: a counterfactual differs from its source in more than one attribute");
    }
    let batch = aug.counterfactual_batch();
    if batch.is_empty() {
        std::fs::create_dir_all(&out)?;
        // an empty batch still leaves a well-formed marker
        std::fs::write(out.join("EMPTY"), "0 counterfactuals\n")?;
    } else {
        write_dataset(&out, &batch)?;
    }
    println!("wrote {} ({} counterfactuals)", out.display(), batch.len());
    let mut mb = ManifestBuilder::new(
        "augment",
        json!({"edge": edge, "mapper": mapper_arg, "budget": format!("{budget:?}")}),
        Some(seed),
    );
    mb.input(data).input(spec_path).output(&out);
    mb.write(&out)?;
    Ok(())
}

pub fn train(
    data: &Path,
    aug_dir: Option<&Path>,
    lambda: f64,
    epochs: usize,
    batch: usize,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let base = read_dataset(data)?;
    let counterfactuals = match aug_dir {
        Some(dir) if !dir.join("EMPTY").exists() => read_dataset(dir)?.samples,
        _ => Vec::new(),
    };
    let aug = AugmentedDataset {
        base,
        counterfactuals,
    };
    let config = ClassifierConfig {
        lambda,
        epochs,
        batch,
        seed,
        ..ClassifierConfig::default()
    };
    let model = train_aug(&aug, &config)?;
    let out = resolve(out);
    model.save(&out)?;
    println!(
        "wrote {} ({} samples, final epoch loss {:.6})",
        out.display(),
        aug.len(),
        model.epoch_losses.last().unwrap_or(&f64::NAN)
    );
    let mut mb = ManifestBuilder::new(
        "train",
        json!({"lambda": lambda, "epochs": epochs, "batch": batch, "n": aug.len()}),
        Some(seed),
    );
    mb.input(data);
    if let Some(dir) = aug_dir {
        mb.input(dir);
    }
    mb.output(&out);
    mb.write(&out)?;
    Ok(())
}

pub fn eval(model_path: &Path, test: &Path, out: &Path) -> Result<()> {
    let model = Model::load(model_path)?;
    let dataset = read_dataset(test)?;
    let report = evaluate(&model, &dataset)?;
    let out = resolve(out);
    ensure_parent(&out)?;
    let json_path = out.with_extension("json");
    let csv_path = out.with_extension("csv");
    std::fs::write(&json_path, report.to_json_string()?)?;
    std::fs::write(&csv_path, report.to_csv_string())?;
    println!(
        "accuracy {:.4} over {} samples",
        report.overall_accuracy, report.n
    );
    let mut mb = ManifestBuilder::new(
        "eval",
        json!({"accuracy": report.overall_accuracy}),
        Some(report.seed),
    );
    mb.input(model_path).input(test).output(&json_path).output(&csv_path);
    mb.write(&json_path)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn e2e(
    preset: &str,
    p: f64,
    d: usize,
    n: usize,
    test_n: usize,
    seed: u64,
    lambda: f64,
    budget: &str,
    epochs: usize,
    outdir: &Path,
) -> Result<()> {
    let preset: Preset = preset.parse().map_err(|e: String| anyhow!(e))?;
    let budget: Budget = budget.parse().map_err(|e: String| anyhow!(e))?;
    let outdir = resolve(outdir);
    std::fs::create_dir_all(&outdir)?;

    let spec = preset_spec(preset, d, p, 16, seed);
    spec.validate()?;
    std::fs::write(outdir.join("spec.json"), spec.canonical_json()?)?;

    println!("[1/6] synthesizing train ({n}) and unconfounded test ({test_n})");
    let train_ds = synth_dataset(&spec, n, Split::Train)?;
    let test_ds = synth_dataset(&spec, test_n, Split::Test)?;
    write_dataset(&outdir.join("train"), &train_ds)?;
    write_dataset(&outdir.join("test"), &test_ds)?;

    println!("[2/6] measuring confounding before augmentation");
    let before = report(&train_ds, Some(&spec))?;
    std::fs::write(outdir.join("confounding_before.csv"), before.to_csv_string())?;

    println!("[3/6] oracle counterfactual augmentation ({budget:?}, every edge)");
    let run = AugmentRun {
        budget,
        mapper_kind: MapperKind::Oracle,
        seed,
        probe_config: ProbeConfig::default(),
        mapper_config: MapperConfig::desk(seed),
    };
    let aug = deconf_core::augment::run_full_augmentation(&train_ds, &spec, &run, None)?;
    if !aug.counterfactuals.is_empty() {
        write_dataset(&outdir.join("cfs"), &aug.counterfactual_batch())?;
    }
    let after = report(&aug.combined(), Some(&spec))?;
    std::fs::write(outdir.join("confounding_after.csv"), after.to_csv_string())?;

    println!("[4/6] training the plain empirical-risk classifier");
    let config = ClassifierConfig {
        lambda,
        epochs,
        seed,
        ..ClassifierConfig::default()
    };
    let erm = train_erm(&train_ds, &config)?;
    erm.save(&outdir.join("erm.ckpt"))?;

    println!("[5/6] training the augmented classifier (lambda {lambda})");
    let augmented = train_aug(&aug, &config)?;
    augmented.save(&outdir.join("augmented.ckpt"))?;

    println!("[6/6] evaluating on the unconfounded test split");
    let erm_report = evaluate(&erm, &test_ds)?;
    let aug_report = evaluate(&augmented, &test_ds)?;
    std::fs::write(outdir.join("erm_eval.json"), erm_report.to_json_string()?)?;
    std::fs::write(outdir.join("augmented_eval.json"), aug_report.to_json_string()?)?;

    let pick = |rep: &deconf_core::metrics::ConfoundingReport| -> f64 {
        rep.pairs
            .iter()
            .map(|p| p.confounding)
            .fold(0.0f64, f64::max)
    };
    println!();
    println!("summary (preset {preset}, p {p}, seed {seed})");
    println!("  max pair confounding before: {:.4} nats", pick(&before));
    println!("  max pair confounding after:  {:.4} nats", pick(&after));
    println!("  counterfactuals:             {}", aug.counterfactuals.len());
    println!("  model        accuracy");
    println!("  erm          {:.4}", erm_report.overall_accuracy);
    println!("  augmented    {:.4}", aug_report.overall_accuracy);

    let mut mb = ManifestBuilder::new(
        "e2e",
        json!({
            "preset": preset.to_string(), "p": p, "d": d, "n": n, "test_n": test_n,
            "lambda": lambda, "budget": format!("{budget:?}"), "epochs": epochs,
            "erm_accuracy": erm_report.overall_accuracy,
            "augmented_accuracy": aug_report.overall_accuracy,
        }),
        Some(seed),
    );
    mb.output(&outdir);
    mb.write(&outdir)?;
    Ok(())
}
