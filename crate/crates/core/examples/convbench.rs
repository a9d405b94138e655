use deconf_core::augment::{
    evaluate_mapper, partition_domains, pretrain_probe, train_mapper, MapperConfig, ProbeConfig,
};
use deconf_core::spec::{
    Attribute, AttributeRole, AttributeSchema, CausalSpec, ConfounderMode, ConfounderSpec,
    ThemeEdge,
};
use deconf_core::synth::{synth_dataset, RenderParams, Split};
use std::time::Instant;

pub fn mapper_desk_spec(d: usize, p: f64, seed: u64) -> CausalSpec {
    CausalSpec {
        schema: AttributeSchema {
            attributes: vec![
                Attribute { name: "label".into(), cardinality: d, role: AttributeRole::Label,
                    value_labels: (0..d).map(|v| format!("class{v}")).collect() },
                Attribute { name: "color".into(), cardinality: d, role: AttributeRole::ForegroundColor,
                    value_labels: (0..d).map(|v| format!("color{v}")).collect() },
            ],
            label_attribute: "label".into(),
        },
        confounders: vec![ConfounderSpec {
            id: "c_style".into(),
            edges: vec![ThemeEdge { target: "color".into(), theme: (0..d).collect(), strength: None }],
            strength: p,
            mode: ConfounderMode::Joint,
            state_count: d,
        }],
        render: RenderParams::desk(16),
        seed,
    }
}

fn main() {
    let seed = 1u64;
    let spec = mapper_desk_spec(4, 0.95, 200 + seed);
    let train = synth_dataset(&spec, 4000, Split::Train).unwrap();
    let val = synth_dataset(&spec, 1000, Split::Test).unwrap();

    let probe_cfg = ProbeConfig { steps: 1200, seed, ..ProbeConfig::default() };
    let t0 = Instant::now();
    let probe_color = pretrain_probe(&train, &val, "color", &probe_cfg).unwrap();
    let probe_label = pretrain_probe(&train, &val, "label", &ProbeConfig { seed: seed ^ 9, ..probe_cfg.clone() }).unwrap();
    println!("probes ok ({:.0}s)", t0.elapsed().as_secs_f64());

    let pair = partition_domains(&train, "color", 1, "label", 1).unwrap();
    println!("|T1|={} |T2|={}", pair.t1.len(), pair.t2.len());

    let t0 = Instant::now();
    let cfg = MapperConfig { steps: 1500, batch: 32, seed, log_every: 250, ..MapperConfig::desk(seed) };
    let mapper = train_mapper(&train, &pair, probe_color, probe_label, "color", 1, "label", 1, &cfg).unwrap();
    println!("mapper trained ({:.0}s)", t0.elapsed().as_secs_f64());

    let eval_ds = synth_dataset(&spec, 2000, Split::Test).unwrap();
    let ci = eval_ds.schema.index_of("color").unwrap();
    let li = eval_ds.schema.index_of("label").unwrap();
    let idxs: Vec<usize> = (0..eval_ds.len())
        .filter(|&i| {
            let a = &eval_ds.samples[i].assignment;
            a.value(ci) != 1 && a.value(li) == 1
        })
        .collect();
    let eval = evaluate_mapper(&mapper, &eval_ds, &idxs).unwrap();
    println!("eval n={}: target_acc={:.3} keep_agree={:.3} cycle_mae={:.4}",
        eval.n, eval.target_accuracy, eval.keep_agreement, eval.cycle_mae);
}
