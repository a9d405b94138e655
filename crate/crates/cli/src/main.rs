//! `deconf`: synthesize confounded image datasets from a causal spec,
//! measure the confounding between attribute pairs, remove it with
//! counterfactual augmentation, and score downstream classifiers on
//! unconfounded test splits.

mod commands;
mod manifest;

use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "deconf",
    version,
    about = "Causal synthetic-data workbench: synthesis, confounding measurement, counterfactual augmentation"
)]
struct Cli {
    /// Cap the internal worker thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create or validate causal generative spec files.
    Spec {
        #[command(subcommand)]
        action: SpecAction,
    },
    /// Sample a dataset container from a spec.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value = "train")]
        split: String,
        #[arg(long)]
        out: PathBuf,
        /// Override the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Measure mutual information, directed information, confounding, and
    /// correlation for every attribute pair of a dataset.
    Measure {
        #[arg(long)]
        data: PathBuf,
        /// Spec file enabling the closed-form cross-check column.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Base path; writes <out>.csv and <out>.json.
        #[arg(long)]
        out: PathBuf,
        /// Also draw the (correlation, confounding) scatter.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Sweep confounding strength on a label/color pair and report measured
    /// against closed-form confounding, one row per strength.
    Table3 {
        #[arg(long, default_value_t = 10)]
        d: usize,
        #[arg(long, default_value = "0.1,0.2,0.5,0.9,0.95", value_delimiter = ',')]
        grid: Vec<f64>,
        #[arg(long, default_value_t = 60000)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Pretrain a frozen attribute probe with the margin contrastive loss.
    Probes {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        attr: String,
        /// Unconfounded validation container; alternative to --spec.
        #[arg(long)]
        val: Option<PathBuf>,
        /// Spec to synthesize a validation batch from, when --val is absent.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1200)]
        steps: usize,
        #[arg(long, default_value_t = 64)]
        batch: usize,
        #[arg(long, default_value_t = 0.95)]
        min_accuracy: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Train the conditional cycle-consistent translator between two domain
    /// filters, regularized by two frozen probes.
    Mapper {
        #[arg(long)]
        data: PathBuf,
        /// Source-domain filter, e.g. "color!=1,label=1".
        #[arg(long)]
        t1: String,
        /// Target-domain filter, e.g. "color=1,label=1".
        #[arg(long)]
        t2: String,
        /// Probe checkpoint for the attribute being changed.
        #[arg(long)]
        probe_target: PathBuf,
        /// Probe checkpoint for the attribute being preserved.
        #[arg(long)]
        probe_keep: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1500)]
        steps: usize,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, default_value = "least_squares")]
        gan_loss: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        log_every: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate counterfactuals along a confounding edge and write them as a
    /// dataset container with origin columns.
    Augment {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        /// "confounder:target", or "all" for every confounding edge.
        #[arg(long)]
        edge: String,
        /// "oracle" or a learned-mapper directory.
        #[arg(long)]
        mapper: String,
        /// "count:N" or "balance".
        #[arg(long)]
        budget: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the downstream classifier on a dataset, optionally augmented
    /// with a counterfactual batch.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        aug: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long, default_value_t = 256)]
        batch: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a trained classifier on a test container.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Base path; writes <out>.json and <out>.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Full pipeline: synth, measure, oracle augmentation, train both
    /// classifiers, evaluate, and print a summary table.
    E2e {
        #[arg(long, default_value = "cm")]
        preset: String,
        #[arg(long, default_value_t = 0.95)]
        p: f64,
        #[arg(long, default_value_t = 10)]
        d: usize,
        #[arg(long, default_value_t = 4000)]
        n: usize,
        #[arg(long, default_value_t = 2000)]
        test_n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        #[arg(long, default_value = "balance")]
        budget: String,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long)]
        outdir: PathBuf,
    },
}

#[derive(Subcommand)]
enum SpecAction {
    /// Emit a stock spec (cm, dcm, or wlm) as canonical JSON.
    Init {
        #[arg(long, default_value = "cm")]
        preset: String,
        #[arg(long, default_value_t = 10)]
        d: usize,
        #[arg(long, default_value_t = 0.95)]
        p: f64,
        #[arg(long, default_value_t = 16)]
        side: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a spec file against every structural invariant.
    Validate {
        #[arg(long)]
        spec: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let result = match cli.command {
        Command::Spec { action } => match action {
            SpecAction::Init {
                preset,
                d,
                p,
                side,
                seed,
                out,
            } => commands::spec_init(&preset, d, p, side, seed, &out),
            SpecAction::Validate { spec } => commands::spec_validate(&spec),
        },
        Command::Synth {
            spec,
            n,
            split,
            out,
            seed,
        } => commands::synth(&spec, n, &split, &out, seed),
        Command::Measure {
            data,
            spec,
            out,
            svg,
        } => commands::measure(&data, spec.as_deref(), &out, svg.as_deref()),
        Command::Table3 {
            d,
            grid,
            n,
            seed,
            out,
            svg,
        } => commands::table3(d, &grid, n, seed, &out, svg.as_deref()),
        Command::Probes {
            data,
            attr,
            val,
            spec,
            out,
            steps,
            batch,
            min_accuracy,
            seed,
        } => commands::probes(
            &data,
            &attr,
            val.as_deref(),
            spec.as_deref(),
            &out,
            steps,
            batch,
            min_accuracy,
            seed,
        ),
        Command::Mapper {
            data,
            t1,
            t2,
            probe_target,
            probe_keep,
            alpha,
            steps,
            batch,
            gan_loss,
            seed,
            log_every,
            out,
        } => commands::mapper(
            &data,
            &t1,
            &t2,
            &probe_target,
            &probe_keep,
            alpha,
            steps,
            batch,
            &gan_loss,
            seed,
            log_every,
            &out,
        ),
        Command::Augment {
            data,
            spec,
            edge,
            mapper,
            budget,
            seed,
            out,
        } => commands::augment(&data, &spec, &edge, &mapper, &budget, seed, &out),
        Command::Train {
            data,
            aug,
            lambda,
            epochs,
            batch,
            seed,
            out,
        } => commands::train(&data, aug.as_deref(), lambda, epochs, batch, seed, &out),
        Command::Eval { model, test, out } => commands::eval(&model, &test, &out),
        Command::E2e {
            preset,
            p,
            d,
            n,
            test_n,
            seed,
            lambda,
            budget,
            epochs,
            outdir,
        } => commands::e2e(&preset, p, d, n, test_n, seed, lambda, &budget, epochs, &outdir),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
